// Criteria 6 and 7: metric identities on crafted inputs, and the
// determinism / serialization battery (repeat a small run bit-for-bit,
// round-trip every container format, and confirm reconstruction is
// chunk-size independent).
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "criteria.hpp"
#include "s2ct/drr.hpp"
#include "s2ct/metrics.hpp"
#include "s2ct/phantom.hpp"
#include "s2ct/pipeline.hpp"
#include "s2ct/rckp.hpp"
#include "s2ct/recon_model.hpp"
#include "s2ct/run_config.hpp"
#include "s2ct/rvol.hpp"
#include "s2ct/trainer.hpp"
#include "s2ct/volume.hpp"

namespace acceptance {

using namespace s2ct;
namespace fs = std::filesystem;

namespace {

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

bool files_equal(const std::string& a, const std::string& b) {
    auto ba = slurp(a), bb = slurp(b);
    return !ba.empty() && ba == bb;
}

// Trainlog rows with the wall-clock column dropped.
std::vector<std::string> log_rows_sans_seconds(const std::string& path) {
    std::vector<std::string> rows;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        auto cut = line.rfind(',');
        rows.push_back(cut == std::string::npos ? line : line.substr(0, cut));
    }
    return rows;
}

LabelVolume labels_of(int dim, int first_one, int count_one) {
    LabelVolume lv;
    lv.dims = {dim, dim, dim};
    lv.spacing_mm = {1.0f, 1.0f, 1.0f};
    lv.data.assign(static_cast<size_t>(dim) * dim * dim, 0);
    for (int i = 0; i < count_one; ++i) lv.data[first_one + i] = 1;
    return lv;
}

RunConfig tiny_cfg(const std::string& out_dir) {
    RunConfig cfg;
    cfg.out_dir = out_dir;
    cfg.n_train = 2;
    cfg.n_val = 1;
    cfg.n_test = 1;
    cfg.dim = 16;
    cfg.spacing_mm = 8.0f;
    cfg.detector_px = 16;
    cfg.views = {0.0f, 90.0f};
    cfg.view_counts = {1};
    cfg.lambda = 0.1f;
    cfg.epochs = 2;
    cfg.points_per_step = 256;
    cfg.dice_every = 2;
    cfg.seg_epochs = 2;
    cfg.feature_channels = 8;
    cfg.fourier_m = 6;
    cfg.width = 24;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

Result metric_identities() {
    Result r;
    std::ostringstream d;

    LabeledVolume lv = generate_phantom(PhantomSpec{});
    Volume norm =
        normalized_to_volume(volume_to_normalized(lv.hu), lv.hu.dims, lv.hu.spacing_mm);
    const double p_self = psnr(norm, norm);
    const double s_self = ssim(norm, norm);
    bool psnr_ok = p_self == 100.0;
    bool ssim_ok = std::abs(s_self - 1.0) < 1e-12;

    // 4^3 grids: identical, disjoint, and exactly half-overlapping masks.
    LabelVolume full = labels_of(4, 0, 64);
    LabelVolume lower = labels_of(4, 0, 32);
    LabelVolume upper = labels_of(4, 32, 32);
    LabelVolume middle = labels_of(4, 16, 32);
    const double dice_same = hard_dice(full, full, 1);
    const double dice_disjoint = hard_dice(lower, upper, 1);
    const double dice_half = hard_dice(lower, middle, 1);
    bool dice_ok = dice_same == 1.0 && dice_disjoint == 0.0 && dice_half == 0.5;

    r.pass = psnr_ok && ssim_ok && dice_ok;
    d << "self PSNR " << p_self << " dB, self SSIM " << s_self << ", Dice same/disjoint/half "
      << dice_same << "/" << dice_disjoint << "/" << dice_half;
    r.detail = d.str();
    return r;
}

Result determinism_suite(const std::string& root) {
    Result r;
    std::ostringstream d;
    bool ok = true;

    const std::string a = root + "/det_a";
    const std::string b = root + "/det_b";
    std::ostringstream quiet;
    std::cerr << "  [determinism] running the small pipeline twice\n";
    run_pipeline(tiny_cfg(a), quiet);
    run_pipeline(tiny_cfg(b), quiet);

    const char* rel[] = {
        "data/case_0000.hu.rvol",
        "data/case_0000.labels.rvol",
        "data/views/case_0000.view000.rimg",
        "seg/model.seg.rckp",
        "recon_k1/model_best.rckp",
        "recon_k1/model_final.rckp",
        "recon_k1/model_final.opt.rckp",
        "recon_k1/test/case_0003.recon.rvol",
        "metrics.csv",
        "dose.csv",
    };
    for (const char* p : rel) {
        if (!files_equal(a + "/" + p, b + "/" + p)) {
            ok = false;
            d << "repeat-run mismatch in " << p << "; ";
        }
    }
    if (log_rows_sans_seconds(a + "/recon_k1/trainlog.csv") !=
        log_rows_sans_seconds(b + "/recon_k1/trainlog.csv")) {
        ok = false;
        d << "repeat-run trainlog rows differ; ";
    }

    // Round-trips: read each format back and rewrite it; bytes must match.
    const std::string rt = root + "/roundtrip";
    fs::create_directories(rt);
    {
        const std::string src = a + "/data/case_0000.hu.rvol";
        write_rvol_hu(read_rvol_f32(src, RvolKind::Hu), rt + "/hu.rvol");
        if (!files_equal(src, rt + "/hu.rvol")) ok = false, d << "hu rvol round-trip; ";
    }
    {
        const std::string src = a + "/data/case_0000.labels.rvol";
        write_rvol_labels(read_rvol_labels(src), rt + "/labels.rvol");
        if (!files_equal(src, rt + "/labels.rvol")) ok = false, d << "labels rvol round-trip; ";
    }
    {
        const std::string src = a + "/data/views/case_0000.view090.rimg";
        write_drr_rimg(read_drr_rimg(src), rt + "/view.rimg");
        if (!files_equal(src, rt + "/view.rimg")) ok = false, d << "rimg round-trip; ";
    }
    {
        const std::string src = a + "/recon_k1/model_best.rckp";
        save_rckp(load_rckp(src), rt + "/ckpt.rckp");
        if (!files_equal(src, rt + "/ckpt.rckp")) ok = false, d << "rckp round-trip; ";
    }

    // Chunk independence: the same model and views, three chunk sizes.
    std::cerr << "  [determinism] chunk-size sweep\n";
    RunConfig cfg = tiny_cfg(a);
    ReconModel model = load_recon_model(a + "/recon_k1/model_best");
    const std::vector<float> angles = angles_for_count(cfg.views, 1);
    TrainCase tc = load_train_case(a + "/data", "case_0003", angles, cfg.geometry());
    Volume ref;
    double worst = 0.0;
    for (int chunk : {4096, 97, 100000}) {
        Volume v = model.reconstruct_volume(tc.views, tc.geometries, cfg.dim, cfg.spacing_mm,
                                            chunk);
        if (ref.data.empty()) {
            ref = std::move(v);
            continue;
        }
        for (size_t i = 0; i < ref.data.size(); ++i) {
            // Outputs are in HU; the network's native scale is 2000 HU per
            // unit, so compare there.
            double diff = std::abs(static_cast<double>(v.data[i]) - ref.data[i]) / 2000.0;
            if (diff > worst) worst = diff;
        }
    }
    if (worst >= 1e-6) ok = false, d << "chunk sweep max normalized diff " << worst << "; ";

    r.pass = ok;
    if (ok) {
        std::ostringstream good;
        good << "repeat runs byte-identical across " << std::size(rel)
             << " artifacts; all round-trips exact; chunk sweep max normalized diff " << worst;
        r.detail = good.str();
    } else {
        r.detail = d.str();
    }
    return r;
}

}  // namespace acceptance
