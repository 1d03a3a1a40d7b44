#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "s2ct/error.hpp"
#include "s2ct/pipeline.hpp"
#include "s2ct/rvol.hpp"
#include "s2ct/trainer.hpp"

using namespace s2ct;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_cfg(const std::string& out_dir) {
    RunConfig cfg;
    cfg.out_dir = out_dir;
    cfg.n_train = 3;
    cfg.n_val = 1;
    cfg.n_test = 2;
    cfg.dim = 16;
    cfg.spacing_mm = 8.0f;
    cfg.detector_px = 16;
    cfg.views = {0.0f, 90.0f};
    cfg.view_counts = {1, 2};
    cfg.epochs = 2;
    cfg.points_per_step = 256;
    cfg.seg_epochs = 3;
    cfg.feature_channels = 8;
    cfg.fourier_m = 6;
    cfg.width = 24;
    cfg.seed = 7;
    return cfg;
}

std::string fresh_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    fs::path p = fs::temp_directory_path() /
                 ("s2ct_pipeline_" + tag + "_" + std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(bool(f));
    return std::vector<char>(std::istreambuf_iterator<char>(f),
                             std::istreambuf_iterator<char>());
}

int count_lines(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(bool(f));
    int n = 0;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) ++n;
    return n;
}

}  // namespace

TEST_CASE("split ids partition cases by position") {
    RunConfig cfg = tiny_cfg("unused");
    auto train = split_ids(cfg, "train");
    auto val = split_ids(cfg, "val");
    auto test = split_ids(cfg, "test");
    CHECK(train == std::vector<std::string>{"case_0000", "case_0001", "case_0002"});
    CHECK(val == std::vector<std::string>{"case_0003"});
    CHECK(test == std::vector<std::string>{"case_0004", "case_0005"});
    CHECK_THROWS_AS(split_ids(cfg, "holdout"), UsageError);
}

TEST_CASE("view paths embed the angle rounded to whole degrees") {
    CHECK(view_path("d", "case_0000", 0.0f) == "d/case_0000.view000.rimg");
    CHECK(view_path("d", "case_0000", 90.0f) == "d/case_0000.view090.rimg");
    CHECK(view_path("d", "case_0000", 360.0f) == "d/case_0000.view000.rimg");
    CHECK(view_path("d", "case_0000", -90.0f) == "d/case_0000.view270.rimg");
    CHECK(view_path("d", "case_0000", 135.2f) == "d/case_0000.view135.rimg");
}

TEST_CASE("case loader insists on matching grids") {
    std::string dir = fresh_dir("loadcase");
    Volume hu = Volume::filled(16, -1000.0f, 8.0f);
    write_rvol_hu(hu, dir + "/case_0000.hu.rvol");
    CHECK_THROWS_AS(load_case(dir, "case_0000"), DataError);  // labels missing

    LabelVolume small;
    small.dims = {8, 8, 8};
    small.spacing_mm = {8.0f, 8.0f, 8.0f};
    small.data.assign(8 * 8 * 8, 0);
    write_rvol_labels(small, dir + "/case_0000.labels.rvol");
    CHECK_THROWS_AS(load_case(dir, "case_0000"), DataError);  // 16^3 vs 8^3
    fs::remove_all(dir);
}

TEST_CASE("training stage requires a generated dataset") {
    RunConfig cfg = tiny_cfg(fresh_dir("nodata"));
    std::ostringstream log;
    CHECK_THROWS_AS(train_one_view_count(cfg, 1, false, log), DataError);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("end to end run: artifact tree, determinism, resume") {
    RunConfig cfg = tiny_cfg(fresh_dir("run"));
    std::ostringstream log;
    run_pipeline(cfg, log);
    CHECK(log.str().find("[pipeline]") != std::string::npos);

    const std::string& d = cfg.out_dir;
    for (int i = 0; i < 6; ++i) {
        std::string id = "case_000" + std::to_string(i);
        CHECK(fs::exists(d + "/data/" + id + ".hu.rvol"));
        CHECK(fs::exists(d + "/data/" + id + ".labels.rvol"));
        CHECK(fs::exists(d + "/data/" + id + ".truth.pgm"));
        CHECK(fs::exists(d + "/data/views/" + id + ".view000.rimg"));
        CHECK(fs::exists(d + "/data/views/" + id + ".view090.rimg"));
    }
    CHECK(fs::exists(d + "/seg/model.seg.rckp"));
    CHECK(fs::exists(d + "/seg/model.seg.json"));
    CHECK(fs::exists(d + "/seg/seg_log.csv"));
    for (int k : {1, 2}) {
        std::string kd = d + "/recon_k" + std::to_string(k);
        CHECK(fs::exists(kd + "/model_best.rckp"));
        CHECK(fs::exists(kd + "/model_best.json"));
        CHECK(fs::exists(kd + "/model_final.rckp"));
        CHECK(fs::exists(kd + "/model_final.opt.rckp"));
        CHECK(fs::exists(kd + "/train_state.json"));
        CHECK(fs::exists(kd + "/trainlog.csv"));
        CHECK(fs::exists(kd + "/test/case_0004.recon.rvol"));
        CHECK(fs::exists(kd + "/test/case_0004.recon.pgm"));
        CHECK(fs::exists(kd + "/test/case_0005.recon.rvol"));
        CHECK(count_lines(kd + "/trainlog.csv") == 1 + cfg.epochs);
    }
    CHECK(count_lines(d + "/metrics.csv") == 1 + 2 * 2);  // two view counts, two test cases
    CHECK(count_lines(d + "/dose.csv") == 1 + 2 * 2);

    Volume recon = read_rvol_f32(d + "/recon_k2/test/case_0004.recon.rvol", RvolKind::Hu);
    CHECK(recon.dims == std::array<int, 3>{16, 16, 16});

    // identical rerun, bit for bit on everything but timing columns
    auto metrics_a = slurp(d + "/metrics.csv");
    auto dose_a = slurp(d + "/dose.csv");
    auto seg_a = slurp(d + "/seg/model.seg.rckp");
    auto best_a = slurp(d + "/recon_k1/model_best.rckp");
    auto recon_a = slurp(d + "/recon_k2/test/case_0005.recon.rvol");
    auto view_a = slurp(d + "/data/views/case_0003.view090.rimg");
    auto rows_a = read_train_log_csv(d + "/recon_k2/trainlog.csv");

    std::ostringstream log2;
    run_pipeline(cfg, log2);
    CHECK(slurp(d + "/metrics.csv") == metrics_a);
    CHECK(slurp(d + "/dose.csv") == dose_a);
    CHECK(slurp(d + "/seg/model.seg.rckp") == seg_a);
    CHECK(slurp(d + "/recon_k1/model_best.rckp") == best_a);
    CHECK(slurp(d + "/recon_k2/test/case_0005.recon.rvol") == recon_a);
    CHECK(slurp(d + "/data/views/case_0003.view090.rimg") == view_a);
    auto rows_b = read_train_log_csv(d + "/recon_k2/trainlog.csv");
    REQUIRE(rows_a.size() == rows_b.size());
    for (size_t i = 0; i < rows_a.size(); ++i) {
        CHECK(rows_a[i].epoch == rows_b[i].epoch);
        CHECK(rows_a[i].mse == rows_b[i].mse);
        CHECK(rows_a[i].val_psnr == rows_b[i].val_psnr);
    }

    // resuming with a longer schedule extends the log in place
    RunConfig longer = cfg;
    longer.epochs = 3;
    longer.lr_drop_epoch = 1;
    std::ostringstream log3;
    train_one_view_count(longer, 2, true, log3);
    CHECK(log3.str().find("[recon_k2]") != std::string::npos);
    auto rows_c = read_train_log_csv(d + "/recon_k2/trainlog.csv");
    REQUIRE(rows_c.size() == 3);
    CHECK(rows_c[0].mse == rows_a[0].mse);
    CHECK(rows_c[1].mse == rows_a[1].mse);
    CHECK(rows_c[2].epoch == 2);

    // a second resume with nothing left is a no-op
    std::ostringstream log4;
    train_one_view_count(longer, 2, true, log4);
    CHECK(log4.str().find("nothing to resume") != std::string::npos);
    CHECK(read_train_log_csv(d + "/recon_k2/trainlog.csv").size() == 3);

    // the dice path loads the pretrained segmenter from disk
    RunConfig with_dice = cfg;
    with_dice.lambda = 0.1f;
    with_dice.epochs = 1;
    with_dice.dice_every = 2;
    std::ostringstream log5;
    train_one_view_count(with_dice, 1, false, log5);
    auto rows_d = read_train_log_csv(d + "/recon_k1/trainlog.csv");
    REQUIRE(rows_d.size() == 1);
    CHECK(!std::isnan(rows_d[0].dice_loss));

    // and fails loudly when the segmenter is missing
    fs::rename(d + "/seg", d + "/seg_hidden");
    std::ostringstream log6;
    CHECK_THROWS_AS(train_one_view_count(with_dice, 1, false, log6), DataError);
    fs::rename(d + "/seg_hidden", d + "/seg");

    fs::remove_all(d);
}
