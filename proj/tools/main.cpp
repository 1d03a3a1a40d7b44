#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "s2ct/dose.hpp"
#include "s2ct/drr.hpp"
#include "s2ct/error.hpp"
#include "s2ct/geometry.hpp"
#include "s2ct/metrics.hpp"
#include "s2ct/phantom.hpp"
#include "s2ct/pipeline.hpp"
#include "s2ct/recon_model.hpp"
#include "s2ct/run_config.hpp"
#include "s2ct/rvol.hpp"
#include "s2ct/segmentation.hpp"
#include "s2ct/volume.hpp"

namespace fs = std::filesystem;
using namespace s2ct;

namespace {

Beam parse_beam(const std::string& name) {
    if (name == "cone") return Beam::Cone;
    if (name == "parallel") return Beam::Parallel;
    throw UsageError("beam must be 'cone' or 'parallel', got '" + name + "'");
}

// "case_0001.recon.rvol" -> "case_0001"
std::string stem_id(const std::string& path) {
    std::string s = fs::path(path).filename().string();
    auto dot = s.find('.');
    if (dot != std::string::npos) s = s.substr(0, dot);
    return s.empty() ? std::string("case") : s;
}

ViewGeometry make_geometry(const std::string& beam, int detector_px,
                           float source_dist, float detector_dist) {
    ViewGeometry g;
    g.beam = parse_beam(beam);
    g.detector_px = detector_px;
    g.source_dist = source_dist;
    g.detector_dist = detector_dist;
    g.validate();
    return g;
}

struct PhantomGenArgs {
    std::string out;
    int n = 1;
    std::uint64_t seed = 0;
    int dim = 32;
    float spacing = 4.0f;
};

void run_phantom_gen(const PhantomGenArgs& a) {
    PhantomSpec spec;
    spec.dim = a.dim;
    spec.spacing_mm = a.spacing;
    auto ids = generate_dataset(a.n, a.seed, spec, a.out);
    std::printf("wrote %zu cases under %s\n", ids.size(), a.out.c_str());
}

struct DrrRenderArgs {
    std::string volume;
    std::string out_dir;
    std::string prefix;
    std::vector<float> views{0.0f, 45.0f, 90.0f, 135.0f};
    std::string beam = "cone";
    int detector_px = 32;
    float source_dist = 3.0f;
    float detector_dist = 1.0f;
    float step = 0.25f;
    bool pgm = false;
};

void run_drr_render(const DrrRenderArgs& a) {
    if (a.views.empty()) throw UsageError("at least one view angle is required");
    Volume hu = read_rvol_f32(a.volume, RvolKind::Hu);
    Volume mu = hu_to_mu(hu);
    ViewGeometry g = make_geometry(a.beam, a.detector_px, a.source_dist, a.detector_dist);
    std::string prefix = a.prefix.empty() ? stem_id(a.volume) : a.prefix;
    fs::create_directories(a.out_dir);
    for (float angle : a.views) {
        ViewGeometry gv = g;
        gv.theta_deg = normalize_angle_deg(angle);
        DRRImage img = render_drr(mu, gv, a.step);
        char name[64];
        std::snprintf(name, sizeof(name), "%s.view%03d.rimg",
                      prefix.c_str(), static_cast<int>(std::lround(gv.theta_deg)));
        std::string path = (fs::path(a.out_dir) / name).string();
        write_drr_rimg(img, path);
        if (a.pgm) {
            std::string ppath = path.substr(0, path.size() - 5) + ".pgm";
            write_pgm(img.normalized, img.d, img.d, 0.0f, 1.0f, ppath);
        }
        std::printf("wrote %s\n", path.c_str());
    }
}

struct SegTrainArgs {
    std::string data;
    int n = 0;
    std::string out;
    std::string log;
    int epochs = 30;
    float lr = 1e-3f;
    std::uint64_t seed = 0;
};

void run_seg_train(const SegTrainArgs& a) {
    if (a.n < 1) throw UsageError("--n must be at least 1");
    if (a.epochs < 1) throw UsageError("--epochs must be at least 1");
    std::vector<LabeledVolume> cases;
    cases.reserve(a.n);
    for (int i = 0; i < a.n; ++i) cases.push_back(load_case(a.data, case_id(i)));
    SegModel seg(SegConfig{}, a.seed * 1000003ull + 101);
    SegTrainOptions opt;
    opt.epochs = a.epochs;
    opt.lr = a.lr;
    opt.seed = a.seed * 1000003ull + 102;
    auto losses = pretrain_seg(seg, cases, opt);
    if (!a.out.empty()) {
        fs::path parent = fs::path(a.out).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
    }
    save_seg_model(seg, a.out);
    if (!a.log.empty()) {
        std::ofstream f(a.log);
        if (!f) throw DataError("cannot open " + a.log);
        f << "epoch,loss\n";
        for (std::size_t e = 0; e < losses.size(); ++e)
            f << e << "," << losses[e] << "\n";
    }
    std::printf("trained segmentation on %d cases, final loss %.6f, saved to %s\n",
                a.n, losses.empty() ? 0.0 : static_cast<double>(losses.back()),
                a.out.c_str());
}

struct ReconTrainArgs {
    std::string config;
    int views = 0;
    bool resume = false;
};

void run_recon_train(const ReconTrainArgs& a) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : parse_run_config(a.config);
    if (a.views < 1 || a.views > 4)
        throw UsageError("--views must be between 1 and 4");
    train_one_view_count(cfg, a.views, a.resume, std::cout);
}

struct ReconInferArgs {
    std::string model;
    std::vector<std::string> views;
    std::vector<float> angles;
    std::string out;
    std::string pgm;
    int dim = 32;
    float spacing = 4.0f;
    std::string beam = "cone";
    float source_dist = 3.0f;
    float detector_dist = 1.0f;
    int chunk = 4096;
};

void run_recon_infer(const ReconInferArgs& a) {
    if (a.views.empty() || a.views.size() > 4)
        throw UsageError("between 1 and 4 --view inputs are required");
    if (a.angles.size() != a.views.size())
        throw UsageError("--angle count must match --view count");
    if (a.dim < 2) throw UsageError("--dim must be at least 2");
    if (a.spacing <= 0.0f) throw UsageError("--spacing must be positive");
    ReconModel model = load_recon_model(a.model);
    ViewGeometry g = make_geometry(a.beam, model.config().detector_px,
                                   a.source_dist, a.detector_dist);
    std::vector<DRRImage> imgs;
    std::vector<ViewGeometry> geoms;
    for (std::size_t i = 0; i < a.views.size(); ++i) {
        imgs.push_back(read_drr_rimg(a.views[i]));
        ViewGeometry gv = g;
        gv.theta_deg = normalize_angle_deg(a.angles[i]);
        geoms.push_back(gv);
    }
    Volume recon = model.reconstruct_volume(imgs, geoms, a.dim, a.spacing, a.chunk);
    fs::path parent = fs::path(a.out).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    write_rvol_hu(recon, a.out);
    if (!a.pgm.empty()) {
        std::vector<float> slice(static_cast<std::size_t>(a.dim) * a.dim);
        int z = a.dim / 2;
        for (int y = 0; y < a.dim; ++y)
            for (int x = 0; x < a.dim; ++x)
                slice[static_cast<std::size_t>(y) * a.dim + x] = recon.at(x, y, z);
        write_pgm(slice, a.dim, a.dim, -1000.0f, 1000.0f, a.pgm);
    }
    std::printf("wrote %s\n", a.out.c_str());
}

struct EvalCommonArgs {
    std::string recon;
    std::string truth_hu;
    std::string truth_labels;
    std::string out;
    std::string case_id;
    int views = 0;
    double lambda = 0.0;
};

struct EvalMetricsArgs : EvalCommonArgs {
    std::string seg;
};

void run_eval_metrics(const EvalMetricsArgs& a) {
    Volume recon = read_rvol_f32(a.recon, RvolKind::Hu);
    LabeledVolume truth;
    truth.hu = read_rvol_f32(a.truth_hu, RvolKind::Hu);
    truth.labels = read_rvol_labels(a.truth_labels);
    SegModel seg = load_seg_model(a.seg);
    seg.set_trainable(false);
    CaseMetrics m = evaluate_case(recon, truth, seg);
    m.case_id = a.case_id.empty() ? stem_id(a.recon) : a.case_id;
    m.views = a.views;
    m.lambda = a.lambda;
    write_metrics_csv({m}, a.out);
    std::printf("%s: psnr %.2f dB, ssim %.4f, mean dice %.4f -> %s\n",
                m.case_id.c_str(), m.psnr_db, m.ssim_val, m.dice_mean, a.out.c_str());
}

void run_eval_dose(const EvalCommonArgs& a) {
    Volume recon = read_rvol_f32(a.recon, RvolKind::Hu);
    LabeledVolume truth;
    truth.hu = read_rvol_f32(a.truth_hu, RvolKind::Hu);
    truth.labels = read_rvol_labels(a.truth_labels);
    PlanSpec plan;
    DoseRow row;
    row.case_id = a.case_id.empty() ? stem_id(a.recon) : a.case_id;
    row.views = a.views;
    row.lambda = a.lambda;
    row.report = compare_dose(truth, recon, plan);
    write_dose_csv({row}, a.out);
    std::printf("%s: truth %.2f cGy, recon %.2f cGy, error %.2f%% -> %s\n",
                row.case_id.c_str(), row.report.dose_truth_cgy,
                row.report.dose_recon_cgy, row.report.percent_error, a.out.c_str());
}

struct PipelineRunArgs {
    std::string config;
};

void run_pipeline_run(const PipelineRunArgs& a) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : parse_run_config(a.config);
    run_pipeline(cfg, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse-view CT reconstruction toolkit"};
    app.require_subcommand(1);

    auto* phantom = app.add_subcommand("phantom", "synthetic phantom generation");
    phantom->require_subcommand(1);
    PhantomGenArgs pg;
    auto* phantom_gen = phantom->add_subcommand("gen", "generate labeled phantom volumes");
    phantom_gen->add_option("--out", pg.out, "output directory")->required();
    phantom_gen->add_option("--n", pg.n, "number of cases")->check(CLI::PositiveNumber);
    phantom_gen->add_option("--seed", pg.seed, "random seed");
    phantom_gen->add_option("--dim", pg.dim, "voxels per side");
    phantom_gen->add_option("--spacing", pg.spacing, "voxel spacing in mm");
    phantom_gen->callback([&pg] { run_phantom_gen(pg); });

    auto* drr = app.add_subcommand("drr", "planar projection rendering");
    drr->require_subcommand(1);
    DrrRenderArgs dr;
    auto* drr_render = drr->add_subcommand("render", "render projections of a volume");
    drr_render->add_option("--volume", dr.volume, "input volume (.rvol)")->required();
    drr_render->add_option("--out-dir", dr.out_dir, "output directory")->required();
    drr_render->add_option("--prefix", dr.prefix, "output file prefix (default: volume stem)");
    drr_render->add_option("--views", dr.views, "view angles in degrees")->delimiter(',');
    drr_render->add_option("--beam", dr.beam, "beam kind: cone or parallel");
    drr_render->add_option("--detector-px", dr.detector_px, "detector pixels per side");
    drr_render->add_option("--source-dist", dr.source_dist, "source distance (normalized units)");
    drr_render->add_option("--detector-dist", dr.detector_dist, "detector distance (normalized units)");
    drr_render->add_option("--step", dr.step, "ray march step in voxel widths");
    drr_render->add_flag("--pgm", dr.pgm, "also write a preview .pgm per view");
    drr_render->callback([&dr] { run_drr_render(dr); });

    auto* seg = app.add_subcommand("seg", "segmentation network");
    seg->require_subcommand(1);
    SegTrainArgs st;
    auto* seg_train = seg->add_subcommand("train", "pretrain the segmentation network");
    seg_train->add_option("--data", st.data, "dataset directory from 'phantom gen'")->required();
    seg_train->add_option("--n", st.n, "number of training cases")->required();
    seg_train->add_option("--out", st.out, "checkpoint prefix")->required();
    seg_train->add_option("--log", st.log, "optional loss log csv");
    seg_train->add_option("--epochs", st.epochs, "training epochs");
    seg_train->add_option("--lr", st.lr, "learning rate");
    seg_train->add_option("--seed", st.seed, "random seed");
    seg_train->callback([&st] { run_seg_train(st); });

    auto* recon = app.add_subcommand("recon", "reconstruction network");
    recon->require_subcommand(1);
    ReconTrainArgs rt;
    auto* recon_train = recon->add_subcommand("train", "train a reconstruction model");
    recon_train->add_option("--config", rt.config, "run config file (defaults when omitted)");
    recon_train->add_option("--views", rt.views, "number of views to train with")->required();
    recon_train->add_flag("--resume", rt.resume, "resume from the latest saved epoch");
    recon_train->callback([&rt] { run_recon_train(rt); });

    ReconInferArgs ri;
    auto* recon_infer = recon->add_subcommand("infer", "reconstruct a volume from projections");
    recon_infer->add_option("--model", ri.model, "model checkpoint prefix")->required();
    recon_infer->add_option("--view", ri.views, "projection image (.rimg), repeatable")->required();
    recon_infer->add_option("--angle", ri.angles, "view angle per projection")->required()->delimiter(',');
    recon_infer->add_option("--out", ri.out, "output volume (.rvol)")->required();
    recon_infer->add_option("--pgm", ri.pgm, "optional center slice preview path");
    recon_infer->add_option("--dim", ri.dim, "output voxels per side");
    recon_infer->add_option("--spacing", ri.spacing, "output voxel spacing in mm");
    recon_infer->add_option("--beam", ri.beam, "beam kind: cone or parallel");
    recon_infer->add_option("--source-dist", ri.source_dist, "source distance (normalized units)");
    recon_infer->add_option("--detector-dist", ri.detector_dist, "detector distance (normalized units)");
    recon_infer->add_option("--chunk", ri.chunk, "voxels per decode chunk");
    recon_infer->callback([&ri] { run_recon_infer(ri); });

    auto* eval = app.add_subcommand("eval", "evaluation");
    eval->require_subcommand(1);
    EvalMetricsArgs em;
    auto* eval_metrics = eval->add_subcommand("metrics", "image and segmentation metrics for one case");
    eval_metrics->add_option("--recon", em.recon, "reconstructed volume (.rvol)")->required();
    eval_metrics->add_option("--truth-hu", em.truth_hu, "ground truth volume (.rvol)")->required();
    eval_metrics->add_option("--truth-labels", em.truth_labels, "ground truth labels (.rvol)")->required();
    eval_metrics->add_option("--seg", em.seg, "segmentation checkpoint prefix")->required();
    eval_metrics->add_option("--out", em.out, "output csv")->required();
    eval_metrics->add_option("--case-id", em.case_id, "case identifier (default: recon stem)");
    eval_metrics->add_option("--views", em.views, "view count column");
    eval_metrics->add_option("--lambda", em.lambda, "lambda column");
    eval_metrics->callback([&em] { run_eval_metrics(em); });

    EvalCommonArgs ed;
    auto* eval_dose = eval->add_subcommand("dose", "isocenter dose comparison for one case");
    eval_dose->add_option("--recon", ed.recon, "reconstructed volume (.rvol)")->required();
    eval_dose->add_option("--truth-hu", ed.truth_hu, "ground truth volume (.rvol)")->required();
    eval_dose->add_option("--truth-labels", ed.truth_labels, "ground truth labels (.rvol)")->required();
    eval_dose->add_option("--out", ed.out, "output csv")->required();
    eval_dose->add_option("--case-id", ed.case_id, "case identifier (default: recon stem)");
    eval_dose->add_option("--views", ed.views, "view count column");
    eval_dose->add_option("--lambda", ed.lambda, "lambda column");
    eval_dose->callback([&ed] { run_eval_dose(ed); });

    auto* pipeline = app.add_subcommand("pipeline", "end-to-end study");
    pipeline->require_subcommand(1);
    PipelineRunArgs pr;
    auto* pipeline_run = pipeline->add_subcommand("run", "run the full study");
    pipeline_run->add_option("--config", pr.config, "run config file (defaults when omitted)");
    pipeline_run->callback([&pr] { run_pipeline_run(pr); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
