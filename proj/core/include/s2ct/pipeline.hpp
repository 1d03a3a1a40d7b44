#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "s2ct/run_config.hpp"
#include "s2ct/volume.hpp"

namespace s2ct {

// End-to-end run rooted at cfg.out_dir:
//   data/            case_NNNN.hu.rvol, .labels.rvol, .truth.pgm
//   data/views/      case_NNNN.view###.rimg, one per pool angle
//   seg/             pretrained segmenter checkpoint + seg_log.csv
//   recon_k<K>/      per-view-count training: checkpoints + trainlog.csv
//   recon_k<K>/test/ case_NNNN.recon.rvol + .recon.pgm
//   metrics.csv, dose.csv
// Deterministic for a fixed config: rerunning rewrites identical artifacts
// (timing columns aside). Progress lines go to `log`.
void run_pipeline(const RunConfig& cfg, std::ostream& log);

// Train the k-view model under cfg.out_dir/recon_k<k> from the on-disk dataset
// (and the pretrained segmenter when cfg.lambda > 0). With resume, picks up at
// the last saved epoch and merges the new rows into trainlog.csv.
void train_one_view_count(const RunConfig& cfg, int k, bool resume, std::ostream& log);

// Case ids by split position: train block first, then validation, then test.
std::vector<std::string> split_ids(const RunConfig& cfg, const std::string& split);

LabeledVolume load_case(const std::string& data_dir, const std::string& id);

// data/views path for one case and angle (angle rounded to degrees).
std::string view_path(const std::string& views_dir, const std::string& id, float angle_deg);

// Rendered views restored from disk for the given angles.
TrainCase load_train_case(const std::string& data_dir, const std::string& id,
                          const std::vector<float>& angles_deg, const ViewGeometry& g_template);

// Center axial slice mapped from [-1000, 1000] HU to 8-bit grayscale.
void write_center_slice_pgm(const Volume& hu, const std::string& path);

}  // namespace s2ct
