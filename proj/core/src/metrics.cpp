#include "s2ct/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "s2ct/error.hpp"

namespace s2ct {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 1e-4;  // (K1*L)^2, K1=0.01, range 1
constexpr double kC2 = 9e-4;  // (K2*L)^2, K2=0.03

void require_same_grid(const std::array<int, 3>& a, const std::array<int, 3>& b,
                       const char* what) {
  if (a != b) {
    throw DataError(std::string(what) + ": volumes have different dimensions");
  }
}

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    double d = i - (kWindow - 1) / 2.0;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Windowed SSIM of one axial slice, averaged over all fully-contained
// window positions. The separable Gaussian is applied as a full 2D stencil;
// slices are small enough that this stays cheap.
double ssim_slice(const Volume& a, const Volume& b, int z,
                  const std::array<double, kWindow>& taps) {
  const int nx = a.dims[0];
  const int ny = a.dims[1];
  const int half = kWindow / 2;
  double total = 0.0;
  int64_t count = 0;
  for (int cy = half; cy < ny - half; ++cy) {
    for (int cx = half; cx < nx - half; ++cx) {
      double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
      for (int wy = 0; wy < kWindow; ++wy) {
        for (int wx = 0; wx < kWindow; ++wx) {
          double w = taps[wy] * taps[wx];
          double va = a.at(cx - half + wx, cy - half + wy, z);
          double vb = b.at(cx - half + wx, cy - half + wy, z);
          mu_a += w * va;
          mu_b += w * vb;
          aa += w * va * va;
          bb += w * vb * vb;
          ab += w * va * vb;
        }
      }
      double var_a = aa - mu_a * mu_a;
      double var_b = bb - mu_b * mu_b;
      double cov = ab - mu_a * mu_b;
      double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
      double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

double psnr(const Volume& a, const Volume& b) {
  require_same_grid(a.dims, b.dims, "psnr");
  if (a.numel() == 0) throw DataError("psnr: empty volume");
  double sq = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    sq += d * d;
  }
  double mse = sq / static_cast<double>(a.numel());
  if (mse < 1e-10) return 100.0;
  return -10.0 * std::log10(mse);
}

double ssim(const Volume& a, const Volume& b) {
  require_same_grid(a.dims, b.dims, "ssim");
  if (a.dims[0] < kWindow || a.dims[1] < kWindow) {
    throw DataError("ssim: slice smaller than the 11x11 window");
  }
  const auto taps = gaussian_taps();
  double total = 0.0;
  for (int z = 0; z < a.dims[2]; ++z) total += ssim_slice(a, b, z, taps);
  return total / a.dims[2];
}

double hard_dice(const LabelVolume& pred, const LabelVolume& ref, int cls) {
  require_same_grid(pred.dims, ref.dims, "hard_dice");
  if (cls < 0 || cls >= kNumClasses) throw DataError("hard_dice: class id out of range");
  int64_t inter = 0, np = 0, nr = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    bool p = pred.data[i] == cls;
    bool r = ref.data[i] == cls;
    np += p;
    nr += r;
    inter += p && r;
  }
  if (np + nr == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + nr);
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate out;
  out.n = static_cast<int>(values.size());
  if (out.n == 0) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / out.n;
  if (out.n < 2) return out;
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  double sd = std::sqrt(sq / (out.n - 1));
  out.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(out.n));
  return out;
}

CaseMetrics evaluate_case(const Volume& recon_hu, const LabeledVolume& truth,
                          const SegModel& seg) {
  require_same_grid(recon_hu.dims, truth.hu.dims, "evaluate_case");
  CaseMetrics m;
  Volume recon_norm = recon_hu;
  recon_norm.data = volume_to_normalized(recon_hu);
  Volume truth_norm = truth.hu;
  truth_norm.data = volume_to_normalized(truth.hu);
  m.psnr_db = psnr(recon_norm, truth_norm);
  m.ssim_val = ssim(recon_norm, truth_norm);

  // Structures come from the segmenter on the reconstruction; the reference
  // side keeps the phantom's analytic labels.
  Tensor probs = seg.forward(normalized_volume_tensor(recon_hu));
  LabelVolume pred = seg_argmax(probs, recon_hu.spacing_mm);

  std::array<bool, kNumClasses> present{};
  for (uint8_t v : truth.labels.data) present[v] = true;
  double dice_sum = 0.0;
  int dice_n = 0;
  for (int cls = 1; cls < kNumClasses; ++cls) {
    m.dice[cls] = hard_dice(pred, truth.labels, cls);
    if (present[cls]) {
      dice_sum += m.dice[cls];
      ++dice_n;
    }
  }
  m.dice_mean = dice_n > 0 ? dice_sum / dice_n : 1.0;
  return m;
}

void write_metrics_csv(const std::vector<CaseMetrics>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_metrics_csv: cannot open " + path);
  out << "case,views,lambda,psnr,ssim,dice_mean";
  for (int cls = 1; cls < kNumClasses; ++cls) out << ",dice_" << class_name(cls);
  out << "\n";
  for (const CaseMetrics& m : rows) {
    out << m.case_id << ',' << m.views << ',' << m.lambda << ',' << m.psnr_db << ','
        << m.ssim_val << ',' << m.dice_mean;
    for (int cls = 1; cls < kNumClasses; ++cls) out << ',' << m.dice[cls];
    out << "\n";
  }
  if (!out.flush()) throw DataError("write_metrics_csv: write failed for " + path);
}

}  // namespace s2ct
