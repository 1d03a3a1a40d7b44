#include "s2ct/recon_model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "s2ct/error.hpp"
#include "s2ct/ops.hpp"
#include "s2ct/rckp.hpp"

namespace s2ct {

namespace {

constexpr float kFirstLayerOmega = 30.0f;

void fill_sine_uniform(Tensor& w, int fan_in, float omega, std::mt19937_64& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in)) / omega;
  std::uniform_real_distribution<float> dist(-bound, bound);
  float* p = w.data();
  for (int64_t i = 0; i < w.numel(); ++i) p[i] = dist(rng);
}

}  // namespace

void ReconConfig::validate() const {
  if (feature_channels < 1) throw DataError("recon config: feature_channels must be positive");
  if (fourier_m < 1) throw DataError("recon config: fourier_m must be positive");
  if (!(fourier_sigma > 0.0f)) throw DataError("recon config: fourier_sigma must be positive");
  if (width < 1) throw DataError("recon config: width must be positive");
  if (detector_px < 4 || detector_px % 4 != 0)
    throw DataError("recon config: detector_px must be a positive multiple of 4 (two pooling levels)");
  for (int ch : unet_channels)
    if (ch < 1) throw DataError("recon config: unet channels must be positive");
}

ReconModel::ReconModel(const ReconConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.feature_channels;
  const auto [u1, u2, u3] = cfg_.unet_channels;
  auto conv = [&](const std::string& name, int co, int ci, int k) {
    params_.create(name + ".w", {co, ci, k, k});
    params_.create(name + ".b", {co});
  };
  auto lin = [&](const std::string& name, int in, int out) {
    params_.create(name + ".w", {in, out});
    params_.create(name + ".b", {out});
  };
  conv("unet.enc1.c1", u1, 1, 3);
  conv("unet.enc1.c2", u1, u1, 3);
  conv("unet.enc2.c1", u2, u1, 3);
  conv("unet.enc2.c2", u2, u2, 3);
  conv("unet.bott.c1", u3, u2, 3);
  conv("unet.bott.c2", u3, u3, 3);
  conv("unet.dec2.c1", u2, u3 + u2, 3);
  conv("unet.dec2.c2", u2, u2, 3);
  conv("unet.dec1.c1", u1, u2 + u1, 3);
  conv("unet.dec1.c2", u1, u1, 3);
  conv("unet.out", c, u1, 1);

  lin("frho.in", 2 * cfg_.fourier_m + c, cfg_.width);
  for (const char* blk : {"frho.res1", "frho.res2", "frho.res3"}) {
    lin(std::string(blk) + ".l1", cfg_.width, cfg_.width);
    lin(std::string(blk) + ".l2", cfg_.width, cfg_.width);
  }
  for (const char* blk : {"htau.res1", "htau.res2", "htau.res3"}) {
    lin(std::string(blk) + ".l1", cfg_.width, cfg_.width);
    lin(std::string(blk) + ".l2", cfg_.width, cfg_.width);
  }
  lin("htau.out", cfg_.width, 1);

  params_.create("fourier.B", {cfg_.fourier_m, 3}, /*requires_grad=*/false);
}

ReconModel::ReconModel(const ReconConfig& cfg, uint64_t seed) : ReconModel(cfg) {
  init_weights(seed);
}

void ReconModel::init_weights(uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const std::string& name : params_.names()) {
    Tensor t = params_.get(name);
    if (name == "fourier.B") {
      std::normal_distribution<float> dist(0.0f, cfg_.fourier_sigma);
      float* p = t.data();
      for (int64_t i = 0; i < t.numel(); ++i) p[i] = dist(rng);
      continue;
    }
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0) continue;  // biases stay 0
    int fan_in;
    if (t.rank() == 4) {
      fan_in = t.dim(1) * t.dim(2) * t.dim(3);
    } else {
      fan_in = t.dim(0);
    }
    const float omega = (name == "frho.in.w") ? kFirstLayerOmega : 1.0f;
    fill_sine_uniform(t, fan_in, omega, rng);
  }
}

Tensor ReconModel::linear(const std::string& name, const Tensor& x) const {
  return add(matmul(x, params_.get(name + ".w")), params_.get(name + ".b"));
}

Tensor ReconModel::residual_block(const std::string& name, const Tensor& x) const {
  Tensor h = sine(linear(name + ".l1", x), 1.0f);
  return add(x, linear(name + ".l2", h));
}

Tensor ReconModel::conv_sine(const std::string& name, const Tensor& x) const {
  return sine(conv2d(x, params_.get(name + ".w"), params_.get(name + ".b"), 1, 1), 1.0f);
}

Tensor ReconModel::extract_features(const Tensor& view) const {
  const int d = cfg_.detector_px;
  if (view.rank() != 3 || view.dim(0) != 1 || view.dim(1) != d || view.dim(2) != d)
    throw DataError("extract_features: expected a [1," + std::to_string(d) + "," +
                    std::to_string(d) + "] view, got " + view.shape_string());
  Tensor e1 = conv_sine("unet.enc1.c2", conv_sine("unet.enc1.c1", view));
  Tensor e2 = conv_sine("unet.enc2.c2", conv_sine("unet.enc2.c1", avg_pool2d(e1)));
  Tensor b = conv_sine("unet.bott.c2", conv_sine("unet.bott.c1", avg_pool2d(e2)));
  Tensor d2 = conv_sine("unet.dec2.c2",
                        conv_sine("unet.dec2.c1", concat({upsample2d(b), e2}, 0)));
  Tensor d1 = conv_sine("unet.dec1.c2",
                        conv_sine("unet.dec1.c1", concat({upsample2d(d2), e1}, 0)));
  return conv2d(d1, params_.get("unet.out.w"), params_.get("unet.out.b"), 1, 0);
}

Tensor ReconModel::fourier_encode(const std::vector<Vec3>& points) const {
  const int n = static_cast<int>(points.size());
  const int m = cfg_.fourier_m;
  Tensor out = Tensor::zeros({n, 2 * m});
  const float* B = params_.get("fourier.B").data();
  float* po = out.data();
  constexpr double kTwoPi = 6.283185307179586;
  for (int i = 0; i < n; ++i) {
    const Vec3& p = points[i];
    for (int r = 0; r < m; ++r) {
      const double s = kTwoPi * (double(B[3 * r]) * p.x + double(B[3 * r + 1]) * p.y +
                                 double(B[3 * r + 2]) * p.z);
      po[i * 2 * m + r] = static_cast<float>(std::sin(s));
      po[i * 2 * m + m + r] = static_cast<float>(std::cos(s));
    }
  }
  return out;
}

Tensor ReconModel::project_points(const std::vector<Vec3>& points, const ViewGeometry& g) const {
  const int n = static_cast<int>(points.size());
  Tensor out = Tensor::zeros({n, 2});
  float* po = out.data();
  for (int i = 0; i < n; ++i) {
    float row, col;
    detector_to_pixel(project(points[i], g), g.detector_px, row, col);
    po[2 * i] = row;
    po[2 * i + 1] = col;
  }
  return out;
}

Tensor ReconModel::per_view_embed(const Tensor& gamma, const Tensor& features,
                                  const Tensor& pixels) const {
  Tensor feat = bilinear_sample(features, pixels);
  Tensor h = sine(linear("frho.in", concat({gamma, feat}, 1)), kFirstLayerOmega);
  h = residual_block("frho.res1", h);
  h = residual_block("frho.res2", h);
  return residual_block("frho.res3", h);
}

Tensor ReconModel::fuse_and_decode(const std::vector<Tensor>& r_list) const {
  if (r_list.empty()) throw DataError("fuse_and_decode: no view embeddings");
  Tensor acc = r_list[0];
  for (size_t i = 1; i < r_list.size(); ++i) acc = add(acc, r_list[i]);
  Tensor h = mul(acc, 1.0f / static_cast<float>(r_list.size()));
  h = residual_block("htau.res1", h);
  h = residual_block("htau.res2", h);
  h = residual_block("htau.res3", h);
  return sigmoid(linear("htau.out", h));
}

Tensor ReconModel::forward(const std::vector<Tensor>& views,
                           const std::vector<ViewGeometry>& geometries,
                           const std::vector<Vec3>& points) const {
  if (views.empty() || views.size() != geometries.size())
    throw DataError("recon forward: need one geometry per view, got " +
                    std::to_string(views.size()) + " views and " +
                    std::to_string(geometries.size()) + " geometries");
  Tensor gamma = fourier_encode(points);
  std::vector<Tensor> r_list;
  r_list.reserve(views.size());
  for (size_t i = 0; i < views.size(); ++i) {
    Tensor w = extract_features(views[i]);
    r_list.push_back(per_view_embed(gamma, w, project_points(points, geometries[i])));
  }
  return fuse_and_decode(r_list);
}

Tensor view_to_tensor(const DRRImage& img) {
  Tensor t = Tensor::zeros({1, img.d, img.d});
  std::copy(img.normalized.begin(), img.normalized.end(), t.data());
  return t;
}

Tensor ReconModel::decode_volume(const std::vector<Tensor>& features,
                                 const std::vector<ViewGeometry>& geometries, int dim,
                                 int chunk) const {
  const int k = static_cast<int>(features.size());
  if (k < 1 || k > 4)
    throw DataError("decode_volume: expected 1 to 4 views, got " + std::to_string(k));
  if (geometries.size() != features.size())
    throw DataError("decode_volume: feature and geometry counts differ");
  if (chunk < 1) throw DataError("decode_volume: chunk must be positive");
  if (dim < 2) throw DataError("decode_volume: dim must be at least 2");

  // Point math always runs in fixed blocks aligned to the absolute voxel
  // index. Dense kernels pick different accumulation orders for different
  // batch shapes, so honoring the caller's chunk as the batch size would
  // let a memory knob perturb the output; with a constant block size the
  // decoded volume is bitwise identical for every chunk value.
  constexpr int kDecodeBlock = 1024;
  const int64_t total = int64_t(dim) * dim * dim;
  std::vector<Tensor> chunks;
  chunks.reserve(static_cast<size_t>((total + kDecodeBlock - 1) / kDecodeBlock));
  for (int64_t start = 0; start < total; start += kDecodeBlock) {
    const int n = static_cast<int>(std::min<int64_t>(kDecodeBlock, total - start));
    std::vector<Vec3> pts(n);
    for (int j = 0; j < n; ++j) {
      const int64_t idx = start + j;
      const int x = static_cast<int>(idx % dim);
      const int y = static_cast<int>((idx / dim) % dim);
      const int z = static_cast<int>(idx / (int64_t(dim) * dim));
      pts[j] = voxel_to_normalized(x, y, z, dim);
    }
    Tensor gamma = fourier_encode(pts);
    std::vector<Tensor> r_list;
    r_list.reserve(k);
    for (int i = 0; i < k; ++i)
      r_list.push_back(per_view_embed(gamma, features[i], project_points(pts, geometries[i])));
    chunks.push_back(fuse_and_decode(r_list));
  }
  Tensor flat = chunks.size() == 1 ? chunks[0] : concat(chunks, 0);
  // Chunks walk voxels x-fastest, matching the volume memory layout.
  return reshape(flat, {1, dim, dim, dim});
}

Volume ReconModel::reconstruct_volume(const std::vector<DRRImage>& views,
                                      const std::vector<ViewGeometry>& geometries, int dim,
                                      float spacing_mm, int chunk) const {
  const int k = static_cast<int>(views.size());
  if (k < 1 || k > 4)
    throw DataError("reconstruct_volume: expected 1 to 4 views, got " + std::to_string(k));
  for (const DRRImage& v : views)
    if (v.d != cfg_.detector_px)
      throw DataError("reconstruct_volume: view extent " + std::to_string(v.d) +
                      " does not match the model's detector size");

  std::vector<Tensor> features;
  features.reserve(k);
  for (const DRRImage& v : views) features.push_back(extract_features(view_to_tensor(v)));

  Tensor vol = decode_volume(features, geometries, dim, chunk);
  Volume out = Volume::filled(dim, 0.0f, spacing_mm);
  const float* pv = vol.data();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = 2000.0f * pv[i] - 1000.0f;
  return out;
}

void save_recon_model(const ReconModel& model, const std::string& prefix) {
  save_rckp(model.params(), prefix + ".rckp");
  const ReconConfig& c = model.config();
  nlohmann::json j{{"model", "recon"},
                   {"feature_channels", c.feature_channels},
                   {"fourier_m", c.fourier_m},
                   {"fourier_sigma", c.fourier_sigma},
                   {"width", c.width},
                   {"detector_px", c.detector_px},
                   {"unet_channels", c.unet_channels}};
  std::ofstream out(prefix + ".json");
  if (!out) throw DataError("cannot write " + prefix + ".json");
  out << j.dump(2) << "\n";
}

ReconModel load_recon_model(const std::string& prefix) {
  std::ifstream in(prefix + ".json");
  if (!in) throw DataError("cannot open " + prefix + ".json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad model config " + prefix + ".json: " + e.what());
  }
  if (j.value("model", "") != "recon")
    throw DataError(prefix + ".json does not describe a reconstruction model");
  ReconConfig cfg;
  try {
    cfg.feature_channels = j.at("feature_channels").get<int>();
    cfg.fourier_m = j.at("fourier_m").get<int>();
    cfg.fourier_sigma = j.at("fourier_sigma").get<float>();
    cfg.width = j.at("width").get<int>();
    cfg.detector_px = j.at("detector_px").get<int>();
    auto ch = j.at("unet_channels").get<std::vector<int>>();
    if (ch.size() != 3) throw DataError("unet_channels must list three stages");
    std::copy(ch.begin(), ch.end(), cfg.unet_channels.begin());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad model config " + prefix + ".json: " + e.what());
  }

  ReconModel model(cfg);
  ParameterStore loaded = load_rckp(prefix + ".rckp");
  for (const std::string& name : model.params_.names()) {
    if (!loaded.contains(name))
      throw DataError("checkpoint " + prefix + ".rckp is missing parameter " + name);
    Tensor src = loaded.get(name);
    Tensor dst = model.params_.get(name);
    if (src.shape() != dst.shape())
      throw DataError("checkpoint parameter " + name + " has shape " + src.shape_string() +
                      ", expected " + dst.shape_string());
    std::copy(src.data(), src.data() + src.numel(), dst.data());
  }
  return model;
}

}  // namespace s2ct
