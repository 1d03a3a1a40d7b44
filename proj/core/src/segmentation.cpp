#include "s2ct/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "s2ct/adam.hpp"
#include "s2ct/error.hpp"
#include "s2ct/ops.hpp"
#include "s2ct/rckp.hpp"

namespace s2ct {

void SegConfig::validate() const {
  if (classes < 2) throw DataError("seg config: need at least two classes");
  for (int ch : channels)
    if (ch < 1) throw DataError("seg config: channels must be positive");
}

SegModel::SegModel(const SegConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto [u1, u2] = cfg_.channels;
  auto conv = [&](const std::string& name, int co, int ci, int k) {
    params_.create(name + ".w", {co, ci, k, k, k});
    params_.create(name + ".b", {co});
  };
  conv("seg.enc.c1", u1, 1, 3);
  conv("seg.enc.c2", u1, u1, 3);
  conv("seg.bott.c1", u2, u1, 3);
  conv("seg.bott.c2", u2, u2, 3);
  conv("seg.dec.c1", u1, u2 + u1, 3);
  conv("seg.dec.c2", u1, u1, 3);
  conv("seg.out", cfg_.classes, u1, 1);
}

SegModel::SegModel(const SegConfig& cfg, uint64_t seed) : SegModel(cfg) { init_weights(seed); }

void SegModel::init_weights(uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const std::string& name : params_.names()) {
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0) continue;
    Tensor t = params_.get(name);
    const int fan_in = t.dim(1) * t.dim(2) * t.dim(3) * t.dim(4);
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    std::uniform_real_distribution<float> dist(-bound, bound);
    float* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = dist(rng);
  }
}

Tensor SegModel::conv_sine(const std::string& name, const Tensor& x) const {
  return sine(conv3d(x, params_.get(name + ".w"), params_.get(name + ".b"), 1, 1), 1.0f);
}

Tensor SegModel::logits(const Tensor& vol) const {
  if (vol.rank() != 4 || vol.dim(0) != 1 || vol.dim(1) != vol.dim(2) || vol.dim(1) != vol.dim(3))
    throw DataError("seg_forward: expected a [1,D,D,D] volume, got " + vol.shape_string());
  if (vol.dim(1) % 2 != 0)
    throw DataError("seg_forward: volume extent must be even for the pooling level, got " +
                    std::to_string(vol.dim(1)));
  Tensor e1 = conv_sine("seg.enc.c2", conv_sine("seg.enc.c1", vol));
  Tensor b = conv_sine("seg.bott.c2", conv_sine("seg.bott.c1", avg_pool3d(e1)));
  Tensor d = conv_sine("seg.dec.c2", conv_sine("seg.dec.c1", concat({upsample3d(b), e1}, 0)));
  return conv3d(d, params_.get("seg.out.w"), params_.get("seg.out.b"), 1, 0);
}

Tensor SegModel::forward(const Tensor& vol) const { return softmax0(logits(vol)); }

void SegModel::set_trainable(bool trainable) {
  for (const std::string& name : params_.names()) params_.get(name).set_requires_grad(trainable);
}

Tensor normalized_volume_tensor(const Volume& hu) {
  const int d = hu.dims[0];
  if (hu.dims[1] != d || hu.dims[2] != d)
    throw DataError("normalized_volume_tensor: volume must be cubic");
  Tensor t = Tensor::zeros({1, d, d, d});
  float* p = t.data();
  for (int64_t i = 0; i < hu.numel(); ++i) p[i] = hu_to_normalized(hu.data[i]);
  return t;
}

LabelVolume seg_argmax(const Tensor& probs, const std::array<float, 3>& spacing_mm) {
  if (probs.rank() != 4) throw DataError("seg_argmax: expected [C,D,D,D] probabilities");
  const int c = probs.dim(0);
  const int64_t vox = probs.numel() / c;
  LabelVolume out;
  out.dims = {probs.dim(3), probs.dim(2), probs.dim(1)};
  out.spacing_mm = spacing_mm;
  out.data.resize(vox);
  const float* p = probs.data();
  for (int64_t v = 0; v < vox; ++v) {
    int best = 0;
    float best_p = p[v];
    for (int k = 1; k < c; ++k)
      if (p[k * vox + v] > best_p) {
        best_p = p[k * vox + v];
        best = k;
      }
    out.data[v] = static_cast<uint8_t>(best);
  }
  return out;
}

Tensor soft_dice_loss(const Tensor& pred, const Tensor& ref, const std::vector<int>& classes) {
  if (pred.shape() != ref.shape())
    throw DataError("soft_dice_loss: shapes differ, " + pred.shape_string() + " vs " +
                    ref.shape_string());
  const int c = pred.dim(0);
  std::vector<int> chosen = classes;
  if (chosen.empty())
    for (int k = 1; k < c; ++k) chosen.push_back(k);
  for (int k : chosen)
    if (k < 0 || k >= c) throw DataError("soft_dice_loss: class " + std::to_string(k) +
                                         " out of range for " + std::to_string(c) + " channels");

  constexpr float kEps = 1e-6f;
  Tensor inter = sum_channels(mul(pred, ref));      // [C]
  Tensor pp = sum_channels(mul(pred, pred));
  Tensor qq = sum_channels(mul(ref, ref));
  Tensor dice = divide(add(mul(inter, 2.0f), kEps), add(add(pp, qq), kEps));

  Tensor mask = Tensor::zeros({c});
  for (int k : chosen) mask.data()[k] = 1.0f / static_cast<float>(chosen.size());
  return sub(1.0f, sum(mul(dice, mask)));
}

std::vector<float> pretrain_seg(SegModel& model, const std::vector<LabeledVolume>& cases,
                                const SegTrainOptions& opt) {
  if (cases.empty()) throw DataError("pretrain_seg: empty dataset");
  if (opt.epochs < 1) throw DataError("pretrain_seg: epochs must be positive");

  std::vector<Tensor> inputs;
  std::vector<const std::vector<uint8_t>*> labels;
  inputs.reserve(cases.size());
  for (const LabeledVolume& lv : cases) {
    inputs.push_back(normalized_volume_tensor(lv.hu));
    labels.push_back(&lv.labels.data);
  }

  AdamState adam;
  adam.lr = opt.lr;
  std::vector<size_t> order(cases.size());
  std::iota(order.begin(), order.end(), size_t{0});

  std::vector<float> epoch_losses;
  epoch_losses.reserve(opt.epochs);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(opt.seed * 0x9e3779b97f4a7c15ull + uint64_t(epoch) + 1);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double acc = 0.0;
    for (size_t idx : order) {
      Tape tape;
      Tensor loss = cross_entropy_logits0(model.logits(inputs[idx]), *labels[idx]);
      acc += loss.item();
      tape.backward(loss);
      adam_step(model.params(), adam);
    }
    epoch_losses.push_back(static_cast<float>(acc / double(cases.size())));
  }
  return epoch_losses;
}

void save_seg_model(const SegModel& model, const std::string& prefix) {
  save_rckp(model.params(), prefix + ".seg.rckp");
  const SegConfig& c = model.config();
  nlohmann::json j{{"model", "seg"}, {"classes", c.classes}, {"channels", c.channels}};
  std::ofstream out(prefix + ".seg.json");
  if (!out) throw DataError("cannot write " + prefix + ".seg.json");
  out << j.dump(2) << "\n";
}

SegModel load_seg_model(const std::string& prefix) {
  std::ifstream in(prefix + ".seg.json");
  if (!in) throw DataError("cannot open " + prefix + ".seg.json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad model config " + prefix + ".seg.json: " + e.what());
  }
  if (j.value("model", "") != "seg")
    throw DataError(prefix + ".seg.json does not describe a segmentation model");
  SegConfig cfg;
  try {
    cfg.classes = j.at("classes").get<int>();
    auto ch = j.at("channels").get<std::vector<int>>();
    if (ch.size() != 2) throw DataError("channels must list two stages");
    std::copy(ch.begin(), ch.end(), cfg.channels.begin());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad model config " + prefix + ".seg.json: " + e.what());
  }

  SegModel model(cfg);
  ParameterStore loaded = load_rckp(prefix + ".seg.rckp");
  for (const std::string& name : model.params_.names()) {
    if (!loaded.contains(name))
      throw DataError("checkpoint " + prefix + ".seg.rckp is missing parameter " + name);
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
