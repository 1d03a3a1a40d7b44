#pragma once

#include <array>
#include <string>
#include <vector>

#include "s2ct/params.hpp"
#include "s2ct/tensor.hpp"
#include "s2ct/volume.hpp"

namespace s2ct {

struct SegConfig {
  int classes = kNumClasses;
  std::array<int, 2> channels{8, 16};

  void validate() const;
};

// Small 3D U-Net assigning one of the phantom classes to each voxel. The
// trained network is frozen and reused as a differentiable proxy for
// anatomy during reconstruction training.
class SegModel {
 public:
  SegModel(const SegConfig& cfg, uint64_t seed);

  const SegConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // [1,D,D,D] normalized intensities -> class scores [classes,D,D,D].
  Tensor logits(const Tensor& vol) const;
  // Softmax over the class axis; probabilities sum to 1 per voxel.
  Tensor forward(const Tensor& vol) const;

  // requires_grad of every parameter; freezing makes the network a fixed
  // function that still passes gradients to its input.
  void set_trainable(bool trainable);

 private:
  explicit SegModel(const SegConfig& cfg);
  void init_weights(uint64_t seed);
  Tensor conv_sine(const std::string& name, const Tensor& x) const;

  SegConfig cfg_;
  ParameterStore params_;

  friend SegModel load_seg_model(const std::string& prefix);
};

// [1,D,D,D] tensor of window-normalized intensities from an HU volume.
Tensor normalized_volume_tensor(const Volume& hu);

// Per-voxel argmax of class probabilities back into a label volume.
LabelVolume seg_argmax(const Tensor& probs, const std::array<float, 3>& spacing_mm);

// 1 - mean soft Dice over the chosen classes (default: every foreground
// class). Per class: (2*sum(p*q)+eps) / (sum(p^2)+sum(q^2)+eps), eps 1e-6.
Tensor soft_dice_loss(const Tensor& pred, const Tensor& ref,
                      const std::vector<int>& classes = {});

struct SegTrainOptions {
  int epochs = 30;
  float lr = 1e-3f;
  uint64_t seed = 0;
};

// Voxelwise cross-entropy training over the labeled cases; returns the mean
// loss per epoch. Deterministic for a fixed seed.
std::vector<float> pretrain_seg(SegModel& model, const std::vector<LabeledVolume>& cases,
                                const SegTrainOptions& opt);

// prefix.seg.rckp + prefix.seg.json, mirroring the reconstruction format.
void save_seg_model(const SegModel& model, const std::string& prefix);
SegModel load_seg_model(const std::string& prefix);

}  // namespace s2ct
