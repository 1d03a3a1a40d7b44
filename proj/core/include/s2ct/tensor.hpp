#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace s2ct {

// Dense float32 tensor. A Tensor is a cheap handle over shared storage:
// copying it aliases the same buffer. The gradient buffer is allocated
// lazily on first accumulation and only for tensors that require grad.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<float> values,
                     bool requires_grad = false);
  static Tensor scalar(float value);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int axis) const;
  int64_t numel() const;

  float* data();
  const float* data() const;
  // Value of a single-element tensor.
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool rg);

  bool has_grad() const;
  // Gradient buffer; allocates zeros on first call. Only valid when
  // requires_grad is set.
  float* grad();
  const float* grad_data() const;  // nullptr when not allocated
  void zero_grad();                // keeps the allocation
  void drop_grad();                // releases the allocation

  bool same_storage(const Tensor& other) const;

  std::string shape_string() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  Impl* checked() const;
};

std::string shape_to_string(const std::vector<int>& shape);

// Reverse-mode tape, define-by-run. Constructing a Tape makes it the active
// tape for the current thread; ops executed while it is active append
// backward closures. backward() replays them in reverse once.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> node);
  // Seeds d(loss)/d(loss) = 1 and replays the recorded closures in reverse.
  // loss must be a single-element tensor recorded on this tape.
  void backward(const Tensor& loss);
  size_t node_count() const { return nodes_.size(); }

  static Tape* active();

 private:
  std::vector<std::function<void()>> nodes_;
  bool used_ = false;
};

}  // namespace s2ct
