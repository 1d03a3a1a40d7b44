#include "s2ct/tensor.hpp"

#include <cstring>
#include <sstream>

#include "s2ct/error.hpp"

namespace s2ct {

struct Tensor::Impl {
  std::vector<int> shape;
  int64_t numel = 0;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
};

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

static int64_t count_elements(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw DataError("tensor extent must be positive, got shape " + shape_to_string(shape));
    n *= e;
  }
  return n;
}

Tensor::Impl* Tensor::checked() const {
  if (!impl_) throw Error("use of undefined tensor");
  return impl_.get();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->numel = count_elements(t.impl_->shape);
  t.impl_->data.assign(static_cast<size_t>(t.impl_->numel), 0.0f);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> values, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->numel = count_elements(t.impl_->shape);
  if (static_cast<int64_t>(values.size()) != t.impl_->numel)
    throw DataError("tensor value count " + std::to_string(values.size()) +
                    " does not match shape " + shape_to_string(t.impl_->shape));
  t.impl_->data = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(float value) { return from({1}, {value}); }

const std::vector<int>& Tensor::shape() const { return checked()->shape; }
int Tensor::rank() const { return static_cast<int>(checked()->shape.size()); }

int Tensor::dim(int axis) const {
  Impl* im = checked();
  if (axis < 0 || axis >= static_cast<int>(im->shape.size()))
    throw DataError("axis " + std::to_string(axis) + " out of range for shape " +
                    shape_to_string(im->shape));
  return im->shape[axis];
}

int64_t Tensor::numel() const { return checked()->numel; }

float* Tensor::data() { return checked()->data.data(); }
const float* Tensor::data() const { return checked()->data.data(); }

float Tensor::item() const {
  Impl* im = checked();
  if (im->numel != 1)
    throw DataError("item() requires a single-element tensor, got " + shape_to_string(im->shape));
  return im->data[0];
}

bool Tensor::requires_grad() const { return checked()->requires_grad; }
void Tensor::set_requires_grad(bool rg) { checked()->requires_grad = rg; }

bool Tensor::has_grad() const { return !checked()->grad.empty(); }

float* Tensor::grad() {
  Impl* im = checked();
  if (!im->requires_grad)
    throw Error("gradient requested for a tensor with requires_grad=false");
  if (im->grad.empty()) im->grad.assign(static_cast<size_t>(im->numel), 0.0f);
  return im->grad.data();
}

const float* Tensor::grad_data() const {
  Impl* im = checked();
  return im->grad.empty() ? nullptr : im->grad.data();
}

void Tensor::zero_grad() {
  Impl* im = checked();
  if (!im->grad.empty()) std::fill(im->grad.begin(), im->grad.end(), 0.0f);
}

void Tensor::drop_grad() {
  Impl* im = checked();
  im->grad.clear();
  im->grad.shrink_to_fit();
}

bool Tensor::same_storage(const Tensor& other) const { return impl_ == other.impl_; }

std::string Tensor::shape_string() const { return shape_to_string(checked()->shape); }

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
  if (g_active_tape)
    throw Error("a tape is already active on this thread; tapes do not nest");
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = nullptr; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
  if (used_) throw Error("backward() already ran on this tape");
  used_ = true;
  if (loss.numel() != 1)
    throw DataError("backward() requires a scalar loss, got " + loss.shape_string());
  if (!loss.requires_grad())
    throw Error("backward() on a loss that was not recorded on the tape");
  Tensor seed = loss;
  seed.grad()[0] = 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace s2ct
