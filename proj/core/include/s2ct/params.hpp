#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "s2ct/tensor.hpp"

namespace s2ct {

// Named parameter tensors in stable insertion order. Names are unique;
// iteration order is the registration order, which also fixes the
// checkpoint layout and the optimizer update order.
class ParameterStore {
 public:
  Tensor create(const std::string& name, std::vector<int> shape, bool requires_grad = true);
  void put(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }
  int64_t total_elements() const;

  // Raw value bytes of every parameter in order; used by freezing and
  // determinism checks.
  std::vector<uint8_t> value_bytes() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> by_name_;
};

}  // namespace s2ct
