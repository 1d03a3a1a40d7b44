#include "s2ct/params.hpp"

#include <cstring>

#include "s2ct/error.hpp"

namespace s2ct {

Tensor ParameterStore::create(const std::string& name, std::vector<int> shape,
                              bool requires_grad) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  put(name, t);
  return t;
}

void ParameterStore::put(const std::string& name, Tensor t) {
  if (!t.defined()) throw DataError("parameter '" + name + "' is undefined");
  if (by_name_.count(name)) throw DataError("duplicate parameter name '" + name + "'");
  order_.push_back(name);
  by_name_.emplace(name, std::move(t));
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw DataError("unknown parameter '" + name + "'");
  return it->second;
}

bool ParameterStore::contains(const std::string& name) const { return by_name_.count(name) > 0; }

int64_t ParameterStore::total_elements() const {
  int64_t n = 0;
  for (const auto& name : order_) n += by_name_.at(name).numel();
  return n;
}

std::vector<uint8_t> ParameterStore::value_bytes() const {
  std::vector<uint8_t> out;
  for (const auto& name : order_) {
    const Tensor& t = by_name_.at(name);
    const uint8_t* p = reinterpret_cast<const uint8_t*>(t.data());
    out.insert(out.end(), p, p + t.numel() * sizeof(float));
  }
  return out;
}

}  // namespace s2ct
