#include "s2ct/adam.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "s2ct/error.hpp"
#include "s2ct/rckp.hpp"

namespace s2ct {

void adam_step(ParameterStore& params, AdamState& state) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), static_cast<double>(state.t));
  for (const std::string& name : params.names()) {
    Tensor p = params.get(name);
    if (!p.requires_grad()) continue;
    const float* g = p.grad_data();
    if (!g)
      throw DataError("adam_step: parameter '" + name + "' has no gradient");
    const size_t n = static_cast<size_t>(p.numel());
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != n) m.assign(n, 0.0f);
    if (v.size() != n) v.assign(n, 0.0f);
    float* w = p.data();
    for (size_t i = 0; i < n; ++i) {
      m[i] = state.beta1 * m[i] + (1.0f - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0f - state.beta2) * g[i] * g[i];
      const float mhat = static_cast<float>(m[i] / bc1);
      const float vhat = static_cast<float>(v[i] / bc2);
      w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    p.zero_grad();
  }
}

void save_adam(const AdamState& state, const std::string& prefix) {
  // Sorted by name so the checkpoint bytes do not depend on hash-map
  // iteration order.
  std::vector<std::string> names;
  names.reserve(state.m.size());
  for (const auto& [name, buf] : state.m) names.push_back(name);
  std::sort(names.begin(), names.end());

  ParameterStore store;
  for (const std::string& name : names) {
    const auto& buf = state.m.at(name);
    Tensor t = store.create("m." + name, {static_cast<int>(buf.size())}, false);
    std::memcpy(t.data(), buf.data(), buf.size() * sizeof(float));
  }
  for (const std::string& name : names) {
    auto it = state.v.find(name);
    if (it == state.v.end())
      throw DataError("save_adam: moment buffers out of sync for '" + name + "'");
    Tensor t = store.create("v." + name, {static_cast<int>(it->second.size())}, false);
    std::memcpy(t.data(), it->second.data(), it->second.size() * sizeof(float));
  }
  save_rckp(store, prefix + ".opt.rckp");

  nlohmann::json j;
  j["lr"] = state.lr;
  j["beta1"] = state.beta1;
  j["beta2"] = state.beta2;
  j["eps"] = state.eps;
  j["t"] = state.t;
  std::ofstream out(prefix + ".opt.json");
  if (!out) throw DataError("save_adam: cannot open " + prefix + ".opt.json");
  out << j.dump(2) << "\n";
  if (!out.flush()) throw DataError("save_adam: write failed for " + prefix + ".opt.json");
}

AdamState load_adam(const std::string& prefix) {
  std::ifstream in(prefix + ".opt.json");
  if (!in) throw DataError("load_adam: cannot open " + prefix + ".opt.json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_adam: bad json in " + prefix + ".opt.json: " + e.what());
  }
  AdamState state;
  try {
    state.lr = j.at("lr").get<float>();
    state.beta1 = j.at("beta1").get<float>();
    state.beta2 = j.at("beta2").get<float>();
    state.eps = j.at("eps").get<float>();
    state.t = j.at("t").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_adam: missing field in " + prefix + ".opt.json: " + e.what());
  }

  ParameterStore store = load_rckp(prefix + ".opt.rckp");
  for (const std::string& name : store.names()) {
    Tensor t = store.get(name);
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    std::memcpy(buf.data(), t.data(), buf.size() * sizeof(float));
    if (name.rfind("m.", 0) == 0) {
      state.m[name.substr(2)] = std::move(buf);
    } else if (name.rfind("v.", 0) == 0) {
      state.v[name.substr(2)] = std::move(buf);
    } else {
      throw DataError("load_adam: unexpected entry '" + name + "' in optimizer checkpoint");
    }
  }
  return state;
}

}  // namespace s2ct
