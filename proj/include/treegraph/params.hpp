#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "treegraph/tensor.hpp"

namespace tg {

// A named trainable tensor.
template <typename Real>
struct Parameter {
  std::string name;
  BasicTensor<Real> tensor;
};

// Named non-trainable buffers (batch-norm running statistics). Streamed into
// checkpoints alongside parameters but excluded from the parameter count.
template <typename Real>
struct StateBuffer {
  std::string name;
  std::vector<Real>* data;  // owned by the layer
};

template <typename Real>
class ParamRegistry {
 public:
  // Registers a trainable tensor; names must be unique within a model.
  BasicTensor<Real> add(const std::string& name, BasicTensor<Real> t) {
    if (index_.count(name))
      throw ConfigError("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back({name, t});
    return t;
  }

  void add_state(const std::string& name, std::vector<Real>* data) {
    if (state_index_.count(name))
      throw ConfigError("duplicate state buffer name: " + name);
    state_index_[name] = states_.size();
    states_.push_back({name, data});
  }

  std::vector<Parameter<Real>>& params() { return params_; }
  const std::vector<Parameter<Real>>& params() const { return params_; }
  std::vector<StateBuffer<Real>>& states() { return states_; }
  const std::vector<StateBuffer<Real>>& states() const { return states_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<Parameter<Real>> params_;
  std::vector<StateBuffer<Real>> states_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::size_t> state_index_;
};

// He-style uniform init, gain adjusted for the leaky slope used downstream.
template <typename Real>
std::vector<Real> he_uniform(std::size_t n, std::size_t fan_in, Real slope,
                             std::mt19937& rng) {
  const double gain = std::sqrt(2.0 / (1.0 + static_cast<double>(slope) * slope));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(u(rng));
  return v;
}

}  // namespace tg
