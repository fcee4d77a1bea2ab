#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zsm/core_ops.hpp"

namespace zsm {

enum class Init {
  kHe,        // He-uniform for leaky-ReLU fan-in, zero bias
  kResidual,  // kHe scaled by 0.1 (residual branches start near identity)
  kZero,      // all zeros (offset heads)
  kIdentity,  // centre tap = identity, other taps zero (square channel map)
};

/// Ordered, named set of learnable tensors. Initial values depend only on
/// (seed, name), so two models built from the same seed agree on every
/// parameter they have in common.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  Var<T> add(const std::string& name, Shape shape, Init init, int fan_in);
  ConvWeights<T> conv(const std::string& name, int in, int out, int kernel, Init init = Init::kHe,
                      bool bias = true);

  [[nodiscard]] bool contains(const std::string& name) const { return index_.count(name) > 0; }
  [[nodiscard]] Var<T> get(const std::string& name) const;
  [[nodiscard]] const std::vector<std::pair<std::string, Var<T>>>& entries() const {
    return entries_;
  }
  [[nodiscard]] std::size_t total() const;
  void zero_grad();

 private:
  std::uint64_t seed_;
  std::vector<std::pair<std::string, Var<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Per-module scalar counts keyed by the first dotted component of each name.
template <typename T>
std::map<std::string, std::size_t> parameter_breakdown(const ParamStore<T>& store);

}  // namespace zsm
