#pragma once

#include <functional>
#include <vector>

#include "zsm/core_ops.hpp"

namespace zsm {

inline constexpr double kCharbonnierEps = 1e-3;

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  double lambda3 = 0.05;

  void validate() const;
};

/// Mean over frames of the per-frame Charbonnier penalty.
template <typename T>
Var<T> reconstruction_loss(const std::vector<Var<T>>& pred_hr, const std::vector<Var<T>>& gt_hr);

template <typename T>
using SynthesisFn = std::function<Var<T>(const Var<T>&)>;
template <typename T>
using InterpolateFn = std::function<Var<T>(const Var<T>&, const Var<T>&)>;

template <typename T>
struct CyclicLoss {
  Var<T> value;             // scalar; zero constant when degenerate
  bool degenerate = false;  // no terms existed
};

/// Charbonnier between each synthesized intermediate map (pushed through the
/// LR synthesis head) and the ground-truth LR frame it stands for. `gt_lr`
/// holds all 2n+1 LR frames; the targets are positions 1, 3, ... (0-based).
template <typename T>
CyclicLoss<T> cyclic_loss_first_order(const std::vector<Var<T>>& interp_features,
                                      const std::vector<Var<T>>& gt_lr, const SynthesisFn<T>& rho);

/// Re-interpolates consecutive synthesized maps and scores the results against
/// the original LR frames between them (0-based positions 2, 4, ..., 2n-2).
template <typename T>
CyclicLoss<T> cyclic_loss_second_order(const std::vector<Var<T>>& interp_features,
                                       const std::vector<Var<T>>& gt_lr,
                                       const InterpolateFn<T>& interp, const SynthesisFn<T>& rho);

double total_loss(double l_rec, double l_i1, double l_i2, const LossWeights& w);

template <typename T>
Var<T> total_loss(const Var<T>& l_rec, const Var<T>& l_i1, const Var<T>& l_i2,
                  const LossWeights& w);

}  // namespace zsm
