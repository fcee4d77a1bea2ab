#include "zsm/losses.hpp"

#include <stdexcept>
#include <string>

namespace zsm {

void LossWeights::validate() const {
  if (!(lambda1 > 0)) throw std::invalid_argument("lambda1 must be > 0");
  if (lambda2 < 0 || lambda3 < 0) throw std::invalid_argument("lambda2, lambda3 must be >= 0");
}

template <typename T>
Var<T> reconstruction_loss(const std::vector<Var<T>>& pred_hr, const std::vector<Var<T>>& gt_hr) {
  if (pred_hr.size() != gt_hr.size() || pred_hr.empty())
    throw std::invalid_argument("reconstruction_loss: " + std::to_string(pred_hr.size()) +
                                " predicted vs " + std::to_string(gt_hr.size()) + " target frames");
  std::vector<Var<T>> terms;
  terms.reserve(pred_hr.size());
  for (std::size_t t = 0; t < pred_hr.size(); ++t)
    terms.push_back(charbonnier(pred_hr[t], gt_hr[t], T(kCharbonnierEps)));
  return mean_of<T>(terms);
}

template <typename T>
CyclicLoss<T> cyclic_loss_first_order(const std::vector<Var<T>>& interp_features,
                                      const std::vector<Var<T>>& gt_lr, const SynthesisFn<T>& rho) {
  const std::size_t n = interp_features.size();
  if (n == 0 || gt_lr.size() != 2 * n + 1)
    throw std::invalid_argument("cyclic_loss_first_order: " + std::to_string(n) +
                                " synthesized maps need " + std::to_string(2 * n + 1) +
                                " LR frames, got " + std::to_string(gt_lr.size()));
  std::vector<Var<T>> terms;
  for (std::size_t t = 0; t < n; ++t)
    terms.push_back(charbonnier(rho(interp_features[t]), gt_lr[2 * t + 1], T(kCharbonnierEps)));
  return {mean_of<T>(terms), false};
}

template <typename T>
CyclicLoss<T> cyclic_loss_second_order(const std::vector<Var<T>>& interp_features,
                                       const std::vector<Var<T>>& gt_lr,
                                       const InterpolateFn<T>& interp, const SynthesisFn<T>& rho) {
  const std::size_t n = interp_features.size();
  if (gt_lr.size() != 2 * n + 1)
    throw std::invalid_argument("cyclic_loss_second_order: frame count mismatch");
  if (n < 2) return {Var<T>(Tensor<T>(1, 1, 1, 1)), true};
  std::vector<Var<T>> terms;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const auto re = interp(interp_features[t], interp_features[t + 1]);
    terms.push_back(charbonnier(rho(re), gt_lr[2 * t + 2], T(kCharbonnierEps)));
  }
  return {mean_of<T>(terms), false};
}

double total_loss(double l_rec, double l_i1, double l_i2, const LossWeights& w) {
  return w.lambda1 * l_rec + w.lambda2 * l_i1 + w.lambda3 * l_i2;
}

template <typename T>
Var<T> total_loss(const Var<T>& l_rec, const Var<T>& l_i1, const Var<T>& l_i2,
                  const LossWeights& w) {
  return add(add(scale(l_rec, T(w.lambda1)), scale(l_i1, T(w.lambda2))), scale(l_i2, T(w.lambda3)));
}

#define ZSM_INSTANTIATE(T)                                                                        \
  template Var<T> reconstruction_loss<T>(const std::vector<Var<T>>&, const std::vector<Var<T>>&); \
  template CyclicLoss<T> cyclic_loss_first_order<T>(const std::vector<Var<T>>&,                   \
                                                    const std::vector<Var<T>>&,                   \
                                                    const SynthesisFn<T>&);                       \
  template CyclicLoss<T> cyclic_loss_second_order<T>(const std::vector<Var<T>>&,                  \
                                                     const std::vector<Var<T>>&,                  \
                                                     const InterpolateFn<T>&,                     \
                                                     const SynthesisFn<T>&);                      \
  template Var<T> total_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&, const LossWeights&);

ZSM_INSTANTIATE(float)
ZSM_INSTANTIATE(double)
#undef ZSM_INSTANTIATE

}  // namespace zsm
