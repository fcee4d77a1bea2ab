#include "zsm/deformable_convlstm.hpp"

#include <stdexcept>

namespace zsm {

template <typename T>
LstmState<T> zero_state(const Shape& like) {
  return {Var<T>(Tensor<T>(like)), Var<T>(Tensor<T>(like))};
}

template <typename T>
LstmState<T> convlstm_cell(const LstmState<T>& state, const Var<T>& x, const ConvWeights<T>& gates) {
  const Shape hs = state.hidden.shape();
  if (state.cell.shape() != hs)
    throw std::invalid_argument("convlstm_cell: hidden/cell shape mismatch");
  const Shape xs = x.shape();
  if (xs.n != hs.n || xs.h != hs.h || xs.w != hs.w)
    throw std::invalid_argument("convlstm_cell: input " + xs.str() + " incompatible with state " +
                                hs.str());
  const int c = hs.c;
  if (gates.in_channels() != xs.c + c || gates.out_channels() != 4 * c)
    throw std::invalid_argument("convlstm_cell: gate weights do not match [x, h] -> 4C");
  const auto z = conv2d(concat_channels(x, state.hidden), gates);
  const auto i = sigmoid(slice_channels(z, 0, c));
  const auto f = sigmoid(slice_channels(z, c, c));
  const auto o = sigmoid(slice_channels(z, 2 * c, c));
  const auto g = tanh(slice_channels(z, 3 * c, c));
  auto cell = add(mul(f, state.cell), mul(i, g));
  auto hidden = mul(o, tanh(cell));
  return {std::move(hidden), std::move(cell)};
}

template <typename T>
Var<T> align_state(const Var<T>& state_map, const Var<T>& f_t, const Aligner<T>& aligner) {
  if (state_map.shape() != f_t.shape())
    throw std::invalid_argument("align_state: state " + state_map.shape().str() +
                                " and input " + f_t.shape().str() + " differ");
  return aligner.align(state_map, f_t);
}

template <typename T>
DeformableConvLstm<T>::DeformableConvLstm(ParamStore<T>& store, const std::string& prefix,
                                          int channels, int groups, int pcd_levels,
                                          bool deformable, bool bidirectional)
    : channels_(channels), deformable_(deformable), bidirectional_(bidirectional) {
  gates_ = store.conv(prefix + ".gates", 2 * channels, 4 * channels, 3);
  if (deformable) {
    align_h_.emplace(store, prefix + ".align_h", channels, groups, pcd_levels);
    align_c_.emplace(store, prefix + ".align_c", channels, groups, pcd_levels);
  }
}

template <typename T>
LstmState<T> DeformableConvLstm<T>::step(const LstmState<T>& prev, const Var<T>& x) const {
  if (!deformable_) return convlstm_cell(prev, x, gates_);
  LstmState<T> aligned{align_state(prev.hidden, x, *align_h_), align_state(prev.cell, x, *align_c_)};
  return convlstm_cell(aligned, x, gates_);
}

template <typename T>
std::vector<Var<T>> DeformableConvLstm<T>::run_direction(const std::vector<Var<T>>& features,
                                                         bool reversed) const {
  const std::size_t n = features.size();
  std::vector<Var<T>> out(n);
  LstmState<T> state = zero_state<T>(features.front().shape());
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = reversed ? n - 1 - k : k;
    state = step(state, features[t]);
    out[t] = state.hidden;
  }
  return out;
}

template <typename T>
std::vector<Var<T>> DeformableConvLstm<T>::run(const std::vector<Var<T>>& features) const {
  if (features.empty()) throw std::invalid_argument("bidirectional_pass: empty sequence");
  for (const auto& f : features)
    if (f.shape() != features.front().shape() || f.shape().c != channels_)
      throw std::invalid_argument("bidirectional_pass: inconsistent feature shapes");
  auto fwd = run_direction(features, false);
  if (!bidirectional_) return fwd;
  auto bwd = run_direction(features, true);
  std::vector<Var<T>> out;
  out.reserve(features.size());
  for (std::size_t t = 0; t < features.size(); ++t) out.push_back(concat_channels(fwd[t], bwd[t]));
  return out;
}

#define ZSM_INSTANTIATE(T)                                                                          \
  template LstmState<T> zero_state<T>(const Shape&);                                                \
  template LstmState<T> convlstm_cell<T>(const LstmState<T>&, const Var<T>&, const ConvWeights<T>&); \
  template Var<T> align_state<T>(const Var<T>&, const Var<T>&, const Aligner<T>&);                 \
  template class DeformableConvLstm<T>;

ZSM_INSTANTIATE(float)
ZSM_INSTANTIATE(double)
#undef ZSM_INSTANTIATE

}  // namespace zsm
