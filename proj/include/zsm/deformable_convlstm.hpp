#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zsm/core_ops.hpp"
#include "zsm/params.hpp"
#include "zsm/temporal_interpolation.hpp"

namespace zsm {

template <typename T>
struct LstmState {
  Var<T> hidden;
  Var<T> cell;
};

/// Zero hidden/cell maps shaped like `like`.
template <typename T>
LstmState<T> zero_state(const Shape& like);

/// One convolutional LSTM update. `gates` maps [x, h] (2C channels) to 4C
/// channels ordered (input, forget, output, candidate):
///   c' = s(f) * c + s(i) * tanh(g),  h' = s(o) * tanh(c').
template <typename T>
LstmState<T> convlstm_cell(const LstmState<T>& state, const Var<T>& x, const ConvWeights<T>& gates);

/// Deformably aligns a state map to the current input: aligner.align(state, f_t).
template <typename T>
Var<T> align_state(const Var<T>& state_map, const Var<T>& f_t, const Aligner<T>& aligner);

/// Recurrent aggregation over a feature sequence. In deformable mode the
/// previous hidden and cell states are each aligned to the current input
/// before the gate update. In bidirectional mode the same module (shared
/// parameters) also runs over the reversed sequence and the per-step output
/// is [h_forward(t), h_backward(t)].
template <typename T>
class DeformableConvLstm {
 public:
  DeformableConvLstm(ParamStore<T>& store, const std::string& prefix, int channels, int groups,
                     int pcd_levels, bool deformable, bool bidirectional);

  [[nodiscard]] LstmState<T> step(const LstmState<T>& prev, const Var<T>& x) const;
  [[nodiscard]] std::vector<Var<T>> run_direction(const std::vector<Var<T>>& features,
                                                  bool reversed) const;
  /// Per-step outputs with output_channels() channels each.
  [[nodiscard]] std::vector<Var<T>> run(const std::vector<Var<T>>& features) const;

  [[nodiscard]] int output_channels() const { return bidirectional_ ? 2 * channels_ : channels_; }
  [[nodiscard]] bool deformable() const { return deformable_; }
  [[nodiscard]] bool bidirectional() const { return bidirectional_; }
  [[nodiscard]] const ConvWeights<T>& gates() const { return gates_; }
  [[nodiscard]] const Aligner<T>& hidden_aligner() const { return *align_h_; }
  [[nodiscard]] const Aligner<T>& cell_aligner() const { return *align_c_; }

 private:
  int channels_;
  bool deformable_;
  bool bidirectional_;
  ConvWeights<T> gates_;
  std::optional<Aligner<T>> align_h_, align_c_;
};

}  // namespace zsm
