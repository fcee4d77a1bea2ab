#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zsm/core_ops.hpp"
#include "zsm/params.hpp"

namespace zsm {

/// Offset predictor g plus deformable sampler T. Given the map to be sampled
/// and a guide map, predicts per-tap offsets from their channel concatenation
/// and resamples the first map with them.
///
/// With pcd_levels == 1 the predictor is two 3x3 conv + leaky ReLU layers and
/// a zero-initialized 3x3 offset head. With pcd_levels == 3 the module runs a
/// pyramid/cascading alignment: offsets and aligned features are estimated at
/// 1/4 and 1/2 scale, refined at full scale, then passed through one more
/// cascaded deformable stage. Both modes start with exactly zero offsets.
template <typename T>
class Aligner {
 public:
  Aligner(ParamStore<T>& store, const std::string& prefix, int channels, int groups,
          int pcd_levels);

  /// Single-level offsets for [source, guide]; 2*9*groups channels.
  [[nodiscard]] Var<T> predict_offsets(const Var<T>& source, const Var<T>& guide) const;
  /// deformable_conv(source, offsets, sampler).
  [[nodiscard]] Var<T> sample(const Var<T>& source, const Var<T>& offsets) const;
  /// Full alignment of `source` towards `guide` (dispatches on pcd_levels).
  [[nodiscard]] Var<T> align(const Var<T>& source, const Var<T>& guide) const;

  [[nodiscard]] const ConvWeights<T>& sampler() const { return sampler_; }
  [[nodiscard]] const ConvWeights<T>& offset_head() const { return head_; }
  [[nodiscard]] int groups() const { return groups_; }
  [[nodiscard]] int pcd_levels() const { return pcd_levels_; }

 private:
  struct Level {
    ConvWeights<T> offset_conv1, offset_conv2, offset_conv3, head, dcn, fea_conv;
  };

  [[nodiscard]] Var<T> align_pyramid(const Var<T>& source, const Var<T>& guide) const;

  int channels_;
  int groups_;
  int pcd_levels_;
  // single-level path
  ConvWeights<T> conv1_, conv2_, head_, sampler_;
  // pyramid path
  ConvWeights<T> pyr_l2a_, pyr_l2b_, pyr_l3a_, pyr_l3b_;
  Level l3_, l2_, l1_, cas_;
};

/// Synthesizes the feature map of a missing middle frame:
///   F2 = alpha * T1(F1, g1([F1, F3])) + beta * T3(F3, g3([F3, F1]))
/// with alpha, beta bias-free 1x1 convolutions. In naive mode the module is
/// instead two plain 3x3 convolutions over [F1, F3].
template <typename T>
class TemporalInterpolator {
 public:
  TemporalInterpolator(ParamStore<T>& store, const std::string& prefix, int channels, int groups,
                       int pcd_levels, bool naive);

  [[nodiscard]] Var<T> interpolate(const Var<T>& f1, const Var<T>& f3) const;

  /// [F1, F3, F5, ...] (n+1 maps) -> [F1, F2, F3, ..., F_{2n+1}]. The
  /// odd positions hold the input handles themselves.
  [[nodiscard]] std::vector<Var<T>> interpolate_sequence(const std::vector<Var<T>>& features) const;

  [[nodiscard]] bool naive() const { return naive_; }
  [[nodiscard]] const Aligner<T>& forward_aligner() const { return *fwd_; }
  [[nodiscard]] const Aligner<T>& backward_aligner() const { return *bwd_; }
  [[nodiscard]] const ConvWeights<T>& alpha() const { return alpha_; }
  [[nodiscard]] const ConvWeights<T>& beta() const { return beta_; }

 private:
  bool naive_;
  int channels_;
  std::optional<Aligner<T>> fwd_, bwd_;  // absent in naive mode
  ConvWeights<T> alpha_, beta_;
  ConvWeights<T> naive1_, naive2_;
};

}  // namespace zsm
