#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "zsm/core_ops.hpp"
#include "zsm/deformable_convlstm.hpp"
#include "zsm/params.hpp"
#include "zsm/temporal_interpolation.hpp"

namespace zsm {

/// Ablation ladder:
///   a  naive convolutional feature interpolation, no aggregation
///   b  deformable feature interpolation (DFI), no aggregation
///   c  DFI + unidirectional ConvLSTM
///   d  DFI + unidirectional deformable ConvLSTM
///   e  DFI + bidirectional deformable ConvLSTM
///   f  e + LR synthesis head for guided interpolation losses
enum class Variant { a, b, c, d, e, f };

Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

struct ModelConfig {
  int k1 = 5;   // residual blocks in the feature extractor
  int k2 = 40;  // residual blocks in HR reconstruction
  int k3 = 5;   // residual blocks in the LR synthesis head
  int channels = 64;
  int scale = 4;
  Variant variant = Variant::f;
  int pcd_levels = 1;
  int deformable_groups = 8;

  void validate() const;

  [[nodiscard]] bool naive_interpolation() const { return variant == Variant::a; }
  [[nodiscard]] bool has_lstm() const { return variant >= Variant::c; }
  [[nodiscard]] bool deformable_lstm() const { return variant >= Variant::d; }
  [[nodiscard]] bool bidirectional() const { return variant >= Variant::e; }
  [[nodiscard]] bool has_lr_synthesis() const { return variant == Variant::f; }
  [[nodiscard]] int hidden_channels() const { return bidirectional() ? 2 * channels : channels; }

  /// key=value lines, one per field, in a fixed order.
  [[nodiscard]] std::vector<std::pair<std::string, std::string>> to_pairs() const;
  /// Sets one field by key; returns false for an unknown key.
  bool set(const std::string& key, const std::string& value);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// The full-size configuration (k1=5, k2=40, 64 channels, variant f, 3-level PCD).
ModelConfig full_config();

template <typename T>
struct ForwardResult {
  std::vector<Var<T>> hr_frames;        // 2n+1 frames, 3 x 4H x 4W
  std::vector<Var<T>> interp_features;  // the n synthesized intermediate maps
};

/// One-stage space-time super-resolution network: feature extraction,
/// feature-level temporal interpolation, (bi)directional deformable ConvLSTM
/// aggregation, and sub-pixel HR reconstruction, plus the LR synthesis head
/// used only by the guided interpolation losses.
template <typename T>
class ZsmModel {
 public:
  explicit ZsmModel(const ModelConfig& config, std::uint64_t seed = 0);

  ZsmModel(const ZsmModel&) = delete;
  ZsmModel& operator=(const ZsmModel&) = delete;
  ZsmModel(ZsmModel&&) noexcept = default;

  [[nodiscard]] std::vector<Var<T>> extract_features(const std::vector<Var<T>>& frames) const;
  [[nodiscard]] Var<T> extract_features(const Var<T>& frame) const;
  [[nodiscard]] Var<T> reconstruct_hr(const Var<T>& hidden) const;
  [[nodiscard]] Var<T> synthesize_lr(const Var<T>& feature) const;
  [[nodiscard]] std::vector<Var<T>> aggregate(const std::vector<Var<T>>& features) const;
  [[nodiscard]] ForwardResult<T> forward(const std::vector<Var<T>>& lr_frames) const;

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] ParamStore<T>& params() { return *store_; }
  [[nodiscard]] const ParamStore<T>& params() const { return *store_; }
  [[nodiscard]] const TemporalInterpolator<T>& interpolator() const { return *interp_; }
  [[nodiscard]] const DeformableConvLstm<T>* lstm() const { return lstm_.get(); }

 private:
  struct Residual {
    ConvWeights<T> conv1, conv2;
  };
  std::vector<Residual> residual_stack(const std::string& prefix, int count);
  static Var<T> run_stack(Var<T> x, const std::vector<Residual>& stack);

  ModelConfig config_;
  std::unique_ptr<ParamStore<T>> store_;
  ConvWeights<T> conv_first_;
  std::vector<Residual> extract_blocks_;
  std::unique_ptr<TemporalInterpolator<T>> interp_;
  std::unique_ptr<DeformableConvLstm<T>> lstm_;
  ConvWeights<T> fusion_;
  std::vector<Residual> recon_blocks_;
  ConvWeights<T> upconv1_, upconv2_, conv_last_;
  std::vector<Residual> synth_blocks_;
  ConvWeights<T> synth_last_;
};

/// Learnable scalar count of the model instantiated from `config`.
std::size_t count_parameters(const ModelConfig& config);

/// Clamp to [0, 1] (inference output range).
template <typename T>
Tensor<T> clamp01(Tensor<T> t);

}  // namespace zsm
