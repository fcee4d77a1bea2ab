#include "zsm/model.hpp"

#include <charconv>
#include <stdexcept>

namespace zsm {

Variant parse_variant(const std::string& s) {
  if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'f') return static_cast<Variant>(s[0] - 'a');
  throw std::invalid_argument("unknown variant '" + s + "' (expected a..f)");
}

std::string to_string(Variant v) { return std::string(1, static_cast<char>('a' + static_cast<int>(v))); }

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
  if (k1 < 0 || k2 < 0 || k3 < 0) fail("k1, k2, k3 must be >= 0");
  if (channels < 1) fail("channels must be >= 1");
  if (scale != 4) fail("scale is fixed to 4");
  if (pcd_levels != 1 && pcd_levels != 3) fail("pcd_levels must be 1 or 3");
  if (deformable_groups < 1 || channels % deformable_groups != 0)
    fail("channels must be divisible by deformable_groups");
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_pairs() const {
  return {{"k1", std::to_string(k1)},
          {"k2", std::to_string(k2)},
          {"k3", std::to_string(k3)},
          {"channels", std::to_string(channels)},
          {"scale", std::to_string(scale)},
          {"variant", to_string(variant)},
          {"pcd_levels", std::to_string(pcd_levels)},
          {"deformable_groups", std::to_string(deformable_groups)}};
}

namespace {
int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end)
    throw std::invalid_argument("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}
}  // namespace

bool ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "k1") k1 = parse_int(key, value);
  else if (key == "k2") k2 = parse_int(key, value);
  else if (key == "k3") k3 = parse_int(key, value);
  else if (key == "channels") channels = parse_int(key, value);
  else if (key == "scale") scale = parse_int(key, value);
  else if (key == "variant") variant = parse_variant(value);
  else if (key == "pcd_levels") pcd_levels = parse_int(key, value);
  else if (key == "deformable_groups") deformable_groups = parse_int(key, value);
  else return false;
  return true;
}

ModelConfig full_config() {
  ModelConfig c;
  c.k1 = 5;
  c.k2 = 40;
  c.k3 = 5;
  c.channels = 64;
  c.variant = Variant::f;
  c.pcd_levels = 3;
  c.deformable_groups = 8;
  return c;
}

template <typename T>
ZsmModel<T>::ZsmModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), store_(std::make_unique<ParamStore<T>>(seed)) {
  config_.validate();
  const int c = config_.channels;
  auto& s = *store_;
  conv_first_ = s.conv("extract.conv_first", 3, c, 3);
  extract_blocks_ = residual_stack("extract", config_.k1);
  interp_ = std::make_unique<TemporalInterpolator<T>>(s, "interp", c, config_.deformable_groups,
                                                      config_.pcd_levels,
                                                      config_.naive_interpolation());
  if (config_.has_lstm())
    lstm_ = std::make_unique<DeformableConvLstm<T>>(s, "lstm", c, config_.deformable_groups,
                                                    config_.pcd_levels, config_.deformable_lstm(),
                                                    config_.bidirectional());
  if (config_.bidirectional()) fusion_ = s.conv("recon.fusion", 2 * c, c, 1);
  recon_blocks_ = residual_stack("recon", config_.k2);
  upconv1_ = s.conv("recon.upconv1", c, 4 * c, 3);
  upconv2_ = s.conv("recon.upconv2", c, 4 * c, 3);
  conv_last_ = s.conv("recon.conv_last", c, 3, 3);
  if (config_.has_lr_synthesis()) {
    synth_blocks_ = residual_stack("lr_synth", config_.k3);
    synth_last_ = s.conv("lr_synth.conv_last", c, 3, 3);
  }
}

template <typename T>
std::vector<typename ZsmModel<T>::Residual> ZsmModel<T>::residual_stack(const std::string& prefix,
                                                                        int count) {
  std::vector<Residual> out;
  const int c = config_.channels;
  for (int i = 0; i < count; ++i) {
    const std::string p = prefix + ".res" + std::to_string(i);
    out.push_back({store_->conv(p + ".conv1", c, c, 3, Init::kResidual),
                   store_->conv(p + ".conv2", c, c, 3, Init::kResidual)});
  }
  return out;
}

template <typename T>
Var<T> ZsmModel<T>::run_stack(Var<T> x, const std::vector<Residual>& stack) {
  for (const auto& r : stack) x = residual_block(x, r.conv1, r.conv2);
  return x;
}

template <typename T>
Var<T> ZsmModel<T>::extract_features(const Var<T>& frame) const {
  if (frame.shape().c != 3)
    throw std::invalid_argument("extract_features: frames must have 3 channels, got " +
                                std::to_string(frame.shape().c));
  return run_stack(leaky_relu(conv2d(frame, conv_first_)), extract_blocks_);
}

template <typename T>
std::vector<Var<T>> ZsmModel<T>::extract_features(const std::vector<Var<T>>& frames) const {
  std::vector<Var<T>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(extract_features(f));
  return out;
}

template <typename T>
Var<T> ZsmModel<T>::reconstruct_hr(const Var<T>& hidden) const {
  if (hidden.shape().c != config_.hidden_channels())
    throw std::invalid_argument("reconstruct_hr: variant " + to_string(config_.variant) +
                                " expects " + std::to_string(config_.hidden_channels()) +
                                " channels, got " + std::to_string(hidden.shape().c));
  Var<T> x = config_.bidirectional() ? conv2d(hidden, fusion_) : hidden;
  x = run_stack(x, recon_blocks_);
  x = leaky_relu(pixel_shuffle(conv2d(x, upconv1_), 2));
  x = leaky_relu(pixel_shuffle(conv2d(x, upconv2_), 2));
  return conv2d(x, conv_last_);
}

template <typename T>
Var<T> ZsmModel<T>::synthesize_lr(const Var<T>& feature) const {
  if (!config_.has_lr_synthesis())
    throw std::logic_error("synthesize_lr: variant " + to_string(config_.variant) +
                           " has no LR synthesis head");
  if (feature.shape().c != config_.channels)
    throw std::invalid_argument("synthesize_lr: expected " + std::to_string(config_.channels) +
                                " channels, got " + std::to_string(feature.shape().c));
  return conv2d(run_stack(feature, synth_blocks_), synth_last_);
}

template <typename T>
std::vector<Var<T>> ZsmModel<T>::aggregate(const std::vector<Var<T>>& features) const {
  if (!lstm_) return features;
  return lstm_->run(features);
}

template <typename T>
ForwardResult<T> ZsmModel<T>::forward(const std::vector<Var<T>>& lr_frames) const {
  if (lr_frames.size() < 2)
    throw std::invalid_argument("forward: need at least 2 input frames, got " +
                                std::to_string(lr_frames.size()));
  for (const auto& f : lr_frames)
    if (f.shape() != lr_frames.front().shape())
      throw std::invalid_argument("forward: input frames differ in shape");
  const auto sequence = interp_->interpolate_sequence(extract_features(lr_frames));
  ForwardResult<T> out;
  for (std::size_t t = 1; t < sequence.size(); t += 2) out.interp_features.push_back(sequence[t]);
  const auto hidden = aggregate(sequence);
  out.hr_frames.reserve(hidden.size());
  for (const auto& h : hidden) out.hr_frames.push_back(reconstruct_hr(h));
  return out;
}

std::size_t count_parameters(const ModelConfig& config) {
  return ZsmModel<float>(config).params().total();
}

template <typename T>
Tensor<T> clamp01(Tensor<T> t) {
  for (auto& v : t.span()) v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
  return t;
}

template class ZsmModel<float>;
template class ZsmModel<double>;
template Tensor<float> clamp01(Tensor<float>);
template Tensor<double> clamp01(Tensor<double>);

}  // namespace zsm
