#include "zsm/temporal_interpolation.hpp"

#include <stdexcept>

namespace zsm {

namespace {

template <typename T>
Var<T> lrelu(const Var<T>& x) {
  return leaky_relu(x);
}

void check_pair(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

template <typename T>
Aligner<T>::Aligner(ParamStore<T>& store, const std::string& prefix, int channels, int groups,
                    int pcd_levels)
    : channels_(channels), groups_(groups), pcd_levels_(pcd_levels) {
  if (groups < 1 || channels % groups != 0)
    throw std::invalid_argument("Aligner: channels must be divisible by deformable groups");
  if (pcd_levels != 1 && pcd_levels != 3)
    throw std::invalid_argument("Aligner: pcd_levels must be 1 or 3");
  const int c = channels, off = 2 * 9 * groups;
  if (pcd_levels == 1) {
    conv1_ = store.conv(prefix + ".offset_conv1", 2 * c, c, 3);
    conv2_ = store.conv(prefix + ".offset_conv2", c, c, 3);
    head_ = store.conv(prefix + ".offset_head", c, off, 3, Init::kZero);
    sampler_ = store.conv(prefix + ".sampler", c, c, 3, Init::kIdentity);
    return;
  }
  pyr_l2a_ = store.conv(prefix + ".pyr_l2_conv1", c, c, 3);
  pyr_l2b_ = store.conv(prefix + ".pyr_l2_conv2", c, c, 3);
  pyr_l3a_ = store.conv(prefix + ".pyr_l3_conv1", c, c, 3);
  pyr_l3b_ = store.conv(prefix + ".pyr_l3_conv2", c, c, 3);
  auto level = [&](const std::string& name, bool coarsest, bool fuse) {
    Level lv;
    lv.offset_conv1 = store.conv(prefix + "." + name + ".offset_conv1", 2 * c, c, 3);
    if (coarsest) {
      lv.offset_conv2 = store.conv(prefix + "." + name + ".offset_conv2", c, c, 3);
    } else {
      lv.offset_conv2 = store.conv(prefix + "." + name + ".offset_conv2", 2 * c, c, 3);
      lv.offset_conv3 = store.conv(prefix + "." + name + ".offset_conv3", c, c, 3);
    }
    lv.head = store.conv(prefix + "." + name + ".offset_head", c, off, 3, Init::kZero);
    lv.dcn = store.conv(prefix + "." + name + ".dcn", c, c, 3);
    if (fuse) lv.fea_conv = store.conv(prefix + "." + name + ".fea_conv", 2 * c, c, 3);
    return lv;
  };
  l3_ = level("l3", true, false);
  l2_ = level("l2", false, true);
  l1_ = level("l1", false, true);
  cas_ = level("cas", true, false);
  head_ = l1_.head;
  sampler_ = l1_.dcn;
}

template <typename T>
Var<T> Aligner<T>::predict_offsets(const Var<T>& source, const Var<T>& guide) const {
  check_pair(source.shape(), guide.shape(), "predict_offsets");
  if (pcd_levels_ != 1)
    throw std::logic_error("predict_offsets: pyramid aligners expose only align()");
  auto x = lrelu(conv2d(concat_channels(source, guide), conv1_));
  x = lrelu(conv2d(x, conv2_));
  return conv2d(x, head_);
}

template <typename T>
Var<T> Aligner<T>::sample(const Var<T>& source, const Var<T>& offsets) const {
  return deformable_conv(source, offsets, sampler_, groups_);
}

template <typename T>
Var<T> Aligner<T>::align(const Var<T>& source, const Var<T>& guide) const {
  if (pcd_levels_ == 1) return sample(source, predict_offsets(source, guide));
  check_pair(source.shape(), guide.shape(), "align");
  return align_pyramid(source, guide);
}

template <typename T>
Var<T> Aligner<T>::align_pyramid(const Var<T>& source, const Var<T>& guide) const {
  const Shape s = source.shape();
  if (s.h < 4 || s.w < 4)
    throw std::invalid_argument("pyramid alignment needs spatial dims >= 4, got " + s.str());
  auto down = [&](const Var<T>& x, const ConvWeights<T>& a, const ConvWeights<T>& b) {
    return lrelu(conv2d(lrelu(conv2d(avg_pool2(x), a)), b));
  };
  auto up2 = [](const Var<T>& x, const Shape& like, T mult) {
    auto r = resize_bilinear(x, like.h, like.w);
    return mult == T(1) ? r : scale(r, mult);
  };
  const Var<T> s1 = source, g1 = guide;
  const Var<T> s2 = down(s1, pyr_l2a_, pyr_l2b_), g2 = down(g1, pyr_l2a_, pyr_l2b_);
  const Var<T> s3 = down(s2, pyr_l3a_, pyr_l3b_), g3 = down(g2, pyr_l3a_, pyr_l3b_);

  // coarsest level
  auto off3 = lrelu(conv2d(concat_channels(s3, g3), l3_.offset_conv1));
  off3 = lrelu(conv2d(off3, l3_.offset_conv2));
  auto fea3 = lrelu(deformable_conv(s3, conv2d(off3, l3_.head), l3_.dcn, groups_));

  auto refine = [&](const Level& lv, const Var<T>& src, const Var<T>& gd, const Var<T>& off_up,
                    const Var<T>& fea_up, bool act) {
    auto off = lrelu(conv2d(concat_channels(src, gd), lv.offset_conv1));
    off = lrelu(conv2d(concat_channels(off, up2(off_up, src.shape(), T(2))), lv.offset_conv2));
    off = lrelu(conv2d(off, lv.offset_conv3));
    auto fea = deformable_conv(src, conv2d(off, lv.head), lv.dcn, groups_);
    fea = conv2d(concat_channels(fea, up2(fea_up, src.shape(), T(1))), lv.fea_conv);
    return std::pair{off, act ? lrelu(fea) : fea};
  };
  auto [off2, fea2] = refine(l2_, s2, g2, off3, fea3, true);
  auto [off1, fea1] = refine(l1_, s1, g1, off2, fea2, false);
  (void)off1;

  auto cas = lrelu(conv2d(concat_channels(fea1, g1), cas_.offset_conv1));
  cas = lrelu(conv2d(cas, cas_.offset_conv2));
  return lrelu(deformable_conv(fea1, conv2d(cas, cas_.head), cas_.dcn, groups_));
}

template <typename T>
TemporalInterpolator<T>::TemporalInterpolator(ParamStore<T>& store, const std::string& prefix,
                                              int channels, int groups, int pcd_levels, bool naive)
    : naive_(naive), channels_(channels) {
  if (naive) {
    naive1_ = store.conv(prefix + ".naive_conv1", 2 * channels, channels, 3);
    naive2_ = store.conv(prefix + ".naive_conv2", channels, channels, 3);
    return;
  }
  fwd_.emplace(store, prefix + ".fwd", channels, groups, pcd_levels);
  bwd_.emplace(store, prefix + ".bwd", channels, groups, pcd_levels);
  alpha_ = store.conv(prefix + ".alpha", channels, channels, 1, Init::kZero, false);
  beta_ = store.conv(prefix + ".beta", channels, channels, 1, Init::kZero, false);
  // Start as the plain average of the two sampled maps.
  for (int c = 0; c < channels; ++c) {
    alpha_.weight.mutable_value().at(c, c, 0, 0) = T(0.5);
    beta_.weight.mutable_value().at(c, c, 0, 0) = T(0.5);
  }
}

template <typename T>
Var<T> TemporalInterpolator<T>::interpolate(const Var<T>& f1, const Var<T>& f3) const {
  check_pair(f1.shape(), f3.shape(), "interpolate_intermediate");
  if (f1.shape().c != channels_)
    throw std::invalid_argument("interpolate_intermediate: expected " + std::to_string(channels_) +
                                " channels, got " + std::to_string(f1.shape().c));
  if (naive_) return conv2d(leaky_relu(conv2d(concat_channels(f1, f3), naive1_)), naive2_);
  const auto t1 = fwd_->align(f1, f3);
  const auto t3 = bwd_->align(f3, f1);
  return add(conv2d(t1, alpha_), conv2d(t3, beta_));
}

template <typename T>
std::vector<Var<T>> TemporalInterpolator<T>::interpolate_sequence(
    const std::vector<Var<T>>& features) const {
  if (features.size() < 2)
    throw std::invalid_argument("interpolate_sequence: need at least two feature maps");
  std::vector<Var<T>> out;
  out.reserve(2 * features.size() - 1);
  for (std::size_t i = 0; i + 1 < features.size(); ++i) {
    out.push_back(features[i]);
    out.push_back(interpolate(features[i], features[i + 1]));
  }
  out.push_back(features.back());
  return out;
}

template class Aligner<float>;
template class Aligner<double>;
template class TemporalInterpolator<float>;
template class TemporalInterpolator<double>;

}  // namespace zsm
