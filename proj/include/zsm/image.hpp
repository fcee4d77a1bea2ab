#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "zsm/tensor.hpp"

namespace zsm {

/// One RGB frame, 1x3xHxW, values nominally in [0, 1].
using Frame = Tensor<float>;
using FrameSequence = std::vector<Frame>;

/// Reads an 8-bit PNG (gray, gray+alpha, RGB or RGBA) as RGB in [0, 1].
Frame read_png(const std::filesystem::path& path);
/// Writes RGB (or single-channel) data as 8-bit PNG, rounding and clipping to [0, 255].
void write_png(const std::filesystem::path& path, const Frame& frame);

/// 8-bit quantization round trip: round(clip(v) * 255) / 255.
Frame quantize8(const Frame& frame);

/// Stacks single-frame (N=1) tensors along the batch axis.
Frame stack_batch(const std::vector<const Frame*>& frames);
/// Extracts batch element b as an N=1 tensor.
Frame batch_element(const Frame& batch, int b);

}  // namespace zsm
