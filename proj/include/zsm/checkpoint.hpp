#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zsm/model.hpp"

namespace zsm {

inline constexpr int kCheckpointVersion = 1;

struct NamedBlob {
  std::string name;
  Tensor<float> data;
};

/// Model configuration, parameters and (optionally) Adam moments.
///
/// On disk: a text header
///
///   ZSMCKPT
///   version=1
///   k1=5 ... (one line per ModelConfig field)
///   step=<optimizer steps taken>
///   params=<count>
///   optimizer=<count>
///   END
///
/// followed by params + optimizer records, each: u32 name length, name bytes,
/// four u32 dims (n, c, h, w), then little-endian float32 values.
struct Checkpoint {
  int version = kCheckpointVersion;
  ModelConfig config;
  std::uint64_t step = 0;
  std::vector<NamedBlob> params;
  std::vector<NamedBlob> optimizer;  // "adam.m/<param>" and "adam.v/<param>"
};

/// Snapshot of the model's parameters (no optimizer state).
Checkpoint capture(const ZsmModel<float>& model, std::uint64_t step = 0);

/// Copies parameters into `model`. The parameter names and shapes must match
/// the model's exactly; otherwise throws std::invalid_argument naming the first
/// mismatch.
void apply(const Checkpoint& ckpt, ZsmModel<float>& model);

/// Builds a model from the checkpoint's config and loads its parameters.
ZsmModel<float> model_from_checkpoint(const Checkpoint& ckpt);

/// Atomic write (temporary file + rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws std::runtime_error on a malformed or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace zsm
