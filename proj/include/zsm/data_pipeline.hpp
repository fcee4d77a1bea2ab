#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zsm/image.hpp"
#include "zsm/random.hpp"

namespace zsm {

// ---------------------------------------------------------------------------
// Resampling

/// Keys cubic convolution kernel; a = -0.5 is the standard bicubic choice.
double cubic_kernel(double x, double a = -0.5);

/// Interpolation weights for the four taps at offsets -1, 0, +1, +2 around a
/// sample whose fractional position past the second tap is `phase` in [0, 1).
std::array<double, 4> bicubic_weights(double phase);

/// Antialiased bicubic reduction by an integer factor (kernel stretched by the
/// factor, symmetric border extension). Output is clipped to [0, 1].
Frame bicubic_downsample(const Frame& frame, int factor = 4);

/// Plain bicubic enlargement by an integer factor, clipped to [0, 1].
Frame bicubic_upsample(const Frame& frame, int factor = 4);

/// Crops to the largest size whose height and width are multiples of `m`.
Frame crop_to_multiple(const Frame& frame, int m);
Frame crop(const Frame& frame, int top, int left, int height, int width);

// ---------------------------------------------------------------------------
// Augmentation

enum class Rotation { r0 = 0, r90 = 1, r180 = 2, r270 = 3 };

Frame rotate(const Frame& frame, Rotation rotation);
Frame hflip(const Frame& frame);

/// Counter-clockwise rotation followed by an optional horizontal flip, applied
/// identically to every frame. 90/270 degree rotations need square frames.
FrameSequence augment(const FrameSequence& frames, Rotation rotation, bool flip);
/// Inverse of augment(frames, rotation, flip).
FrameSequence augment_inverse(const FrameSequence& frames, Rotation rotation, bool flip);

// ---------------------------------------------------------------------------
// Degradations (applied to LR inputs only)

struct DegradationSpec {
  enum class Kind { clean, mixed_noise, jpeg };
  Kind kind = Kind::clean;
  double gaussian_sigma = 0.1;  // on the [0, 1] scale
  double sp_ratio = 0.1;        // fraction of pixels forced to 0 or 1
  int quality_factor = 0;       // set iff kind == jpeg

  void validate() const;
  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

/// Parses `kind[:k=v,...]`: "clean", "noise[:sigma=S,sp=P]", "jpeg:Q" or "jpeg:qf=Q".
DegradationSpec parse_degradation(const std::string& text);
std::string to_string(const DegradationSpec& spec);

/// Gaussian noise (per channel) then salt-and-pepper: each pixel independently
/// with probability sp_ratio has all channels set to 0 or 1 (equiprobable).
Frame degrade_noise(const Frame& frame, const DegradationSpec& spec, Rng& rng);
/// Baseline JPEG encode/decode round trip (4:2:0) at the given quality.
Frame degrade_jpeg(const Frame& frame, int quality_factor);
Frame degrade(const Frame& frame, const DegradationSpec& spec, Rng& rng);

// ---------------------------------------------------------------------------
// Datasets

enum class Split { train, test };
enum class MotionClass { fast, medium, slow, unlabeled };

std::string to_string(Split s);
std::string to_string(MotionClass m);
Split parse_split(const std::string& s);
MotionClass parse_motion(const std::string& s);

struct ClipRecord {
  std::string id;
  std::vector<std::filesystem::path> frame_paths;
  Split split = Split::train;
  MotionClass motion = MotionClass::unlabeled;
};

/// Reads `root/index.txt` (lines "id,split,motion"; '#' starts a comment) and
/// resolves frames `root/<split>/<id>/frame_01.png`, frame_02.png, ...
std::vector<ClipRecord> load_index(const std::filesystem::path& root);
void write_index(const std::filesystem::path& root, const std::vector<ClipRecord>& clips);
std::filesystem::path clip_dir(const std::filesystem::path& root, const ClipRecord& clip);
std::filesystem::path frame_path(const std::filesystem::path& dir, int one_based_index);
FrameSequence load_frames(const ClipRecord& clip);

struct SyntheticOptions {
  int frames = 7;
  int height = 128;
  int width = 128;
  int rectangles = 3;
  double max_speed = 4.0;  // HR pixels per frame
};

/// Moving textured rectangles over a smooth textured background. Edges are
/// area-antialiased so every frame is a band-limited-ish natural-looking image.
FrameSequence synthesize_clip(const SyntheticOptions& opts, std::uint64_t seed,
                              MotionClass* motion = nullptr);

/// Writes `count` clips plus the index under `root`; returns their records.
std::vector<ClipRecord> write_synthetic_dataset(const std::filesystem::path& root, int count,
                                                const SyntheticOptions& opts, std::uint64_t seed,
                                                Split split = Split::train);

// ---------------------------------------------------------------------------
// Training samples

struct SampleOptions {
  int hr_patch = 128;  // LR patch is hr_patch / 4
  bool augment = true;
  int scale = 4;
};

struct TrainingSample {
  FrameSequence lr_inputs;   // LR frames 1, 3, 5, 7 (1-based)
  FrameSequence hr_targets;  // all 7 HR crops
  FrameSequence lr_targets;  // all 7 LR frames
};

/// Random 7-frame window, shared random crop, shared random rotation/flip,
/// then bicubic reduction.
TrainingSample make_training_sample(const FrameSequence& clip_frames, Rng& rng,
                                    const SampleOptions& opts = {});

}  // namespace zsm
