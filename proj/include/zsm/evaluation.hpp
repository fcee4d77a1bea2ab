#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "zsm/data_pipeline.hpp"
#include "zsm/model.hpp"

namespace zsm {

/// BT.601 studio-swing luma on the [0, 1] scale:
/// Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255. Returns N x 1 x H x W.
Tensor<float> rgb_to_y(const Tensor<float>& rgb);

/// Returned by psnr() for identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0);

/// Mean SSIM over all valid 11x11 windows (Gaussian, sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1. Inputs are single-channel and at least 11x11.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

/// Runs the trained network on n+1 LR frames and returns 2n+1 HR frames in
/// [0, 1]. Sequences longer than `chunk` inputs are processed as overlapping
/// chunks sharing one frame; at each overlap the earlier chunk's output is kept.
FrameSequence infer_sequence(const ZsmModel<float>& model, const FrameSequence& lr_frames,
                             int chunk = 4);

/// Produces 2n+1 HR frames from n+1 LR inputs. `ground_truth` is visible so an
/// oracle can be plugged into the same harness; real predictors ignore it.
using Predictor =
    std::function<FrameSequence(const FrameSequence& lr_inputs, const FrameSequence& ground_truth)>;

Predictor model_predictor(const ZsmModel<float>& model, int chunk = 4);
/// Bicubic x4 of every input; each missing frame repeats its earlier neighbour.
Predictor bicubic_predictor();
/// Returns the ground truth.
Predictor oracle_predictor();

struct FrameScores {
  double psnr = 0, ssim = 0;
};

struct ClipScore {
  std::string id;
  MotionClass motion = MotionClass::unlabeled;
  int frames = 0;               // 2n+1 scored frames
  double psnr = 0, ssim = 0;    // mean over all frames
  double psnr_intermediate = 0; // mean over the synthesized (interpolated) frames
  double ssim_intermediate = 0;
  double seconds = 0;           // predictor wall-clock
  std::vector<FrameScores> per_frame;
};

struct EvalReport {
  std::string predictor;
  std::string degradation = "clean";
  std::size_t parameters = 0;
  std::vector<ClipScore> clips;
  int frames = 0;
  double psnr = 0, ssim = 0, psnr_intermediate = 0, ssim_intermediate = 0;
  double seconds_total = 0, seconds_per_frame = 0;
  std::vector<std::string> warnings;

  /// Recomputes the aggregate fields from `clips` (means of per-clip values,
  /// summed in clip-id order so the result does not depend on input order).
  void aggregate();
};

/// Scores one clip of HR ground truth. Uses the longest odd-length prefix
/// (2n+1 frames, n >= 1), feeds the bicubic-reduced even positions (0-based)
/// after optional degradation, and scores every output on Y.
ClipScore evaluate_clip(const std::string& id, const FrameSequence& hr_frames,
                        const Predictor& predictor, const DegradationSpec& degradation,
                        std::uint64_t seed);

struct EvalOptions {
  DegradationSpec degradation;
  std::uint64_t seed = 0;
  std::string predictor_name = "model";
  std::size_t parameters = 0;
};

/// Evaluates every clip in `clips`; clips whose frames cannot be loaded, or
/// that have fewer than 3 frames, are skipped with a warning in the report.
EvalReport evaluate_dataset(const std::vector<ClipRecord>& clips, const Predictor& predictor,
                            const EvalOptions& opts);

/// Machine-readable CSV: "# key=value" metadata lines, a header, one row per
/// clip and a final row with id "ALL" holding the aggregates.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report_csv(const std::filesystem::path& path);
std::string format_report_table(const EvalReport& report);

}  // namespace zsm
