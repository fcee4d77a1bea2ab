// zsm: train, run and score the space-time super-resolution network.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "zsm/checkpoint.hpp"
#include "zsm/data_pipeline.hpp"
#include "zsm/evaluation.hpp"
#include "zsm/run_config.hpp"
#include "zsm/training.hpp"

namespace fs = std::filesystem;
using namespace zsm;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNonFinite = 3;

// Bad config, path or spec string.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "run config file (key=value lines)");
    cmd->add_option("--set", overrides, "override a config key, e.g. --set variant=a")
        ->type_name("KEY=VALUE");
    cmd->add_option("--seed", seed, "random seed (overrides the config)");
    cmd->footer("Config keys:\n" + documented_keys_help());
  }

  [[nodiscard]] bool any_model_override() const { return !config.empty() || !overrides.empty(); }

  RunSettings resolve() const {
    RunSettings s;
    if (!config.empty()) {
      if (!fs::exists(config)) throw UsageError("config file not found: " + config);
      s = load_run_config(config);
    }
    for (const auto& o : overrides) s.set_assignment(o);
    if (seed) s.train.seed = *seed;
    return s;
  }
};

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

Checkpoint read_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  try {
    return load_checkpoint(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

// ---------------------------------------------------------------------------

struct TrainCmd {
  ConfigArgs cfg;
  std::string out, dataset, resume;
  int log_every = 50;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("train", "train a model on a dataset");
    cfg.attach(c);
    c->add_option("--out", out, "output directory for checkpoints and metrics.csv")->required();
    c->add_option("--dataset", dataset, "dataset root (overrides the config)");
    c->add_option("--resume", resume, "checkpoint to resume from");
    c->add_option("--log-every", log_every, "print progress every N steps (0 = quiet)");
    c->callback([this] { run(); });
  }

  void run() {
    RunSettings s = cfg.resolve();
    if (!dataset.empty()) s.dataset = dataset;
    if (s.dataset.empty()) throw UsageError("no dataset given (set 'dataset' or --dataset)");
    if (!fs::exists(fs::path(s.dataset) / "index.txt"))
      throw UsageError("dataset index not found: " + (fs::path(s.dataset) / "index.txt").string());
    try {
      s.model.validate();
      s.train.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    TrainingSet data = load_training_set(s.dataset);
    TrainOptions opts;
    opts.out_dir = out;
    if (!resume.empty()) {
      opts.resume = read_checkpoint(resume);
      if (!(opts.resume->config == s.model))
        throw UsageError("resume checkpoint model config differs from the run config");
    }
    opts.on_step = [this](const StepMetrics& m) {
      if (log_every > 0 && m.step % static_cast<std::uint64_t>(log_every) == 0)
        std::printf("step %llu  lr %.3e  l_rec %.5f  l_i1 %.5f  l_i2 %.5f  total %.5f\n",
                    static_cast<unsigned long long>(m.step), m.lr, m.l_rec, m.l_i1, m.l_i2,
                    m.total);
      std::fflush(stdout);
    };
    std::printf("training variant %s on %zu clips, %zu parameters\n",
                to_string(s.model.variant).c_str(), data.clips.size(),
                count_parameters(s.model));
    const TrainResult r = train(s.model, s.train, data, opts);
    std::printf("done: %zu steps, final checkpoint %s\n", r.history.size(),
                (fs::path(out) / "final.bin").string().c_str());
  }
};

struct InferCmd {
  ConfigArgs cfg;
  std::string checkpoint, input, out;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("infer", "upsample a directory of LR frames");
    cfg.attach(c);
    c->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    c->add_option("--input", input, "directory of LR PNG frames (sorted by name)")->required();
    c->add_option("--out", out, "output directory for out_%03d.png")->required();
    c->callback([this] { run(); });
  }

  void run() {
    const Checkpoint ckpt = read_checkpoint(checkpoint);
    if (cfg.any_model_override()) {
      const RunSettings s = cfg.resolve();
      if (!(s.model == ckpt.config))
        throw UsageError("checkpoint was trained as variant " + to_string(ckpt.config.variant) +
                         " with a different model config than requested (variant " +
                         to_string(s.model.variant) + ")");
    }
    const auto files = png_files(input);
    if (files.size() < 2) throw UsageError("need at least 2 PNG frames in " + input);
    FrameSequence frames;
    for (const auto& f : files) frames.push_back(read_png(f));
    for (const auto& f : frames)
      if (f.shape() != frames.front().shape()) throw UsageError("input frames differ in size");
    const ZsmModel<float> model = model_from_checkpoint(ckpt);
    const FrameSequence hr = infer_sequence(model, frames);
    fs::create_directories(out);
    for (std::size_t i = 0; i < hr.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "out_%03zu.png", i + 1);
      write_png(fs::path(out) / name, hr[i]);
    }
    std::printf("%zu input frames -> %zu output frames in %s\n", frames.size(), hr.size(),
                out.c_str());
  }
};

struct EvalCmd {
  std::string checkpoint, dataset, degrade = "clean", report, predictor = "model", split = "all";
  std::uint64_t seed = 0;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "score a predictor on a dataset (Y-channel PSNR/SSIM)");
    c->add_option("--checkpoint", checkpoint, "trained checkpoint (predictor=model)");
    c->add_option("--dataset", dataset, "dataset root containing index.txt")->required();
    c->add_option("--predictor", predictor, "model | bicubic | oracle")
        ->check(CLI::IsMember({"model", "bicubic", "oracle"}));
    c->add_option("--degrade", degrade,
                  "input corruption: clean | noise[:sigma=S,sp=P] | jpeg:Q with Q in {10,20,30,40}");
    c->add_option("--split", split, "train | test | all")->check(CLI::IsMember({"train", "test", "all"}));
    c->add_option("--report", report, "write the CSV report here");
    c->add_option("--seed", seed, "seed for noise degradation");
    c->callback([this] { run(); });
  }

  void run() {
    DegradationSpec spec;
    try {
      spec = parse_degradation(degrade);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (spec.kind == DegradationSpec::Kind::jpeg &&
        !std::set<int>{10, 20, 30, 40}.count(spec.quality_factor))
      throw UsageError("eval accepts JPEG quality factors 10, 20, 30 or 40, got " +
                       std::to_string(spec.quality_factor));
    if (!fs::exists(fs::path(dataset) / "index.txt"))
      throw UsageError("dataset index not found under " + dataset);
    std::vector<ClipRecord> clips;
    try {
      for (auto& c : load_index(dataset))
        if (split == "all" || to_string(c.split) == split) clips.push_back(std::move(c));
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    if (clips.empty()) throw UsageError("no clips found in " + dataset + " (split " + split + ")");

    std::optional<ZsmModel<float>> model;
    Predictor pred;
    EvalOptions opts;
    opts.degradation = spec;
    opts.seed = seed;
    opts.predictor_name = predictor;
    if (predictor == "model") {
      if (checkpoint.empty()) throw UsageError("--checkpoint is required for predictor=model");
      model.emplace(model_from_checkpoint(read_checkpoint(checkpoint)));
      pred = model_predictor(*model);
      opts.parameters = model->params().total();
    } else {
      pred = predictor == "bicubic" ? bicubic_predictor() : oracle_predictor();
    }
    const EvalReport r = evaluate_dataset(clips, pred, opts);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    if (r.clips.empty()) throw UsageError("no clips could be scored");
    std::cout << format_report_table(r);
    if (!report.empty()) write_report_csv(report, r);
  }
};

struct DegradeCmd {
  std::string spec, input, out;
  std::uint64_t seed = 0;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("degrade", "write corrupted copies of a directory of PNG frames");
    c->add_option("--spec", spec, "clean | noise[:sigma=S,sp=P] | jpeg:Q")->required();
    c->add_option("input", input, "input frame directory")->required();
    c->add_option("output", out, "output directory")->required();
    c->add_option("--seed", seed, "random seed");
    c->callback([this] { run(); });
  }

  void run() {
    DegradationSpec d;
    try {
      d = parse_degradation(spec);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    const auto files = png_files(input);
    if (files.empty()) throw UsageError("no PNG frames in " + input);
    fs::create_directories(out);
    for (const auto& f : files) {
      Rng rng(mix64(seed ^ fnv1a(f.filename().string())));
      write_png(fs::path(out) / f.filename(), degrade(read_png(f), d, rng));
    }
    std::printf("%zu frames degraded with %s\n", files.size(), to_string(d).c_str());
  }
};

struct InspectCmd {
  ConfigArgs cfg;
  std::string checkpoint;
  bool full = false;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("inspect", "print a model config and per-module parameter counts");
    cfg.attach(c);
    c->add_option("checkpoint", checkpoint, "checkpoint file (otherwise the config is used)");
    c->add_flag("--full", full, "start from the full-size configuration (k1=5, k2=40, C=64, 3-level alignment)");
    c->callback([this] { run(); });
  }

  void run() {
    ModelConfig mc;
    std::optional<std::uint64_t> step;
    if (!checkpoint.empty()) {
      const Checkpoint ckpt = read_checkpoint(checkpoint);
      ZsmModel<float> probe = model_from_checkpoint(ckpt);  // validates names and shapes
      mc = ckpt.config;
      step = ckpt.step;
    } else {
      RunSettings s;
      if (full) s.model = full_config();
      if (!cfg.config.empty()) {
        if (!fs::exists(cfg.config)) throw UsageError("config file not found: " + cfg.config);
        s = load_run_config(cfg.config, s);
      }
      for (const auto& o : cfg.overrides) s.set_assignment(o);
      mc = s.model;
    }
    try {
      mc.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    std::printf("config:\n");
    for (const auto& [k, v] : mc.to_pairs()) std::printf("  %-18s %s\n", k.c_str(), v.c_str());
    if (step) std::printf("  %-18s %llu\n", "step", static_cast<unsigned long long>(*step));
    const ZsmModel<float> model(mc, 0);
    const std::size_t total = model.params().total();
    std::printf("parameters: %zu (%.2fM)\n", total, static_cast<double>(total) / 1e6);
    for (const auto& [module, n] : parameter_breakdown(model.params()))
      std::printf("  %-18s %10zu  %5.1f%%\n", module.c_str(), n, 100.0 * static_cast<double>(n) / total);
  }
};

struct SyntheticCmd {
  int clips = 2, frames = 7, size = 128;
  double max_speed = 4.0;
  std::string out, split = "train";
  std::uint64_t seed = 0;

  void attach(CLI::App& app) {
    auto* c = app.add_subcommand("make-synthetic", "generate moving-rectangle clips plus an index");
    c->add_option("--clips", clips, "number of clips")->check(CLI::PositiveNumber);
    c->add_option("--frames", frames, "frames per clip")->check(CLI::Range(2, 1000));
    c->add_option("--size", size, "frame height and width (pixels)")->check(CLI::Range(8, 4096));
    c->add_option("--max-speed", max_speed, "fastest rectangle speed (pixels/frame)");
    c->add_option("--split", split, "train | test")->check(CLI::IsMember({"train", "test"}));
    c->add_option("--out", out, "dataset root")->required();
    c->add_option("--seed", seed, "random seed");
    c->callback([this] { run(); });
  }

  void run() {
    SyntheticOptions o;
    o.frames = frames;
    o.height = o.width = size;
    o.max_speed = max_speed;
    const auto recs = write_synthetic_dataset(out, clips, o, seed, parse_split(split));
    std::printf("wrote %zu clips of %d frames (%dx%d) to %s\n", recs.size(), frames, size, size,
                out.c_str());
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Space-time video super-resolution: 2x frame rate, 4x resolution"};
  app.require_subcommand(1);
  TrainCmd train_cmd;
  InferCmd infer_cmd;
  EvalCmd eval_cmd;
  DegradeCmd degrade_cmd;
  InspectCmd inspect_cmd;
  SyntheticCmd synth_cmd;
  train_cmd.attach(app);
  infer_cmd.attach(app);
  eval_cmd.attach(app);
  degrade_cmd.attach(app);
  inspect_cmd.attach(app);
  synth_cmd.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNonFinite;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
