// Acceptance runner: one PASS/FAIL line per criterion. `--only 1,3` limits the
// run to the listed criteria.

#include <CLI11.hpp>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "zsm/checkpoint.hpp"
#include "zsm/evaluation.hpp"
#include "zsm/training.hpp"

namespace fs = std::filesystem;
using namespace zsm;
using test::check_gradients;
using test::project;
using test::random_conv;
using test::random_param;
using test::random_tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

void note(Outcome& o, bool ok, const std::string& what) {
  if (!ok) o.pass = false;
  o.detail += (ok ? "" : "[miss] ") + what + "; ";
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. parameter count

constexpr double kReferenceParams = 11.10e6;
constexpr double kParamTolerance = 0.15;

Outcome parameter_count() {
  Outcome o;
  const auto cfg = full_config();
  ZsmModel<float> model(cfg, 0);
  const double total = static_cast<double>(model.params().total());
  note(o, std::abs(total / kReferenceParams - 1) <= kParamTolerance,
       "total " + fmt("%.0f", total) + " vs 11.10M (ratio " + fmt("%.4f", total / kReferenceParams) + ")");
  std::size_t sum = 0;
  for (const auto& [module, n] : parameter_breakdown(model.params())) sum += n;
  note(o, sum == model.params().total(), "breakdown sums to total");
  note(o, count_parameters(cfg) == model.params().total(), "count_parameters agrees");
  return o;
}

// ---------------------------------------------------------------------------
// 2. deformable convolution oracle

constexpr double kDcnOracleTol = 1e-6;
constexpr double kZeroOffsetTol = 1e-10;

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Outcome dcn_oracle() {
  Outcome o;
  Rng rng(2024);
  double worst = 0, worst_zero = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(2));
    const int groups = 1 + static_cast<int>(rng.below(2));
    const int cin = groups * (1 + static_cast<int>(rng.below(4 / groups)));
    const int h = 3 + static_cast<int>(rng.below(6)), w = 3 + static_cast<int>(rng.below(6));
    const int cout = 1 + static_cast<int>(rng.below(4));
    const int k = rng.below(2) ? 3 : 1;
    const auto x = random_tensor<double>({n, cin, h, w}, rng);
    const auto off = random_tensor<double>({n, 2 * groups * k * k, h, w}, rng, -2.5, 2.5);
    const auto cw = random_conv<double>(cin, cout, k, rng);
    const auto got = deformable_conv(Var<double>(x), Var<double>(off), cw, groups).value();
    const auto want =
        test::naive_deformable_conv(x, off, cw.weight.value(), &cw.bias.value(), groups);
    worst = std::max(worst, max_abs_diff(got, want));

    Tensor<double> zero(off.shape());
    const auto z = deformable_conv(Var<double>(x), Var<double>(zero), cw, groups).value();
    worst_zero = std::max(worst_zero, max_abs_diff(z, conv2d(Var<double>(x), cw).value()));
  }
  note(o, worst < kDcnOracleTol, "100 cases, max |err| " + fmt("%.3e", worst));
  note(o, worst_zero < kZeroOffsetTol, "zero offsets vs conv2d " + fmt("%.3e", worst_zero));
  return o;
}

// ---------------------------------------------------------------------------
// 3. gradient suite

constexpr double kGradRelTol = 1e-4;
constexpr int kGradInstances = 20;

void randomize(ParamStore<double>& store, Rng& rng, double scale) {
  for (const auto& [name, v] : store.entries()) {
    Var<double> h = v;
    for (auto& x : h.mutable_value().span()) x = rng.uniform(-scale, scale);
  }
}

Outcome gradient_suite() {
  Outcome o;
  Rng rng(77);
  std::map<std::string, double> worst;
  auto record = [&](const std::string& name, const test::GradCheck& r) {
    worst[name] = std::max(worst[name], r.analytic_norm > 0 ? r.rel_error : 1.0);
  };
  for (int i = 0; i < kGradInstances; ++i) {
    {
      const int g = 1 + static_cast<int>(rng.below(2));
      auto x = random_param<double>({1, 2 * g, 4, 5}, rng);
      auto off = random_param<double>({1, 18 * g, 4, 5}, rng, -1.5, 1.5);
      auto w = random_conv<double>(2 * g, 3, 3, rng);
      const auto probe = random_tensor<double>({1, 3, 4, 5}, rng);
      auto loss = [&] { return project(deformable_conv(x, off, w, g), probe); };
      record("deformable_conv/input", check_gradients(loss, {x}, rng, 40, 1e-6));
      record("deformable_conv/weights", check_gradients(loss, {w.weight, w.bias}, rng, 40, 1e-6));
      record("deformable_conv/offsets", check_gradients(loss, {off}, rng, 40, 1e-6));
    }
    {
      const int c = 3;
      LstmState<double> s{random_param<double>({1, c, 4, 4}, rng), random_param<double>({1, c, 4, 4}, rng)};
      auto x = random_param<double>({1, c, 4, 4}, rng);
      auto gates = random_conv<double>(2 * c, 4 * c, 3, rng, true, 0.3);
      const auto ph = random_tensor<double>({1, c, 4, 4}, rng), pc = random_tensor<double>({1, c, 4, 4}, rng);
      auto loss = [&] {
        const auto next = convlstm_cell(s, x, gates);
        return add(project(next.hidden, ph), project(next.cell, pc));
      };
      record("convlstm_cell", check_gradients(loss, {s.hidden, s.cell, x, gates.weight, gates.bias}, rng, 40));
    }
    {
      auto x = random_param<double>({1, 3, 5, 5}, rng);
      auto w1 = random_conv<double>(3, 3, 3, rng), w2 = random_conv<double>(3, 3, 3, rng);
      const auto probe = random_tensor<double>({1, 3, 5, 5}, rng);
      auto loss = [&] { return project(residual_block(x, w1, w2), probe); };
      record("residual_block",
             check_gradients(loss, {x, w1.weight, w1.bias, w2.weight, w2.bias}, rng, 40));
    }
    {
      auto p = random_param<double>({1, 3, 4, 4}, rng), t = random_param<double>({1, 3, 4, 4}, rng);
      auto loss = [&] { return charbonnier(p, t, 1e-3); };
      record("charbonnier", check_gradients(loss, {p, t}, rng, 48));
    }
    {
      ParamStore<double> store(1000 + i);
      TemporalInterpolator<double> ti(store, "interp", 4, 2, 1, false);
      randomize(store, rng, 0.3);
      auto f1 = random_param<double>({1, 4, 5, 5}, rng), f3 = random_param<double>({1, 4, 5, 5}, rng);
      const auto probe = random_tensor<double>({1, 4, 5, 5}, rng);
      std::vector<Var<double>> leaves{f1, f3};
      for (const auto& [n, v] : store.entries()) leaves.push_back(v);
      record("interpolate_intermediate",
             check_gradients([&] { return project(ti.interpolate(f1, f3), probe); }, leaves, rng, 16));
    }
  }
  for (const auto& [name, err] : worst)
    note(o, err < kGradRelTol, name + " x" + std::to_string(kGradInstances) + " max rel " + fmt("%.2e", err));
  return o;
}

// ---------------------------------------------------------------------------
// 4. structural contracts

Outcome structural() {
  Outcome o;
  Rng rng(4);
  int ok_shapes = 0, ok_ckpt = 0, total = 0;
  for (Variant v : {Variant::a, Variant::b, Variant::c, Variant::d, Variant::e, Variant::f}) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.k1 = 1;
    cfg.k2 = 1;
    cfg.k3 = 1;
    cfg.channels = 16;
    cfg.deformable_groups = 4;
    ZsmModel<float> model(cfg, 11);
    const auto restored = model_from_checkpoint(load_checkpoint([&] {
      const fs::path p = fs::temp_directory_path() / ("zsm_accept_" + to_string(v) + ".bin");
      save_checkpoint(p, capture(model));
      return p;
    }()));
    for (int n = 1; n <= 3; ++n) {
      ++total;
      std::vector<Var<float>> lr;
      for (int i = 0; i <= n; ++i) lr.emplace_back(random_tensor<float>({1, 3, 24, 24}, rng, 0, 1));
      NoGradGuard ng;
      const auto out = model.forward(lr).hr_frames;
      bool shapes = out.size() == static_cast<std::size_t>(2 * n + 1);
      for (const auto& f : out) shapes = shapes && f.shape() == Shape{1, 3, 96, 96};
      ok_shapes += shapes;
      const auto again = restored.forward(lr).hr_frames;
      bool same = again.size() == out.size();
      for (std::size_t t = 0; same && t < out.size(); ++t) same = again[t].value() == out[t].value();
      ok_ckpt += same;
    }
  }
  note(o, ok_shapes == total, std::to_string(ok_shapes) + "/" + std::to_string(total) + " shape contracts");
  note(o, ok_ckpt == total, std::to_string(ok_ckpt) + "/" + std::to_string(total) + " bit-identical reloads");
  return o;
}

// ---------------------------------------------------------------------------
// 5 and 6. desk-scale overfitting

struct DeskRun {
  int steps = 2000;
  int channels = 32;
  int k1 = 2, k2 = 4, k3 = 1;
  int groups = 4;
  int batch = 2;
  int size = 64;
  double speed = 4.0;
  double lr_max = 1e-3;
};

constexpr double kOverfitGainDb = 3.0;
constexpr double kLossRatio = 0.5;

struct Overfit {
  std::vector<StepMetrics> history;
  std::vector<ClipScore> model, bicubic;
  double seconds = 0;
};

FrameSequence desk_clip(const DeskRun& d, int index) {
  SyntheticOptions so;
  so.height = d.size;
  so.width = d.size;
  so.max_speed = d.speed;
  return synthesize_clip(so, 100 + index);
}

Overfit overfit(const DeskRun& d, Variant variant, int clips) {
  TrainingSet ts;
  for (int i = 0; i < clips; ++i) ts.clips.push_back(desk_clip(d, i));
  ModelConfig mc;
  mc.variant = variant;
  mc.k1 = d.k1;
  mc.k2 = d.k2;
  mc.k3 = d.k3;
  mc.channels = d.channels;
  mc.deformable_groups = d.groups;
  TrainConfig tc;
  tc.total_steps = d.steps;
  tc.batch_size = d.batch;
  tc.hr_patch = d.size;
  tc.lr_max = d.lr_max;
  tc.augment = false;
  tc.seed = 1;
  tc.checkpoint_interval = 0;
  const auto t0 = std::chrono::steady_clock::now();
  auto r = train(mc, tc, ts);
  Overfit out;
  out.history = std::move(r.history);
  const auto model = model_from_checkpoint(r.checkpoint);
  for (int i = 0; i < clips; ++i) {
    const std::string id = "desk_" + std::to_string(i);
    out.model.push_back(evaluate_clip(id, ts.clips[i], model_predictor(model), {}, 0));
    out.bicubic.push_back(evaluate_clip(id, ts.clips[i], bicubic_predictor(), {}, 0));
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

double mean_of(const std::vector<ClipScore>& s, double ClipScore::*field) {
  double acc = 0;
  for (const auto& c : s) acc += c.*field;
  return acc / static_cast<double>(s.size());
}

Outcome overfit_smoke(const DeskRun& d) {
  Outcome o;
  const auto r = overfit(d, Variant::f, 2);
  const double l10 = r.history.at(9).total, last = r.history.back().total;
  note(o, last < kLossRatio * l10,
       "loss step10 " + fmt("%.4f", l10) + " -> final " + fmt("%.4f", last));
  for (std::size_t i = 0; i < r.model.size(); ++i) {
    const double gain = r.model[i].psnr - r.bicubic[i].psnr;
    const double gain_mid = r.model[i].psnr_intermediate - r.bicubic[i].psnr_intermediate;
    note(o, gain >= kOverfitGainDb,
         "clip " + std::to_string(i) + " all " + fmt("%.2f", r.model[i].psnr) + " vs " +
             fmt("%.2f", r.bicubic[i].psnr) + " dB");
    note(o, gain_mid >= kOverfitGainDb,
         "clip " + std::to_string(i) + " mid " + fmt("%.2f", r.model[i].psnr_intermediate) + " vs " +
             fmt("%.2f", r.bicubic[i].psnr_intermediate) + " dB");
  }
  o.detail += fmt("%.0fs", r.seconds);
  return o;
}

Outcome ablation(const DeskRun& d) {
  Outcome o;
  const auto e = overfit(d, Variant::e, 3), a = overfit(d, Variant::a, 3);
  const double pe = mean_of(e.model, &ClipScore::psnr_intermediate);
  const double pa = mean_of(a.model, &ClipScore::psnr_intermediate);
  note(o, pe >= pa, "intermediate PSNR e " + fmt("%.3f", pe) + " vs a " + fmt("%.3f", pa) + " dB");
  o.detail += "all-frame e " + fmt("%.3f", mean_of(e.model, &ClipScore::psnr)) + " a " +
              fmt("%.3f", mean_of(a.model, &ClipScore::psnr)) + "; " +
              fmt("%.0fs", e.seconds + a.seconds);
  return o;
}

// ---------------------------------------------------------------------------
// 7. metric correctness

Outcome metrics() {
  Outcome o;
  Frame zero(1, 1, 32, 32), tenth(1, 1, 32, 32);
  tenth.fill(0.1f);
  const double p = psnr(zero, tenth);
  note(o, std::abs(p - 20.0) <= 1e-6, "uniform 0.1 difference " + fmt("%.9f", p) + " dB");
  Rng rng(7);
  bool ident = true;
  for (int i = 0; i < 10; ++i) {
    const auto img = random_tensor<float>({1, 1, 16 + i, 20}, rng, 0, 1);
    ident = ident && fmt("%.6f", ssim(img, img)) == "1.000000";
  }
  note(o, ident, "SSIM(x, x) = 1.000000 over 10 images");
  auto y = [](float r, float g, float b) {
    Frame f(1, 3, 1, 1);
    f[0] = r;
    f[1] = g;
    f[2] = b;
    return rgb_to_y(f)[0];
  };
  note(o, y(0, 0, 0) == static_cast<float>(16.0 / 255.0), "black -> 16/255");
  note(o, y(1, 1, 1) == static_cast<float>(235.0 / 255.0), "white -> 235/255");
  note(o, y(0, 1, 0) == static_cast<float>((128.553 + 16.0) / 255.0), "green -> 144.553/255");
  return o;
}

// ---------------------------------------------------------------------------
// 8. degradation regimes

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + ZSM_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome degradations() {
  Outcome o;
  {
    Frame f(1, 3, 256, 256);
    f.fill(0.5f);
    Rng rng(8);
    const auto d = degrade_noise(f, parse_degradation("noise:sigma=0,sp=0.1"), rng);
    std::size_t saturated = 0;
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 256; ++x) {
        const float v = d.at(0, 0, y, x);
        saturated += (v == 0.0f || v == 1.0f) && d.at(0, 1, y, x) == v && d.at(0, 2, y, x) == v;
      }
    const double frac = static_cast<double>(saturated) / (256.0 * 256.0);
    note(o, frac >= 0.09 && frac <= 0.11, "salt-and-pepper fraction " + fmt("%.4f", frac));
  }
  {
    const fs::path root = fs::temp_directory_path() / "zsm_accept_qf";
    fs::remove_all(root);
    SyntheticOptions so;
    so.height = 24;
    so.width = 24;
    so.frames = 3;
    write_synthetic_dataset(root, 1, so, 9, Split::test);
    std::set<int> accepted;
    for (int qf : {0, 5, 9, 10, 11, 15, 20, 25, 30, 35, 40, 41, 50, 75, 90, 100})
      if (run_cli("eval --dataset \"" + root.string() + "\" --predictor bicubic --degrade jpeg:" +
                  std::to_string(qf)) == 0)
        accepted.insert(qf);
    note(o, accepted == std::set<int>{10, 20, 30, 40},
         "eval accepts " + std::to_string(accepted.size()) + " QF presets");
    fs::remove_all(root);
  }
  {
    SyntheticOptions so;
    so.height = 64;
    so.width = 64;
    so.frames = 2;
    std::vector<Frame> corpus;
    for (int i = 0; i < 20; ++i) corpus.push_back(synthesize_clip(so, 500 + i)[0]);
    std::vector<double> means;
    std::string line;
    for (int qf : {10, 20, 30, 40}) {
      double acc = 0;
      for (const auto& f : corpus) acc += psnr(rgb_to_y(degrade_jpeg(f, qf)), rgb_to_y(f));
      means.push_back(acc / 20);
      line += "Q" + std::to_string(qf) + " " + fmt("%.2f", means.back()) + " ";
    }
    note(o, std::is_sorted(means.begin(), means.end()) &&
                std::adjacent_find(means.begin(), means.end()) == means.end(),
         "mean PSNR over 20 images " + line);
  }
  return o;
}

// ---------------------------------------------------------------------------
// 9. learning-rate schedule

Outcome schedule() {
  Outcome o;
  constexpr double hi = 4e-4, lo = 1e-7;
  constexpr std::uint64_t total = 600000;
  note(o, cosine_lr(0, total, hi, lo) == hi, "start exactly 4e-4");
  note(o, cosine_lr(total, total, hi, lo) == lo, "end exactly 1e-7");
  const double mid = cosine_lr(total / 2, total, hi, lo);
  note(o, std::abs(mid - (hi + lo) / 2) <= 1e-12, "midpoint " + fmt("%.10e", mid));
  bool mono = true;
  double prev = hi;
  for (std::uint64_t i = 0; i <= 10000; ++i) {
    const double lr = cosine_lr(i * total / 10000, total, hi, lo);
    mono = mono && lr <= prev;
    prev = lr;
  }
  note(o, mono, "non-increasing over 10001 samples");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  DeskRun desk;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--steps", desk.steps, "overfit steps for criteria 5 and 6");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"parameter count", parameter_count},
      {"deformable convolution oracle", dcn_oracle},
      {"gradient suite", gradient_suite},
      {"structural contracts", structural},
      {"overfit smoke test", [&] { return overfit_smoke(desk); }},
      {"ablation monotonicity", [&] { return ablation(desk); }},
      {"metric correctness", metrics},
      {"degradation regimes", degradations},
      {"learning-rate schedule", schedule},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    all = all && o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
