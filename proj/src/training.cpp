#include "zsm/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "zsm/parse_util.hpp"

namespace zsm {

double cosine_lr(std::uint64_t step, std::uint64_t total, double lr_max, double lr_min) {
  if (total == 0 || step >= total) return lr_min;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("TrainConfig: " + m); };
  if (total_steps < 1) fail("total_steps must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr_max > lr_min && lr_min > 0)) fail("need lr_max > lr_min > 0");
  if (checkpoint_interval < 0) fail("checkpoint_interval must be >= 0");
  if (hr_patch < 4 || hr_patch % 4 != 0) fail("hr_patch must be a positive multiple of 4");
  if (grad_clip_norm < 0) fail("grad_clip_norm must be >= 0");
  degradation.validate();
  effective_weights().validate();
}

LossWeights TrainConfig::effective_weights() const {
  if (weights) return *weights;
  if (degradation.kind == DegradationSpec::Kind::clean) return LossWeights{};
  return LossWeights{1.0, 0.0, 0.0};
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_pairs() const {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  std::vector<std::pair<std::string, std::string>> out = {
      {"total_steps", std::to_string(total_steps)},
      {"batch_size", std::to_string(batch_size)},
      {"lr_max", num(lr_max)},
      {"lr_min", num(lr_min)},
      {"degradation", to_string(degradation)},
      {"seed", std::to_string(seed)},
      {"checkpoint_interval", std::to_string(checkpoint_interval)},
      {"hr_patch", std::to_string(hr_patch)},
      {"augment", augment ? "true" : "false"},
      {"grad_clip_norm", num(grad_clip_norm)}};
  const LossWeights w = effective_weights();
  out.push_back({"lambda1", num(w.lambda1)});
  out.push_back({"lambda2", num(w.lambda2)});
  out.push_back({"lambda3", num(w.lambda3)});
  return out;
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  auto weight = [&](double LossWeights::*field) {
    LossWeights w = effective_weights();
    w.*field = parse::to_double(key, value);
    weights = w;
  };
  if (key == "total_steps") total_steps = parse::to_int(key, value);
  else if (key == "batch_size") batch_size = parse::to_int(key, value);
  else if (key == "lr_max") lr_max = parse::to_double(key, value);
  else if (key == "lr_min") lr_min = parse::to_double(key, value);
  else if (key == "degradation") degradation = parse_degradation(value);
  else if (key == "seed") seed = parse::to_u64(key, value);
  else if (key == "checkpoint_interval") checkpoint_interval = parse::to_int(key, value);
  else if (key == "hr_patch") hr_patch = parse::to_int(key, value);
  else if (key == "augment") augment = parse::to_bool(key, value);
  else if (key == "grad_clip_norm") grad_clip_norm = parse::to_double(key, value);
  else if (key == "lambda1") weight(&LossWeights::lambda1);
  else if (key == "lambda2") weight(&LossWeights::lambda2);
  else if (key == "lambda3") weight(&LossWeights::lambda3);
  else return false;
  return true;
}

NonFiniteLoss::NonFiniteLoss(std::string term, std::uint64_t step, double value)
    : std::runtime_error("non-finite loss term " + term + " (" + std::to_string(value) +
                         ") at step " + std::to_string(step)),
      term_(std::move(term)),
      step_(step) {}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_csv_header() { return "step,lr,l_rec,l_i1,l_i2,total"; }

std::string to_csv_line(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.10g,%.10g,%.10g,%.10g,%.10g",
                static_cast<unsigned long long>(m.step), m.lr, m.l_rec, m.l_i1, m.l_i2, m.total);
  return buf;
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(const ParamStore<float>& params) {
  for (const auto& [name, var] : params.entries()) {
    names_.push_back(name);
    m_.emplace_back(var.shape());
    v_.emplace_back(var.shape());
  }
}

void Adam::step(ParamStore<float>& params, double lr) {
  const auto& entries = params.entries();
  if (entries.size() != names_.size()) throw std::logic_error("Adam: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(kBeta1), b2 = static_cast<float>(kBeta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Var<float> p = entries[i].second;
    if (!p.node()->has_grad()) continue;
    const Tensor<float>& g = p.node()->grad;
    Tensor<float>& w = p.mutable_value();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1 - b1) * g[k];
      v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
      w[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + static_cast<float>(kEps));
    }
  }
}

std::vector<NamedBlob> Adam::export_state() const {
  std::vector<NamedBlob> out;
  for (std::size_t i = 0; i < names_.size(); ++i) out.push_back({"adam.m/" + names_[i], m_[i]});
  for (std::size_t i = 0; i < names_.size(); ++i) out.push_back({"adam.v/" + names_[i], v_[i]});
  return out;
}

void Adam::import_state(const std::vector<NamedBlob>& blobs, std::uint64_t steps_taken) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& b : blobs) by_name[b.name] = &b.data;
  auto fetch = [&](const std::string& key, Tensor<float>& dst) {
    auto it = by_name.find(key);
    if (it == by_name.end()) throw std::invalid_argument("optimizer state is missing " + key);
    if (it->second->shape() != dst.shape())
      throw std::invalid_argument("optimizer state " + key + " has the wrong shape");
    dst = *it->second;
  };
  for (std::size_t i = 0; i < names_.size(); ++i) {
    fetch("adam.m/" + names_[i], m_[i]);
    fetch("adam.v/" + names_[i], v_[i]);
  }
  t_ = steps_taken;
}

double clip_grad_norm(ParamStore<float>& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, var] : params.entries()) {
    if (!var.node()->has_grad()) continue;
    for (float g : var.node()->grad.span()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / (norm + 1e-12));
    for (const auto& [name, var] : params.entries())
      if (var.node()->has_grad())
        for (float& g : var.node()->grad.span()) g *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Data

TrainingSet load_training_set(const std::filesystem::path& root) {
  TrainingSet set;
  for (const auto& rec : load_index(root)) {
    if (rec.split != Split::train) continue;
    set.clips.push_back(load_frames(rec));
  }
  if (set.clips.empty()) throw std::runtime_error("no training clips under " + root.string());
  return set;
}

namespace {
Rng step_rng(std::uint64_t seed, std::uint64_t step) {
  return Rng(mix64(seed ^ mix64(step + 0x5851f42d4c957f2dULL)));
}
}  // namespace

Batch sample_batch(const TrainingSet& data, const TrainConfig& cfg, std::uint64_t step,
                   int scale) {
  if (data.clips.empty()) throw std::invalid_argument("sample_batch: empty training set");
  Rng rng = step_rng(cfg.seed, step);
  // Separate stream so the degradation never shifts crop/augment draws.
  Rng noise_rng = step_rng(mix64(cfg.seed ^ 0xd1b54a32d192ed03ULL), step);
  SampleOptions so;
  so.hr_patch = cfg.hr_patch;
  so.augment = cfg.augment;
  so.scale = scale;
  std::vector<TrainingSample> samples;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const auto& clip = data.clips[rng.below(data.clips.size())];
    samples.push_back(make_training_sample(clip, rng, so));
    for (auto& f : samples.back().lr_inputs) f = degrade(f, cfg.degradation, noise_rng);
  }
  auto stack = [&](FrameSequence TrainingSample::*field, std::size_t t) {
    std::vector<const Frame*> ptrs;
    for (const auto& s : samples) ptrs.push_back(&(s.*field)[t]);
    return stack_batch(ptrs);
  };
  Batch batch;
  for (std::size_t t = 0; t < samples[0].lr_inputs.size(); ++t)
    batch.lr_inputs.push_back(stack(&TrainingSample::lr_inputs, t));
  for (std::size_t t = 0; t < samples[0].hr_targets.size(); ++t) {
    batch.hr_targets.push_back(stack(&TrainingSample::hr_targets, t));
    batch.lr_targets.push_back(stack(&TrainingSample::lr_targets, t));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Loop

LossBreakdown compute_loss(const ZsmModel<float>& model, const Batch& batch,
                           const LossWeights& weights) {
  auto constants = [](const std::vector<Tensor<float>>& ts) {
    std::vector<Var<float>> out;
    for (const auto& t : ts) out.emplace_back(t);
    return out;
  };
  const auto result = model.forward(constants(batch.lr_inputs));
  const auto gt_hr = constants(batch.hr_targets);
  LossBreakdown out;
  Var<float> l_rec = reconstruction_loss(result.hr_frames, gt_hr);
  out.l_rec = l_rec.item();
  out.total = scale(l_rec, static_cast<float>(weights.lambda1));
  if (!model.config().has_lr_synthesis()) return out;

  const auto gt_lr = constants(batch.lr_targets);
  const SynthesisFn<float> rho = [&](const Var<float>& f) { return model.synthesize_lr(f); };
  const InterpolateFn<float> interp = [&](const Var<float>& a, const Var<float>& b) {
    return model.interpolator().interpolate(a, b);
  };
  auto term = [&](double lambda, auto&& fn) -> double {
    if (lambda == 0) {
      NoGradGuard guard;
      return fn().value.item();
    }
    const CyclicLoss<float> c = fn();
    if (!c.degenerate) out.total = add(out.total, scale(c.value, static_cast<float>(lambda)));
    return c.value.item();
  };
  out.l_i1 = term(weights.lambda2,
                  [&] { return cyclic_loss_first_order(result.interp_features, gt_lr, rho); });
  out.l_i2 = term(weights.lambda3, [&] {
    return cyclic_loss_second_order(result.interp_features, gt_lr, interp, rho);
  });
  return out;
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const TrainingSet& data,
                  const TrainOptions& opts) {
  cfg.validate();
  model_cfg.validate();
  if (data.clips.empty()) throw std::invalid_argument("train: empty training set");
  const LossWeights weights = cfg.effective_weights();

  ZsmModel<float> model(model_cfg, cfg.seed);
  Adam adam(model.params());
  std::uint64_t step = 0;
  if (opts.resume) {
    if (!(opts.resume->config == model_cfg))
      throw std::invalid_argument("resume checkpoint was trained with a different model config");
    apply(*opts.resume, model);
    step = opts.resume->step;
    if (step > 0) adam.import_state(opts.resume->optimizer, step);
  }

  std::ofstream metrics;
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    const auto path = *opts.out_dir / "metrics.csv";
    const bool append = opts.resume && std::filesystem::exists(path);
    metrics.open(path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write " + path.string());
    if (!append) metrics << metrics_csv_header() << '\n';
  }

  auto snapshot = [&] {
    Checkpoint ckpt = capture(model, step);
    ckpt.optimizer = adam.export_state();
    return ckpt;
  };

  TrainResult result;
  const auto total = static_cast<std::uint64_t>(cfg.total_steps);
  std::uint64_t end = total;
  if (opts.max_steps) end = std::min<std::uint64_t>(total, step + static_cast<std::uint64_t>(*opts.max_steps));
  while (step < end) {
    const double lr = cosine_lr(step, total, cfg.lr_max, cfg.lr_min);
    const Batch batch = sample_batch(data, cfg, step, model_cfg.scale);
    model.params().zero_grad();
    LossBreakdown loss = compute_loss(model, batch, weights);
    StepMetrics m{step + 1, lr, loss.l_rec, loss.l_i1, loss.l_i2, loss.total.item()};
    const std::pair<const char*, double> terms[] = {
        {"l_rec", m.l_rec}, {"l_i1", m.l_i1}, {"l_i2", m.l_i2}, {"total", m.total}};
    for (const auto& [name, v] : terms)
      if (!std::isfinite(v)) throw NonFiniteLoss(name, m.step, v);
    backward(loss.total);
    clip_grad_norm(model.params(), cfg.grad_clip_norm);
    adam.step(model.params(), lr);
    ++step;

    result.history.push_back(m);
    if (metrics.is_open()) metrics << to_csv_line(m) << '\n' << std::flush;
    if (opts.on_step) opts.on_step(m);
    if (opts.out_dir && cfg.checkpoint_interval > 0 &&
        step % static_cast<std::uint64_t>(cfg.checkpoint_interval) == 0) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_%06llu.bin", static_cast<unsigned long long>(step));
      save_checkpoint(*opts.out_dir / name, snapshot());
    }
  }
  model.params().zero_grad();
  result.checkpoint = snapshot();
  if (opts.out_dir) save_checkpoint(*opts.out_dir / "final.bin", result.checkpoint);
  return result;
}

}  // namespace zsm
