#include "zsm/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "zsm/parse_util.hpp"

namespace zsm {

Tensor<float> rgb_to_y(const Tensor<float>& rgb) {
  if (rgb.c() != 3)
    throw std::invalid_argument("rgb_to_y: expected 3 channels, got " + rgb.shape().str());
  Tensor<float> y(rgb.n(), 1, rgb.h(), rgb.w());
  const std::size_t plane = rgb.shape().plane();
  for (int b = 0; b < rgb.n(); ++b) {
    const float* r = rgb.plane(b, 0);
    const float* g = rgb.plane(b, 1);
    const float* bl = rgb.plane(b, 2);
    float* out = y.plane(b, 0);
    for (std::size_t i = 0; i < plane; ++i)
      out[i] = static_cast<float>((65.481 * r[i] + 128.553 * g[i] + 24.966 * bl[i] + 16.0) / 255.0);
  }
  return y;
}

double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak) {
  a.check_same(b, "psnr");
  if (a.empty()) throw std::invalid_argument("psnr: empty input");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

std::array<double, 11> gaussian_window() {
  std::array<double, 11> w{};
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    const double x = i - 5;
    w[i] = std::exp(-x * x / (2 * 1.5 * 1.5));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable "valid" filtering of an H x W image.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w) {
  static const auto win = gaussian_window();
  const int oh = h - 10, ow = w - 10;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < 11; ++k) acc += win[k] * img[static_cast<std::size_t>(y) * w + x + k];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < 11; ++k) acc += win[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  a.check_same(b, "ssim");
  if (a.n() != 1 || a.c() != 1)
    throw std::invalid_argument("ssim: expected a single-channel image, got " + a.shape().str());
  if (a.h() < 11 || a.w() < 11)
    throw std::invalid_argument("ssim: image " + a.shape().str() + " smaller than the 11x11 window");
  const int h = a.h(), w = a.w();
  const std::size_t n = a.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a[i];
    y[i] = b[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w), my = filter_valid(y, h, w);
  const auto sxx = filter_valid(xx, h, w), syy = filter_valid(yy, h, w), sxy = filter_valid(xy, h, w);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    sum += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return sum / static_cast<double>(mx.size());
}

// ---------------------------------------------------------------------------
// Predictors

FrameSequence infer_sequence(const ZsmModel<float>& model, const FrameSequence& lr_frames,
                             int chunk) {
  if (lr_frames.size() < 2) throw std::invalid_argument("infer_sequence: need at least 2 frames");
  if (chunk < 2) throw std::invalid_argument("infer_sequence: chunk must be >= 2");
  NoGradGuard no_grad;
  const std::size_t total = lr_frames.size();
  FrameSequence out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = std::min(total, start + static_cast<std::size_t>(chunk));
    std::vector<Var<float>> inputs;
    for (std::size_t i = start; i < end; ++i) inputs.emplace_back(lr_frames[i]);
    const auto result = model.forward(inputs);
    for (std::size_t k = start == 0 ? 0 : 1; k < result.hr_frames.size(); ++k)
      out.push_back(clamp01(result.hr_frames[k].value()));
    if (end == total) break;
    start = end - 1;
  }
  return out;
}

Predictor model_predictor(const ZsmModel<float>& model, int chunk) {
  return [&model, chunk](const FrameSequence& lr, const FrameSequence&) {
    return infer_sequence(model, lr, chunk);
  };
}

Predictor bicubic_predictor() {
  return [](const FrameSequence& lr, const FrameSequence&) {
    FrameSequence out;
    for (std::size_t t = 0; t < lr.size(); ++t) {
      Frame up = bicubic_upsample(lr[t], 4);
      if (t + 1 < lr.size()) out.push_back(up);
      out.push_back(std::move(up));
    }
    return out;
  };
}

Predictor oracle_predictor() {
  return [](const FrameSequence&, const FrameSequence& gt) { return gt; };
}

// ---------------------------------------------------------------------------
// Scoring

namespace {

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

ClipScore evaluate_clip(const std::string& id, const FrameSequence& hr_frames,
                        const Predictor& predictor, const DegradationSpec& degradation,
                        std::uint64_t seed) {
  if (hr_frames.size() < 3)
    throw std::invalid_argument("clip " + id + ": need at least 3 frames to score");
  const std::size_t count = hr_frames.size() % 2 == 1 ? hr_frames.size() : hr_frames.size() - 1;
  FrameSequence gt;
  for (std::size_t t = 0; t < count; ++t) gt.push_back(crop_to_multiple(hr_frames[t], 4));

  Rng rng(mix64(seed ^ fnv1a(id)));
  FrameSequence lr;
  for (std::size_t t = 0; t < count; t += 2) lr.push_back(degrade(bicubic_downsample(gt[t], 4), degradation, rng));

  const auto t0 = std::chrono::steady_clock::now();
  const FrameSequence pred = predictor(lr, gt);
  const auto t1 = std::chrono::steady_clock::now();
  if (pred.size() != gt.size())
    throw std::runtime_error("clip " + id + ": predictor returned " + std::to_string(pred.size()) +
                             " frames, expected " + std::to_string(gt.size()));

  ClipScore score;
  score.id = id;
  score.frames = static_cast<int>(count);
  score.seconds = std::chrono::duration<double>(t1 - t0).count();
  std::vector<double> p_all, s_all, p_mid, s_mid;
  for (std::size_t t = 0; t < count; ++t) {
    const Tensor<float> yp = rgb_to_y(pred[t]), yg = rgb_to_y(gt[t]);
    FrameScores fs{psnr(yp, yg), ssim(yp, yg)};
    score.per_frame.push_back(fs);
    p_all.push_back(fs.psnr);
    s_all.push_back(fs.ssim);
    if (t % 2 == 1) {
      p_mid.push_back(fs.psnr);
      s_mid.push_back(fs.ssim);
    }
  }
  score.psnr = mean(p_all);
  score.ssim = mean(s_all);
  score.psnr_intermediate = mean(p_mid);
  score.ssim_intermediate = mean(s_mid);
  return score;
}

void EvalReport::aggregate() {
  std::vector<const ClipScore*> sorted;
  for (const auto& c : clips) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(),
            [](const ClipScore* a, const ClipScore* b) { return a->id < b->id; });
  std::vector<double> p, s, pm, sm;
  frames = 0;
  seconds_total = 0;
  for (const auto* c : sorted) {
    p.push_back(c->psnr);
    s.push_back(c->ssim);
    pm.push_back(c->psnr_intermediate);
    sm.push_back(c->ssim_intermediate);
    frames += c->frames;
    seconds_total += c->seconds;
  }
  psnr = mean(p);
  ssim = mean(s);
  psnr_intermediate = mean(pm);
  ssim_intermediate = mean(sm);
  seconds_per_frame = frames > 0 ? seconds_total / frames : 0;
}

EvalReport evaluate_dataset(const std::vector<ClipRecord>& clips, const Predictor& predictor,
                            const EvalOptions& opts) {
  EvalReport report;
  report.predictor = opts.predictor_name;
  report.degradation = to_string(opts.degradation);
  report.parameters = opts.parameters;
  for (const auto& rec : clips) {
    FrameSequence frames;
    try {
      frames = load_frames(rec);
    } catch (const std::exception& e) {
      report.warnings.push_back("skipping clip " + rec.id + ": " + e.what());
      continue;
    }
    if (frames.size() < 3) {
      report.warnings.push_back("skipping clip " + rec.id + ": fewer than 3 ground-truth frames");
      continue;
    }
    ClipScore score = evaluate_clip(rec.id, frames, predictor, opts.degradation, opts.seed);
    score.motion = rec.motion;
    report.clips.push_back(std::move(score));
  }
  report.aggregate();
  return report;
}

// ---------------------------------------------------------------------------
// Report I/O

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return parse::to_double("report field", s);
}

constexpr const char* kCsvHeader =
    "clip,motion,frames,psnr,ssim,psnr_intermediate,ssim_intermediate,seconds";

}  // namespace

void write_report_csv(const std::filesystem::path& path, const EvalReport& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << "# predictor=" << r.predictor << '\n'
      << "# degradation=" << r.degradation << '\n'
      << "# parameters=" << r.parameters << '\n'
      << kCsvHeader << '\n';
  auto row = [&](const std::string& id, const std::string& motion, int frames, double p, double s,
                 double pm, double sm, double sec) {
    out << id << ',' << motion << ',' << frames << ',' << fmt(p) << ',' << fmt(s) << ',' << fmt(pm)
        << ',' << fmt(sm) << ',' << fmt(sec) << '\n';
  };
  for (const auto& c : r.clips)
    row(c.id, to_string(c.motion), c.frames, c.psnr, c.ssim, c.psnr_intermediate,
        c.ssim_intermediate, c.seconds);
  row("ALL", "", r.frames, r.psnr, r.ssim, r.psnr_intermediate, r.ssim_intermediate,
      r.seconds_total);
  if (!out) throw std::runtime_error("failed writing report " + path.string());
}

EvalReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read report " + path.string());
  EvalReport r;
  std::string line;
  bool header = false, have_all = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2), val = line.substr(eq + 1);
      if (key == "predictor") r.predictor = val;
      else if (key == "degradation") r.degradation = val;
      else if (key == "parameters") r.parameters = parse::to_u64(key, val);
      continue;
    }
    if (!header) {
      if (line != kCsvHeader) throw std::runtime_error("report: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() == 7 && line.back() == ',') f.emplace_back();
    if (f.size() != 8) throw std::runtime_error("report: malformed row '" + line + "'");
    if (f[0] == "ALL") {
      r.frames = parse::to_int("frames", f[2]);
      r.psnr = parse_real(f[3]);
      r.ssim = parse_real(f[4]);
      r.psnr_intermediate = parse_real(f[5]);
      r.ssim_intermediate = parse_real(f[6]);
      r.seconds_total = parse_real(f[7]);
      r.seconds_per_frame = r.frames > 0 ? r.seconds_total / r.frames : 0;
      have_all = true;
      continue;
    }
    ClipScore c;
    c.id = f[0];
    c.motion = parse_motion(f[1]);
    c.frames = parse::to_int("frames", f[2]);
    c.psnr = parse_real(f[3]);
    c.ssim = parse_real(f[4]);
    c.psnr_intermediate = parse_real(f[5]);
    c.ssim_intermediate = parse_real(f[6]);
    c.seconds = parse_real(f[7]);
    r.clips.push_back(std::move(c));
  }
  if (!have_all) throw std::runtime_error("report: missing aggregate row");
  return r;
}

std::string format_report_table(const EvalReport& r) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-9s %6s %9s %8s %9s %8s %9s\n", "clip", "motion", "frames",
                "PSNR", "SSIM", "PSNR-mid", "SSIM-mid", "sec");
  os << "predictor: " << r.predictor << "   degradation: " << r.degradation;
  if (r.parameters > 0) os << "   parameters: " << r.parameters;
  os << '\n' << buf;
  auto line = [&](const std::string& id, const std::string& motion, int frames, double p, double s,
                  double pm, double sm, double sec) {
    std::snprintf(buf, sizeof buf, "%-16s %-9s %6d %9.4f %8.6f %9.4f %8.6f %9.3f\n", id.c_str(),
                  motion.c_str(), frames, p, s, pm, sm, sec);
    os << buf;
  };
  for (const auto& c : r.clips)
    line(c.id, to_string(c.motion), c.frames, c.psnr, c.ssim, c.psnr_intermediate,
         c.ssim_intermediate, c.seconds);
  line("ALL", "", r.frames, r.psnr, r.ssim, r.psnr_intermediate, r.ssim_intermediate,
       r.seconds_total);
  std::snprintf(buf, sizeof buf, "runtime: %.3f s total, %.4f s/frame\n", r.seconds_total,
                r.seconds_per_frame);
  os << buf;
  return os.str();
}

}  // namespace zsm
