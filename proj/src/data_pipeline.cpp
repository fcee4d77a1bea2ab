#include "zsm/data_pipeline.hpp"

#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace zsm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Resampling

double cubic_kernel(double x, double a) {
  const double ax = std::abs(x);
  const double ax2 = ax * ax, ax3 = ax2 * ax;
  if (ax <= 1.0) return (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0;
  if (ax < 2.0) return a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a;
  return 0.0;
}

std::array<double, 4> bicubic_weights(double phase) {
  return {cubic_kernel(1.0 + phase), cubic_kernel(phase), cubic_kernel(1.0 - phase),
          cubic_kernel(2.0 - phase)};
}

namespace {

struct Contribution {
  std::vector<int> index;
  std::vector<double> weight;
};

int reflect(int i, int n) {
  // symmetric extension: -1 -> 0, -2 -> 1, n -> n-1
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

std::vector<Contribution> contributions(int in_len, int out_len) {
  const double scale = static_cast<double>(out_len) / in_len;
  const double kscale = scale < 1.0 ? scale : 1.0;  // antialias only when shrinking
  const double support = 2.0 / kscale;
  std::vector<Contribution> out(out_len);
  for (int i = 0; i < out_len; ++i) {
    const double u = (i + 0.5) / scale - 0.5;
    const int lo = static_cast<int>(std::floor(u - support));
    const int hi = static_cast<int>(std::ceil(u + support));
    double sum = 0;
    for (int j = lo; j <= hi; ++j) {
      const double wgt = kscale * cubic_kernel((u - j) * kscale);
      if (wgt == 0.0) continue;
      out[i].index.push_back(reflect(j, in_len));
      out[i].weight.push_back(wgt);
      sum += wgt;
    }
    for (auto& wgt : out[i].weight) wgt /= sum;
  }
  return out;
}

Frame resize_bicubic(const Frame& frame, int out_h, int out_w) {
  const Shape s = frame.shape();
  const auto cx = contributions(s.w, out_w);
  const auto cy = contributions(s.h, out_h);
  Frame out(s.n, s.c, out_h, out_w);
  std::vector<double> tmp(static_cast<std::size_t>(s.h) * out_w);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c) {
      const float* src = frame.plane(b, c);
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < out_w; ++x) {
          double acc = 0;
          for (std::size_t k = 0; k < cx[x].index.size(); ++k)
            acc += cx[x].weight[k] * src[y * s.w + cx[x].index[k]];
          tmp[y * out_w + x] = acc;
        }
      float* dst = out.plane(b, c);
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
          double acc = 0;
          for (std::size_t k = 0; k < cy[y].index.size(); ++k)
            acc += cy[y].weight[k] * tmp[cy[y].index[k] * out_w + x];
          dst[y * out_w + x] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    }
  return out;
}

}  // namespace

Frame bicubic_downsample(const Frame& frame, int factor) {
  if (factor < 1) throw std::invalid_argument("bicubic_downsample: factor must be >= 1");
  if (frame.h() % factor != 0 || frame.w() % factor != 0)
    throw std::invalid_argument("bicubic_downsample: " + frame.shape().str() +
                                " not divisible by " + std::to_string(factor));
  return resize_bicubic(frame, frame.h() / factor, frame.w() / factor);
}

Frame bicubic_upsample(const Frame& frame, int factor) {
  if (factor < 1) throw std::invalid_argument("bicubic_upsample: factor must be >= 1");
  return resize_bicubic(frame, frame.h() * factor, frame.w() * factor);
}

Frame crop(const Frame& frame, int top, int left, int height, int width) {
  const Shape s = frame.shape();
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > s.h || left + width > s.w)
    throw std::invalid_argument("crop: window outside frame " + s.str());
  Frame out(s.n, s.c, height, width);
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < height; ++y)
        std::copy_n(frame.plane(b, c) + static_cast<std::size_t>(top + y) * s.w + left, width,
                    out.plane(b, c) + static_cast<std::size_t>(y) * width);
  return out;
}

Frame crop_to_multiple(const Frame& frame, int m) {
  const int h = frame.h() / m * m, w = frame.w() / m * m;
  if (h == frame.h() && w == frame.w()) return frame;
  return crop(frame, 0, 0, h, w);
}

// ---------------------------------------------------------------------------
// Augmentation

Frame rotate(const Frame& f, Rotation rotation) {
  const Shape s = f.shape();
  if (rotation == Rotation::r0) return f;
  if (rotation != Rotation::r180 && s.h != s.w)
    throw std::invalid_argument("rotate: 90/270 degree rotation needs a square frame, got " +
                                s.str());
  Frame out(s);
  const int n = s.w;
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          float v = 0;
          switch (rotation) {
            case Rotation::r90: v = f.at(b, c, x, n - 1 - y); break;
            case Rotation::r180: v = f.at(b, c, s.h - 1 - y, s.w - 1 - x); break;
            case Rotation::r270: v = f.at(b, c, n - 1 - x, y); break;
            case Rotation::r0: break;
          }
          out.at(b, c, y, x) = v;
        }
  return out;
}

Frame hflip(const Frame& f) {
  Frame out(f.shape());
  for (int b = 0; b < f.n(); ++b)
    for (int c = 0; c < f.c(); ++c)
      for (int y = 0; y < f.h(); ++y)
        for (int x = 0; x < f.w(); ++x) out.at(b, c, y, x) = f.at(b, c, y, f.w() - 1 - x);
  return out;
}

FrameSequence augment(const FrameSequence& frames, Rotation rotation, bool flip) {
  FrameSequence out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    Frame g = rotate(f, rotation);
    out.push_back(flip ? hflip(g) : std::move(g));
  }
  return out;
}

FrameSequence augment_inverse(const FrameSequence& frames, Rotation rotation, bool flip) {
  const auto inv = static_cast<Rotation>((4 - static_cast<int>(rotation)) % 4);
  FrameSequence out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(rotate(flip ? hflip(f) : f, inv));
  return out;
}

// ---------------------------------------------------------------------------
// Degradations

void DegradationSpec::validate() const {
  if (sp_ratio < 0 || sp_ratio > 1) throw std::invalid_argument("sp_ratio must be in [0, 1]");
  if (gaussian_sigma < 0) throw std::invalid_argument("gaussian sigma must be >= 0");
  if (kind == Kind::jpeg && (quality_factor < 1 || quality_factor > 100))
    throw std::invalid_argument("jpeg quality factor must be in [1, 100], got " +
                                std::to_string(quality_factor));
  if (kind != Kind::jpeg && quality_factor != 0)
    throw std::invalid_argument("quality factor only applies to jpeg degradation");
}

namespace {
double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty())
    throw std::invalid_argument("degradation '" + key + "': bad number '" + v + "'");
  return out;
}
}  // namespace

DegradationSpec parse_degradation(const std::string& text) {
  DegradationSpec spec;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "clean") {
    spec.kind = DegradationSpec::Kind::clean;
    if (!args.empty()) throw std::invalid_argument("degradation 'clean' takes no arguments");
    return spec;
  }
  if (kind == "noise" || kind == "mixed_noise") {
    spec.kind = DegradationSpec::Kind::mixed_noise;
  } else if (kind == "jpeg") {
    spec.kind = DegradationSpec::Kind::jpeg;
  } else {
    throw std::invalid_argument("unknown degradation kind '" + kind + "' (clean, noise, jpeg)");
  }
  std::stringstream ss(args);
  std::string item;
  while (!args.empty() && std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    std::string key = eq == std::string::npos ? "" : item.substr(0, eq);
    const std::string val = eq == std::string::npos ? item : item.substr(eq + 1);
    if (spec.kind == DegradationSpec::Kind::jpeg && (key.empty() || key == "qf")) {
      const double q = parse_double("qf", val);
      if (q != std::floor(q)) throw std::invalid_argument("jpeg quality must be an integer");
      spec.quality_factor = static_cast<int>(q);
    } else if (spec.kind == DegradationSpec::Kind::mixed_noise && key == "sigma") {
      spec.gaussian_sigma = parse_double(key, val);
    } else if (spec.kind == DegradationSpec::Kind::mixed_noise && key == "sp") {
      spec.sp_ratio = parse_double(key, val);
    } else {
      throw std::invalid_argument("unknown degradation argument '" + item + "' for " + kind);
    }
  }
  if (spec.kind == DegradationSpec::Kind::jpeg && spec.quality_factor == 0)
    throw std::invalid_argument("jpeg degradation needs a quality factor, e.g. jpeg:20");
  spec.validate();
  return spec;
}

std::string to_string(const DegradationSpec& spec) {
  std::ostringstream os;
  switch (spec.kind) {
    case DegradationSpec::Kind::clean: os << "clean"; break;
    case DegradationSpec::Kind::mixed_noise:
      os << "noise:sigma=" << spec.gaussian_sigma << ",sp=" << spec.sp_ratio;
      break;
    case DegradationSpec::Kind::jpeg: os << "jpeg:" << spec.quality_factor; break;
  }
  return os.str();
}

Frame degrade_noise(const Frame& frame, const DegradationSpec& spec, Rng& rng) {
  spec.validate();
  Frame out = frame;
  const Shape s = frame.shape();
  if (spec.gaussian_sigma > 0)
    for (auto& v : out.span()) v += static_cast<float>(spec.gaussian_sigma * rng.normal());
  if (spec.sp_ratio > 0) {
    for (int b = 0; b < s.n; ++b)
      for (std::size_t p = 0; p < s.plane(); ++p) {
        if (rng.uniform() >= spec.sp_ratio) continue;
        const float v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
        for (int c = 0; c < s.c; ++c) out.plane(b, c)[p] = v;
      }
  }
  for (auto& v : out.span()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

namespace {

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

std::vector<unsigned char> encode_jpeg(const std::vector<unsigned char>& rgb, int w, int h,
                                       int quality) {
  jpeg_compress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw std::runtime_error(std::string("jpeg encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<unsigned char*>(rgb.data()) +
                   static_cast<std::size_t>(cinfo.next_scanline) * w * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<unsigned char> out(buffer, buffer + size);
  std::free(buffer);
  return out;
}

std::vector<unsigned char> decode_jpeg(const std::vector<unsigned char>& data, int w, int h) {
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error(std::string("jpeg decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, const_cast<unsigned char*>(data.data()),
               static_cast<unsigned long>(data.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  if (static_cast<int>(cinfo.output_width) != w || static_cast<int>(cinfo.output_height) != h)
    throw std::runtime_error("jpeg decode: size changed");
  std::vector<unsigned char> out(static_cast<std::size_t>(w) * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

Frame degrade_jpeg(const Frame& frame, int quality_factor) {
  if (quality_factor < 1 || quality_factor > 100)
    throw std::invalid_argument("degrade_jpeg: quality factor must be in [1, 100], got " +
                                std::to_string(quality_factor));
  if (frame.c() != 3) throw std::invalid_argument("degrade_jpeg: expected RGB frames");
  const int h = frame.h(), w = frame.w();
  Frame out(frame.shape());
  for (int b = 0; b < frame.n(); ++b) {
    std::vector<unsigned char> rgb(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const float v = std::clamp(frame.at(b, c, y, x), 0.0f, 1.0f);
          rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
              static_cast<unsigned char>(std::lround(v * 255.0f));
        }
    const auto decoded = decode_jpeg(encode_jpeg(rgb, w, h, quality_factor), w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(b, c, y, x) = decoded[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
  }
  return out;
}

Frame degrade(const Frame& frame, const DegradationSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case DegradationSpec::Kind::clean: return frame;
    case DegradationSpec::Kind::mixed_noise: return degrade_noise(frame, spec, rng);
    case DegradationSpec::Kind::jpeg: return degrade_jpeg(frame, spec.quality_factor);
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Datasets

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::string to_string(MotionClass m) {
  switch (m) {
    case MotionClass::fast: return "fast";
    case MotionClass::medium: return "medium";
    case MotionClass::slow: return "slow";
    case MotionClass::unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

MotionClass parse_motion(const std::string& s) {
  if (s == "fast") return MotionClass::fast;
  if (s == "medium") return MotionClass::medium;
  if (s == "slow") return MotionClass::slow;
  if (s == "unlabeled" || s.empty()) return MotionClass::unlabeled;
  throw std::invalid_argument("unknown motion class '" + s + "'");
}

fs::path clip_dir(const fs::path& root, const ClipRecord& clip) {
  return root / to_string(clip.split) / clip.id;
}

fs::path frame_path(const fs::path& dir, int one_based_index) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%02d.png", one_based_index);
  return dir / name;
}

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

std::vector<ClipRecord> load_index(const fs::path& root) {
  const fs::path index = root / "index.txt";
  std::ifstream in(index);
  if (!in) throw std::runtime_error("cannot read clip index " + index.string());
  std::vector<ClipRecord> clips;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty())
      throw std::runtime_error(index.string() + ":" + std::to_string(lineno) +
                               ": expected 'id,split[,motion]'");
    ClipRecord rec;
    rec.id = fields[0];
    rec.split = parse_split(fields[1]);
    rec.motion = fields.size() == 3 ? parse_motion(fields[2]) : MotionClass::unlabeled;
    const fs::path dir = clip_dir(root, rec);
    for (int i = 1; fs::exists(frame_path(dir, i)); ++i) rec.frame_paths.push_back(frame_path(dir, i));
    if (rec.frame_paths.size() < 2)
      throw std::runtime_error("clip " + rec.id + ": fewer than 2 frames under " + dir.string());
    clips.push_back(std::move(rec));
  }
  return clips;
}

void write_index(const fs::path& root, const std::vector<ClipRecord>& clips) {
  fs::create_directories(root);
  std::ofstream out(root / "index.txt");
  out << "# id,split,motion\n";
  for (const auto& c : clips) out << c.id << ',' << to_string(c.split) << ',' << to_string(c.motion) << '\n';
  if (!out) throw std::runtime_error("failed to write " + (root / "index.txt").string());
}

FrameSequence load_frames(const ClipRecord& clip) {
  FrameSequence frames;
  frames.reserve(clip.frame_paths.size());
  for (const auto& p : clip.frame_paths) {
    frames.push_back(read_png(p));
    if (frames.back().shape() != frames.front().shape())
      throw std::runtime_error("clip " + clip.id + ": frames differ in size");
  }
  return frames;
}

namespace {

// Area overlap of pixel cell [p, p+1) with interval [a, b).
double coverage(double p, double a, double b) {
  return std::max(0.0, std::min(p + 1.0, b) - std::max(p, a));
}

struct Pattern {
  double fy, fx, phase, fy2, fx2, phase2;
  double base[3], amp[3];
  double eval(double y, double x, int c) const {
    const double t = 0.5 * std::sin(fy * y + fx * x + phase) + 0.5 * std::sin(fy2 * y + fx2 * x + phase2);
    return base[c] + amp[c] * t;
  }
};

Pattern random_pattern(Rng& rng, double max_freq) {
  Pattern p{};
  p.fy = rng.uniform(-max_freq, max_freq);
  p.fx = rng.uniform(-max_freq, max_freq);
  p.fy2 = rng.uniform(-max_freq, max_freq);
  p.fx2 = rng.uniform(-max_freq, max_freq);
  p.phase = rng.uniform(0, 6.283185307179586);
  p.phase2 = rng.uniform(0, 6.283185307179586);
  for (int c = 0; c < 3; ++c) {
    p.base[c] = rng.uniform(0.3, 0.7);
    p.amp[c] = rng.uniform(0.1, 0.25);
  }
  return p;
}

}  // namespace

FrameSequence synthesize_clip(const SyntheticOptions& opts, std::uint64_t seed, MotionClass* motion) {
  if (opts.frames < 2 || opts.height < 4 || opts.width < 4)
    throw std::invalid_argument("synthesize_clip: need >= 2 frames of at least 4x4");
  Rng rng(seed);
  const Pattern background = random_pattern(rng, 0.15);
  struct Rect {
    double y, x, h, w, vy, vx;
    Pattern texture;
  };
  std::vector<Rect> rects;
  double fastest = 0;
  for (int i = 0; i < opts.rectangles; ++i) {
    Rect r{};
    r.h = rng.uniform(0.25, 0.5) * opts.height;
    r.w = rng.uniform(0.25, 0.5) * opts.width;
    r.y = rng.uniform(0, opts.height - r.h);
    r.x = rng.uniform(0, opts.width - r.w);
    const double speed = rng.uniform(0.4, 1.0) * opts.max_speed;
    const double angle = rng.uniform(0, 6.283185307179586);
    r.vy = speed * std::sin(angle);
    r.vx = speed * std::cos(angle);
    fastest = std::max(fastest, speed);
    r.texture = random_pattern(rng, 0.6);
    rects.push_back(r);
  }
  if (motion)
    *motion = fastest >= 4.0 ? MotionClass::fast
                             : (fastest >= 2.0 ? MotionClass::medium : MotionClass::slow);

  FrameSequence frames;
  for (int t = 0; t < opts.frames; ++t) {
    Frame f(1, 3, opts.height, opts.width);
    for (int y = 0; y < opts.height; ++y)
      for (int x = 0; x < opts.width; ++x)
        for (int c = 0; c < 3; ++c) f.at(0, c, y, x) = static_cast<float>(background.eval(y, x, c));
    for (const auto& r : rects) {
      const double y0 = r.y + r.vy * t, x0 = r.x + r.vx * t;
      const int ylo = std::max(0, static_cast<int>(std::floor(y0)));
      const int yhi = std::min(opts.height - 1, static_cast<int>(std::ceil(y0 + r.h)));
      const int xlo = std::max(0, static_cast<int>(std::floor(x0)));
      const int xhi = std::min(opts.width - 1, static_cast<int>(std::ceil(x0 + r.w)));
      for (int y = ylo; y <= yhi; ++y)
        for (int x = xlo; x <= xhi; ++x) {
          const double cov = coverage(y, y0, y0 + r.h) * coverage(x, x0, x0 + r.w);
          if (cov <= 0) continue;
          for (int c = 0; c < 3; ++c) {
            const double tex = r.texture.eval(y + 0.5 - y0, x + 0.5 - x0, c);
            float& v = f.at(0, c, y, x);
            v = static_cast<float>((1 - cov) * v + cov * tex);
          }
        }
    }
    for (auto& v : f.span()) v = std::clamp(v, 0.0f, 1.0f);
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<ClipRecord> write_synthetic_dataset(const fs::path& root, int count,
                                                const SyntheticOptions& opts, std::uint64_t seed,
                                                Split split) {
  if (count < 1) throw std::invalid_argument("write_synthetic_dataset: count must be >= 1");
  std::vector<ClipRecord> clips;
  for (int i = 0; i < count; ++i) {
    ClipRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "clip_%04d", i);
    rec.id = id;
    rec.split = split;
    const auto frames = synthesize_clip(opts, mix64(seed + static_cast<std::uint64_t>(i)), &rec.motion);
    const fs::path dir = clip_dir(root, rec);
    fs::create_directories(dir);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      rec.frame_paths.push_back(frame_path(dir, static_cast<int>(t) + 1));
      write_png(rec.frame_paths.back(), frames[t]);
    }
    clips.push_back(std::move(rec));
  }
  write_index(root, clips);
  return clips;
}

TrainingSample make_training_sample(const FrameSequence& clip_frames, Rng& rng,
                                    const SampleOptions& opts) {
  constexpr int kWindow = 7;
  if (clip_frames.size() < kWindow)
    throw std::invalid_argument("make_training_sample: clip has " +
                                std::to_string(clip_frames.size()) + " frames, need 7");
  if (opts.hr_patch < opts.scale || opts.hr_patch % opts.scale != 0)
    throw std::invalid_argument("make_training_sample: hr_patch must be a multiple of the scale");
  const Shape s = clip_frames.front().shape();
  if (s.h < opts.hr_patch || s.w < opts.hr_patch)
    throw std::invalid_argument("make_training_sample: frames " + s.str() +
                                " smaller than the HR patch");
  const std::size_t start = rng.below(clip_frames.size() - kWindow + 1);
  const int top = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.h - opts.hr_patch + 1)));
  const int left = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.w - opts.hr_patch + 1)));
  const auto rotation = static_cast<Rotation>(rng.below(4));
  const bool flip = rng.below(2) == 1;

  TrainingSample sample;
  for (int t = 0; t < kWindow; ++t)
    sample.hr_targets.push_back(crop(clip_frames[start + t], top, left, opts.hr_patch, opts.hr_patch));
  if (opts.augment) sample.hr_targets = augment(sample.hr_targets, rotation, flip);
  for (const auto& hr : sample.hr_targets) sample.lr_targets.push_back(bicubic_downsample(hr, opts.scale));
  for (int t = 0; t < kWindow; t += 2) sample.lr_inputs.push_back(sample.lr_targets[t]);
  return sample;
}

}  // namespace zsm
