#include "zsm/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace zsm {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(float v) {
  const float c = std::min(1.0f, std::max(0.0f, v));
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Frame read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw std::runtime_error(path.string() + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialization failed");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Frame out(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = rows[y][3 * x + c] / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const Frame& frame) {
  const int ch = frame.c();
  if (frame.n() != 1 || (ch != 3 && ch != 1))
    throw std::invalid_argument("write_png: expected a 1x3xHxW or 1x1xHxW frame, got " +
                                frame.shape().str());
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialization failed");
  }
  const int h = frame.h(), w = frame.w();
  std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) row[3 * x + c] = to_byte(frame.at(0, ch == 3 ? c : 0, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Frame quantize8(const Frame& frame) {
  Frame out = frame;
  for (auto& v : out.span()) v = to_byte(v) / 255.0f;
  return out;
}

Frame stack_batch(const std::vector<const Frame*>& frames) {
  if (frames.empty()) throw std::invalid_argument("stack_batch: empty");
  const Shape s = frames.front()->shape();
  if (s.n != 1) throw std::invalid_argument("stack_batch: inputs must have N=1");
  Frame out(static_cast<int>(frames.size()), s.c, s.h, s.w);
  for (std::size_t b = 0; b < frames.size(); ++b) {
    if (frames[b]->shape() != s) throw std::invalid_argument("stack_batch: shape mismatch");
    std::memcpy(out.plane(static_cast<int>(b), 0), frames[b]->data(), sizeof(float) * s.numel());
  }
  return out;
}

Frame batch_element(const Frame& batch, int b) {
  const Shape s = batch.shape();
  Frame out(1, s.c, s.h, s.w);
  std::memcpy(out.data(), batch.plane(b, 0), sizeof(float) * out.size());
  return out;
}

}  // namespace zsm
