#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>

#include "rsc/binary_io.hpp"
#include "rsc/error.hpp"
#include "rsc/tensor.hpp"

namespace rsc {

// ---------------------------------------------------------------- PPM (P6)

namespace detail {

inline std::size_t ppm_header_field(const std::string& bytes, std::size_t& pos, const std::string& src) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t v = 0;
  std::size_t digits = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
    if (++digits > 9) throw FormatError(src + ": header value too large");
  }
  if (digits == 0) throw FormatError(src + ": malformed PPM header");
  return v;
}

}  // namespace detail

/// Decodes a binary 8-bit PPM into a 3 x H x W tensor with values in [0, 255].
inline Tensor decode_ppm(const std::string& bytes, const std::string& src = "ppm") {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError(src + ": not a binary PPM (P6)");
  std::size_t pos = 2;
  const std::size_t w = detail::ppm_header_field(bytes, pos, src);
  const std::size_t h = detail::ppm_header_field(bytes, pos, src);
  const std::size_t maxval = detail::ppm_header_field(bytes, pos, src);
  if (w == 0 || h == 0) throw FormatError(src + ": zero image dimension");
  if (maxval != 255) throw FormatError(src + ": unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError(src + ": malformed PPM header");
  ++pos;
  if (bytes.size() - pos < 3 * w * h) throw FormatError(src + ": truncated pixel data");
  Tensor img({3, h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, i, j) = static_cast<unsigned char>(bytes[pos + (i * w + j) * 3 + c]);
  return img;
}

/// Values are rounded and clamped to [0, 255].
inline std::string encode_ppm(const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("PPM output needs a 3 x H x W tensor");
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + 3 * w * h);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(std::round(img.at(c, i, j)), 0.0, 255.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
      }
  return out;
}

inline Tensor load_ppm(const std::string& path) { return decode_ppm(read_file(path), path); }
inline void write_ppm(const Tensor& img, const std::string& path) { write_file(path, encode_ppm(img)); }

// ---------------------------------------------------------------- raw tensor (.rsct)
//   "RSCT" | u32 version | u8 ndim | ndim x u32 dims | f32 payload, all LE

inline std::string encode_rsct(const Tensor& t) {
  ByteWriter w;
  w.raw("RSCT");
  w.u32(1);
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.data()) w.f32(static_cast<float>(v));
  return w.bytes();
}

inline Tensor decode_rsct(std::string bytes, const std::string& src = "rsct") {
  ByteReader rd(std::move(bytes), src);
  if (rd.raw(4) != "RSCT") throw FormatError(src + ": bad magic");
  if (const auto v = rd.u32(); v != 1) throw FormatError(src + ": unsupported version " + std::to_string(v));
  const std::uint8_t ndim = rd.u8();
  if (ndim == 0) throw FormatError(src + ": no dimensions");
  Shape shape;
  std::size_t n = 1;
  for (std::uint8_t i = 0; i < ndim; ++i) {
    shape.push_back(rd.u32());
    if (shape.back() == 0) throw FormatError(src + ": zero extent");
    n *= shape.back();
  }
  rd.require(n * 4);
  std::vector<double> data(n);
  for (auto& v : data) v = rd.f32();
  if (!rd.at_end()) throw FormatError(src + ": trailing bytes");
  return Tensor(std::move(shape), std::move(data));
}

inline Tensor load_rsct(const std::string& path) { return decode_rsct(read_file(path), path); }
inline void write_rsct(const Tensor& t, const std::string& path) { write_file(path, encode_rsct(t)); }

/// Loads an image by extension: `.ppm` or `.rsct`.
inline Tensor load_image(const std::string& path) {
  auto ends_with = [&](std::string_view s) { return path.size() >= s.size() && path.ends_with(s); };
  if (ends_with(".ppm")) return load_ppm(path);
  if (ends_with(".rsct")) return load_rsct(path);
  throw FormatError(path + ": unsupported image extension (expected .ppm or .rsct)");
}

// ---------------------------------------------------------------- resize / preprocess

/// Bilinear resampling with corner-aligned sample positions: output corners
/// coincide with input corners.
inline Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w) {
  if (img.rank() != 3) throw ShapeError("resize expects C x H x W");
  if (out_h == 0 || out_w == 0) throw ShapeError("resize target must be at least 1x1");
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (H == out_h && W == out_w) return img;
  auto coord = [](std::size_t i, std::size_t in, std::size_t out) {
    if (out == 1) return (static_cast<double>(in) - 1.0) / 2.0;
    return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  };
  Tensor out({C, out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i) {
    const double y = coord(i, H, out_h);
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double x = coord(j, W, out_w);
      const auto x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double fx = x - static_cast<double>(x0);
      for (std::size_t c = 0; c < C; ++c) {
        const double top = img.at(c, y0, x0) * (1 - fx) + img.at(c, y0, x1) * fx;
        const double bot = img.at(c, y1, x0) * (1 - fx) + img.at(c, y1, x1) * fx;
        out.at(c, i, j) = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

/// Subtracts each channel's own mean, in place.
inline void subtract_channel_means(Tensor& img) {
  const std::size_t C = img.dim(0), n = img.size() / C;
  for (std::size_t c = 0; c < C; ++c) {
    double* p = img.data().data() + c * n;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    const double m = s / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) p[i] -= m;
  }
}

/// Resize to the network input size, then remove the per-image mean of each
/// RGB channel.
inline Tensor preprocess(const Tensor& img, std::size_t out_h = 150, std::size_t out_w = 150) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw ShapeError("preprocess expects a 3-channel image, got " + shape_str(img.shape()));
  Tensor out = resize_bilinear(img, out_h, out_w);
  subtract_channel_means(out);
  return out;
}

}  // namespace rsc
