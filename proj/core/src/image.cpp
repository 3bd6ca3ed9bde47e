#include "cxr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include <jpeglib.h>
#include <png.h>

#include "cxr/checkpoint.hpp"

namespace cxr {

GrayImage::GrayImage(std::size_t h, std::size_t w, std::vector<float> values)
    : height(h), width(w), pixels(std::move(values)) {
  if (pixels.size() != h * w) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) + " with " +
                     std::to_string(pixels.size()) + " pixels");
  }
}

namespace {

// ---- PNG ----------------------------------------------------------------

struct PngSource {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

struct PngErrorSlot {
  char message[256];
};

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<PngErrorSlot*>(png_get_error_ptr(png));
  std::snprintf(slot->message, sizeof(slot->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

void png_read_bytes(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
  if (src->size - src->pos < n) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, src->data + src->pos, n);
  src->pos += n;
}

void png_write_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* sink = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  sink->insert(sink->end(), data, data + n);
}

void png_flush_noop(png_structp) {}

struct PngDecodeState {
  std::vector<std::uint8_t> buffer;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  std::size_t channels = 0, row_bytes = 0;
};

// Everything libpng may longjmp out of lives here, away from the setjmp frame.
[[gnu::noinline]] void png_read_body(png_structp png, png_infop info, PngSource* src,
                                     PngDecodeState* st) {
  png_set_read_fn(png, src, png_read_bytes);
  png_read_info(png, info);
  st->width = png_get_image_width(png, info);
  st->height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_scale_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY) png_set_expand_gray_1_2_4_to_8(png);
  png_set_packing(png);
  png_read_update_info(png, info);
  st->channels = png_get_channels(png, info);
  st->row_bytes = png_get_rowbytes(png, info);
  st->buffer.resize(st->row_bytes * st->height);
  st->rows.resize(st->height);
  for (png_uint_32 r = 0; r < st->height; ++r) st->rows[r] = st->buffer.data() + r * st->row_bytes;
  png_read_image(png, st->rows.data());
  png_read_end(png, nullptr);
}

GrayImage decode_png(std::span<const std::uint8_t> bytes) {
  PngErrorSlot err{};
  PngSource src{bytes.data(), bytes.size(), 0};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler,
                                           png_warning_handler);
  if (!png) throw DecodeError("PNG: cannot allocate decoder");
  png_infop info = png_create_info_struct(png);
  PngDecodeState st;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError(std::string("PNG: ") + err.message);
  }
  png_read_body(png, info, &src, &st);
  png_destroy_read_struct(&png, &info, nullptr);

  if (st.width == 0 || st.height == 0) throw DecodeError("PNG: zero-dimension image");
  GrayImage img(st.height, st.width);
  for (std::size_t r = 0; r < st.height; ++r) {
    const std::uint8_t* row = st.buffer.data() + r * st.row_bytes;
    for (std::size_t c = 0; c < st.width; ++c) img.at(r, c) = row[c * st.channels];
  }
  return img;
}

struct PngEncodeJob {
  const std::uint8_t* pixels;
  std::size_t height, width, channels;
  int color_type;
  std::vector<png_text>* chunks;
  std::vector<png_bytep>* rows;
  std::vector<std::uint8_t>* out;
};

[[gnu::noinline]] void png_write_body(png_structp png, png_infop info, const PngEncodeJob* job) {
  png_set_write_fn(png, job->out, png_write_bytes, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(job->width),
               static_cast<png_uint_32>(job->height), 8, job->color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  if (!job->chunks->empty()) {
    png_set_text(png, info, job->chunks->data(), static_cast<int>(job->chunks->size()));
  }
  png_write_info(png, info);
  for (std::size_t r = 0; r < job->height; ++r) {
    (*job->rows)[r] = const_cast<png_bytep>(job->pixels + r * job->width * job->channels);
  }
  png_write_image(png, job->rows->data());
  png_write_end(png, nullptr);
}

std::vector<std::uint8_t> encode_png_raw(const std::uint8_t* pixels, std::size_t height,
                                         std::size_t width, int color_type, std::size_t channels,
                                         const PngText& text) {
  if (height == 0 || width == 0) throw ShapeError("cannot encode an empty image");
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows(height);
  std::vector<png_text> chunks(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
    chunks[i].key = const_cast<char*>(text[i].first.c_str());
    chunks[i].text = const_cast<char*>(text[i].second.c_str());
    chunks[i].text_length = text[i].second.size();
  }
  const PngEncodeJob job{pixels, height, width, channels, color_type, &chunks, &rows, &out};
  PngErrorSlot err{};
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler,
                                            png_warning_handler);
  if (!png) throw IoError("PNG: cannot allocate encoder");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(std::string("PNG encode: ") + err.message);
  }
  png_write_body(png, info, &job);
  png_destroy_write_struct(&png, &info);
  return out;
}

// ---- PGM ----------------------------------------------------------------

std::size_t pgm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw DecodeError("PGM: malformed header");
  std::size_t value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > (1u << 30)) throw DecodeError("PGM: header value too large");
    ++pos;
  }
  return value;
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  const std::size_t width = pgm_token(bytes, pos);
  const std::size_t height = pgm_token(bytes, pos);
  const std::size_t maxval = pgm_token(bytes, pos);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DecodeError("PGM: malformed header");
  ++pos;
  if (width == 0 || height == 0) throw DecodeError("PGM: zero-dimension image");
  if (maxval == 0 || maxval > 65535) throw DecodeError("PGM: invalid maxval");
  const std::size_t sample = maxval > 255 ? 2 : 1;
  if (bytes.size() - pos < width * height * sample) throw DecodeError("PGM: truncated pixel data");
  GrayImage img(height, width);
  for (std::size_t i = 0; i < width * height; ++i) {
    if (sample == 1) {
      img.pixels[i] = bytes[pos + i];
    } else {
      const unsigned v = (unsigned{bytes[pos + 2 * i]} << 8) | bytes[pos + 2 * i + 1];
      img.pixels[i] = static_cast<float>(std::lround(v * 255.0 / static_cast<double>(maxval)));
    }
  }
  return img;
}

// ---- JPEG ---------------------------------------------------------------

struct JpegError {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

GrayImage decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.emit_message = jpeg_silent;
  std::vector<std::uint8_t> buffer;
  std::size_t width = 0, height = 0, channels = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError(std::string("JPEG: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components == 1) {
    cinfo.out_color_space = JCS_GRAYSCALE;
  } else if (cinfo.num_components == 3) {
    cinfo.out_color_space = JCS_RGB;
  } else {
    std::snprintf(err.message, sizeof(err.message), "unsupported component count %d",
                  cinfo.num_components);
    std::longjmp(err.jump, 1);
  }
  jpeg_start_decompress(&cinfo);
  width = cinfo.output_width;
  height = cinfo.output_height;
  channels = static_cast<std::size_t>(cinfo.output_components);
  buffer.resize(width * height * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buffer.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  if (width == 0 || height == 0) throw DecodeError("JPEG: zero-dimension image");
  GrayImage img(height, width);
  for (std::size_t i = 0; i < width * height; ++i) img.pixels[i] = buffer[i * channels];
  return img;
}

}  // namespace

GrayImage decode_grayscale(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) {
    return decode_png(bytes);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return decode_jpeg(bytes);
  }
  if (bytes.empty()) throw DecodeError("empty image file");
  throw DecodeError("unrecognized image format (expected PNG, PGM P5, or JPEG)");
}

GrayImage load_grayscale(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());
  const std::string raw = read_file(path);
  try {
    return decode_grayscale(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const RgbImage& image, const PngText& text) {
  return encode_png_raw(image.rgb.data(), image.height, image.width, PNG_COLOR_TYPE_RGB, 3, text);
}

std::vector<std::uint8_t> encode_png(const GrayImage& image, const PngText& text) {
  std::vector<std::uint8_t> bytes(image.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::clamp(std::lround(image.pixels[i]), 0L, 255L));
  }
  return encode_png_raw(bytes.data(), image.height, image.width, PNG_COLOR_TYPE_GRAY, 1, text);
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (float p : image.pixels) {
    out.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(p), 0L, 255L)));
  }
  return out;
}

void save_png(const std::filesystem::path& path, const RgbImage& image, const PngText& text) {
  const auto bytes = encode_png(image, text);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void save_png(const std::filesystem::path& path, const GrayImage& image, const PngText& text) {
  const auto bytes = encode_png(image, text);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

GrayImage resize_bilinear(const GrayImage& image, std::size_t out_h, std::size_t out_w) {
  if (image.height == 0 || image.width == 0 || out_h == 0 || out_w == 0) {
    throw ShapeError("resize: zero-dimension image");
  }
  if (image.height == out_h && image.width == out_w) return image;
  const double sy = out_h > 1 ? static_cast<double>(image.height - 1) / static_cast<double>(out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(image.width - 1) / static_cast<double>(out_w - 1) : 0.0;
  GrayImage out(out_h, out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    const double y = static_cast<double>(r) * sy;
    const std::size_t y0 = std::min(static_cast<std::size_t>(y), image.height - 1);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < out_w; ++c) {
      const double x = static_cast<double>(c) * sx;
      const std::size_t x0 = std::min(static_cast<std::size_t>(x), image.width - 1);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double fx = x - static_cast<double>(x0);
      const double a = image.at(y0, x0), b = image.at(y0, x1);
      const double cc = image.at(y1, x0), d = image.at(y1, x1);
      const double top = a + fx * (b - a);
      const double bottom = cc + fx * (d - cc);
      out.at(r, c) = static_cast<float>(top + fy * (bottom - top));
    }
  }
  return out;
}

Tensor<float> normalize_mean(const GrayImage& image) {
  if (image.size() == 0) throw DegenerateInputError("cannot normalize an empty image");
  double sum = 0.0;
  for (float p : image.pixels) sum += p;
  const double mean = sum / static_cast<double>(image.size());
  if (!(mean > 0.0) || !std::isfinite(mean)) {
    throw DegenerateInputError("image mean is " + std::to_string(mean) +
                               "; mean normalization needs a positive mean");
  }
  Tensor<float> out({image.height, image.width, 1});
  for (std::size_t i = 0; i < image.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(image.pixels[i]) / mean);
  }
  return out;
}

GrayImage flip_horizontal(const GrayImage& image) {
  GrayImage out(image.height, image.width);
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c) out.at(r, c) = image.at(r, image.width - 1 - c);
  }
  return out;
}

RgbImage upscale_nearest(const RgbImage& image, std::size_t factor) {
  if (factor == 0) throw ShapeError("upscale factor must be >= 1");
  if (factor == 1) return image;
  RgbImage out(image.height * factor, image.width * factor);
  for (std::size_t r = 0; r < out.height; ++r) {
    for (std::size_t c = 0; c < out.width; ++c) {
      std::copy_n(image.pixel(r / factor, c / factor), 3, out.pixel(r, c));
    }
  }
  return out;
}

}  // namespace cxr
