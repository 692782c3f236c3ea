// SPDX-License-Identifier: Apache-2.0

#include "gsdf/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>

namespace gsdf {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageIoError("cannot open " + path.string());
  return f;
}

struct ErrorSlot {
  char message[256] = {0};
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(png));
  std::snprintf(slot->message, sizeof(slot->message), "%s", msg);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

// All C++ objects touched here are created before setjmp, so a longjmp back
// into this frame skips no destructors.
bool write_rows(std::FILE* file, int width, int height, int color_type, int bit_depth,
                png_bytepp rows, ErrorSlot* err) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, err, on_png_error, on_png_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, file);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct ReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
};

bool read_header(std::FILE* file, ReadState* st, PngImage* out, std::size_t* rowbytes,
                 ErrorSlot* err) {
  st->png = png_create_read_struct(PNG_LIBPNG_VER_STRING, err, on_png_error, on_png_warning);
  if (!st->png) return false;
  st->info = png_create_info_struct(st->png);
  if (setjmp(png_jmpbuf(st->png))) return false;
  png_init_io(st->png, file);
  png_set_sig_bytes(st->png, 8);
  png_read_info(st->png, st->info);
  const int color_type = png_get_color_type(st->png, st->info);
  const int depth = png_get_bit_depth(st->png, st->info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(st->png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(st->png);
  png_read_update_info(st->png, st->info);
  out->width = static_cast<int>(png_get_image_width(st->png, st->info));
  out->height = static_cast<int>(png_get_image_height(st->png, st->info));
  out->channels = png_get_channels(st->png, st->info);
  out->bit_depth = png_get_bit_depth(st->png, st->info);
  *rowbytes = png_get_rowbytes(st->png, st->info);
  return true;
}

bool read_body(ReadState* st, png_bytepp rows, ErrorSlot* err) {
  (void)err;
  if (setjmp(png_jmpbuf(st->png))) return false;
  png_read_image(st->png, rows);
  png_read_end(st->png, nullptr);
  return true;
}

}  // namespace

PngImage read_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ImageIoError("not a PNG file: " + path.string());
  }
  ErrorSlot err;
  ReadState st;
  PngImage out;
  std::size_t rowbytes = 0;
  const bool header_ok = read_header(file.get(), &st, &out, &rowbytes, &err);
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  bool body_ok = false;
  if (header_ok) {
    buffer.resize(rowbytes * static_cast<std::size_t>(out.height));
    rows.resize(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) {
      rows[static_cast<std::size_t>(y)] = buffer.data() + static_cast<std::size_t>(y) * rowbytes;
    }
    body_ok = read_body(&st, rows.data(), &err);
  }
  png_destroy_read_struct(&st.png, &st.info, nullptr);
  if (!header_ok || !body_ok) {
    throw ImageIoError("malformed PNG " + path.string() + ": " + err.message);
  }

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    // PNG stores 16-bit samples big-endian.
    for (std::size_t i = 0; i < n; ++i) {
      out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
  }
  return out;
}

void write_png_gray16(const std::filesystem::path& path, int width, int height,
                      std::span<const std::uint16_t> samples) {
  if (samples.size() != static_cast<std::size_t>(width) * height) {
    throw ImageIoError("sample count does not match image size");
  }
  std::vector<png_byte> bytes(samples.size() * 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bytes[2 * i] = static_cast<png_byte>(samples[i] >> 8);
    bytes[2 * i + 1] = static_cast<png_byte>(samples[i] & 0xff);
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * width * 2;
  }
  FilePtr file = open_file(path, "wb");
  ErrorSlot err;
  if (!write_rows(file.get(), width, height, PNG_COLOR_TYPE_GRAY, 16, rows.data(), &err)) {
    throw ImageIoError("failed to write " + path.string() + ": " + err.message);
  }
}

void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    std::span<const std::uint8_t> samples) {
  if (samples.size() != static_cast<std::size_t>(width) * height * 3) {
    throw ImageIoError("sample count does not match image size");
  }
  std::vector<png_byte> bytes(samples.begin(), samples.end());
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * width * 3;
  }
  FilePtr file = open_file(path, "wb");
  ErrorSlot err;
  if (!write_rows(file.get(), width, height, PNG_COLOR_TYPE_RGB, 8, rows.data(), &err)) {
    throw ImageIoError("failed to write " + path.string() + ": " + err.message);
  }
}

}  // namespace gsdf
