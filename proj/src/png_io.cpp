#include "homalign/png_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace homalign {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void png_error_to_exception(png_structp, png_const_charp msg) {
  throw UnsupportedFormat(std::string("png: ") + msg);
}

void png_warning_ignore(png_structp, png_const_charp) {}

struct ReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~ReadState() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct WriteState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~WriteState() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

}  // namespace

Image load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("load_png: cannot open '" + path + "'");

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw UnsupportedFormat("load_png: '" + path + "' is not a PNG file");
  }

  ReadState st;
  st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                  png_error_to_exception, png_warning_ignore);
  if (!st.png) throw IoError("load_png: png_create_read_struct failed");
  st.info = png_create_info_struct(st.png);
  if (!st.info) throw IoError("load_png: png_create_info_struct failed");

  png_init_io(st.png, fp.get());
  png_set_sig_bytes(st.png, 8);
  png_read_info(st.png, st.info);

  const png_uint_32 w = png_get_image_width(st.png, st.info);
  const png_uint_32 h = png_get_image_height(st.png, st.info);
  const int color = png_get_color_type(st.png, st.info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(st.png);
  if (color == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(st.png, st.info) < 8) {
    png_set_expand_gray_1_2_4_to_8(st.png);
  }
  if (png_get_valid(st.png, st.info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(st.png);
  }
  png_set_strip_alpha(st.png);  // also covers tRNS-expanded alpha
  png_set_interlace_handling(st.png);
  png_read_update_info(st.png, st.info);

  const int depth = png_get_bit_depth(st.png, st.info);
  const int channels = png_get_channels(st.png, st.info);
  if (h < 2 || w < 2) {
    throw UnsupportedFormat("load_png: image smaller than 2x2");
  }
  if ((depth != 8 && depth != 16) || (channels != 1 && channels != 3)) {
    throw UnsupportedFormat("load_png: unsupported depth " +
                            std::to_string(depth) + " / channels " +
                            std::to_string(channels));
  }

  const size_t rowbytes = png_get_rowbytes(st.png, st.info);
  std::vector<unsigned char> raw(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = raw.data() + r * rowbytes;
  png_read_image(st.png, rows.data());
  png_read_end(st.png, nullptr);

  Image img(static_cast<int>(h), static_cast<int>(w), channels);
  if (depth == 8) {
    for (png_uint_32 r = 0; r < h; ++r) {
      const unsigned char* row = rows[r];
      for (png_uint_32 c = 0; c < w * channels; ++c) {
        img.data[static_cast<size_t>(r) * w * channels + c] = row[c] / 255.0;
      }
    }
  } else {
    for (png_uint_32 r = 0; r < h; ++r) {
      const unsigned char* row = rows[r];
      for (png_uint_32 c = 0; c < w * channels; ++c) {
        const unsigned v = (unsigned(row[2 * c]) << 8) | row[2 * c + 1];
        img.data[static_cast<size_t>(r) * w * channels + c] = v / 65535.0;
      }
    }
  }
  return img;
}

void save_png(const Image& img, const std::string& path) {
  if (img.d != 1 && img.d != 3) {
    throw UnsupportedFormat("save_png: channel count must be 1 or 3, got " +
                            std::to_string(img.d));
  }
  if (img.h < 1 || img.w < 1) throw Error("save_png: empty image");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("save_png: cannot open '" + path + "' for writing");

  WriteState st;
  st.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                   png_error_to_exception, png_warning_ignore);
  if (!st.png) throw IoError("save_png: png_create_write_struct failed");
  st.info = png_create_info_struct(st.png);
  if (!st.info) throw IoError("save_png: png_create_info_struct failed");

  png_init_io(st.png, fp.get());
  png_set_IHDR(st.png, st.info, img.w, img.h, 8,
               img.d == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(st.png, st.info);

  std::vector<unsigned char> row(static_cast<size_t>(img.w) * img.d);
  for (int r = 0; r < img.h; ++r) {
    for (int c = 0; c < img.w * img.d; ++c) {
      double v = img.data[static_cast<size_t>(r) * img.w * img.d + c];
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      row[c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    png_write_row(st.png, row.data());
  }
  png_write_end(st.png, nullptr);
}

}  // namespace homalign
