#include "xvseg/mask_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "xvseg/errors.hpp"

namespace xvseg {

namespace {

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  f.seekg(0, std::ios::end);
  std::streamoff len = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<size_t>(len));
  if (len > 0) f.read(reinterpret_cast<char*>(buf.data()), len);
  if (!f) throw IoError("read failed: " + path);
  return buf;
}

struct PngImageGuard {
  png_image im{};
  PngImageGuard() { im.version = PNG_IMAGE_VERSION; }
  ~PngImageGuard() { png_image_free(&im); }
};

}  // namespace

MaskGrid read_mask(const std::string& path) {
  auto bytes = slurp(path);
  PngImageGuard g;
  if (!png_image_begin_read_from_memory(&g.im, bytes.data(), bytes.size()))
    throw FormatError("malformed header: " + path + " (" + g.im.message + ")");
  // The on-disk format must be single-channel; a color or paletted raster is
  // not a mask no matter what its pixel values are.
  if (PNG_IMAGE_SAMPLE_CHANNELS(g.im.format) != 1 || (g.im.format & PNG_FORMAT_FLAG_COLORMAP))
    throw ValueError("non-binary mask: " + path + " is not a single-channel raster");
  g.im.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> pix(PNG_IMAGE_SIZE(g.im));
  if (!png_image_finish_read(&g.im, nullptr, pix.data(), 0, nullptr))
    throw FormatError("malformed PNG data: " + path + " (" + g.im.message + ")");
  MaskGrid m = MaskGrid::zeros(static_cast<int>(g.im.height), static_cast<int>(g.im.width));
  for (size_t i = 0; i < pix.size(); ++i) {
    if (pix[i] == 0)
      m.v[i] = 0.0;
    else if (pix[i] == 255)
      m.v[i] = 1.0;
    else
      throw ValueError("non-binary mask: " + path + " contains gray value " +
                       std::to_string(pix[i]));
  }
  m.binary = true;
  return m;
}

void write_mask(const MaskGrid& mask, const std::string& path) {
  if (!mask.check_binary()) throw ValueError("write_mask: mask is not binary");
  PngImageGuard g;
  g.im.width = static_cast<png_uint_32>(mask.w);
  g.im.height = static_cast<png_uint_32>(mask.h);
  g.im.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> pix(mask.v.size());
  for (size_t i = 0; i < pix.size(); ++i) pix[i] = mask.v[i] != 0.0 ? 255 : 0;
  if (!png_image_write_to_file(&g.im, path.c_str(), 0, pix.data(), 0, nullptr))
    throw IoError("cannot write mask: " + path + " (" + g.im.message + ")");
}

Image read_image(const std::string& path) {
  auto bytes = slurp(path);
  PngImageGuard g;
  if (!png_image_begin_read_from_memory(&g.im, bytes.data(), bytes.size()))
    throw FormatError("malformed header: " + path + " (" + g.im.message + ")");
  g.im.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> pix(PNG_IMAGE_SIZE(g.im));
  if (!png_image_finish_read(&g.im, nullptr, pix.data(), 0, nullptr))
    throw FormatError("malformed PNG data: " + path + " (" + g.im.message + ")");
  Image im;
  im.h = static_cast<int>(g.im.height);
  im.w = static_cast<int>(g.im.width);
  im.rgb.resize(pix.size());
  for (size_t i = 0; i < pix.size(); ++i) im.rgb[i] = pix[i] / 255.0;
  return im;
}

void write_image(const Image& image, const std::string& path) {
  PngImageGuard g;
  g.im.width = static_cast<png_uint_32>(image.w);
  g.im.height = static_cast<png_uint_32>(image.h);
  g.im.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> pix(image.rgb.size());
  for (size_t i = 0; i < pix.size(); ++i) {
    double v = std::round(image.rgb[i] * 255.0);
    pix[i] = static_cast<unsigned char>(v < 0 ? 0 : (v > 255 ? 255 : v));
  }
  if (!png_image_write_to_file(&g.im, path.c_str(), 0, pix.data(), 0, nullptr))
    throw IoError("cannot write image: " + path + " (" + g.im.message + ")");
}

}  // namespace xvseg
