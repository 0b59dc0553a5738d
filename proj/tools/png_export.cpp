#include "png_export.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace qsmlab::cli {

void write_slice_png(const std::filesystem::path& path, const Volume3D& v, std::size_t z, double lo,
                     double hi) {
  const Dims& d = v.dims();
  if (z >= d.nz) throw ConfigError("slice index out of range");
  std::vector<png_byte> pixels(d.nx * d.ny);
  for (std::size_t x = 0; x < d.nx; ++x)
    for (std::size_t y = 0; y < d.ny; ++y) {
      const double t = std::clamp((v.at(x, y, z) - lo) / (hi - lo), 0.0, 1.0);
      pixels[x * d.ny + y] = static_cast<png_byte>(std::lround(255.0 * t));
    }

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(d.ny), static_cast<png_uint_32>(d.nx), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t x = 0; x < d.nx; ++x) png_write_row(png, pixels.data() + x * d.ny);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace qsmlab::cli
