#include "cdnas/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "cdnas/errors.hpp"

namespace cdnas {

float quantize8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return std::round(c * 255.0f) / 255.0f;
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("write_ppm expects 3 x H x W");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "P6\n" << w << " " << h << "\n255\n";
  std::string row(w * 3, '\0');
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image.data()[(c * h + y) * w + x], 0.0f, 1.0f);
        row[x * 3 + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
      }
    os.write(row.data(), long(row.size()));
  }
  if (!os) throw IoError("failed to write " + path.string());
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string token(std::istream& is) {
  std::string t;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {}
      continue;
    }
    if (std::isspace(ch)) {
      if (!t.empty()) break;
      continue;
    }
    t.push_back(char(ch));
  }
  return t;
}

}  // namespace

Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  if (token(is) != "P6") throw IoError(path.string() + ": not a binary PPM");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token(is));
    h = std::stoul(token(is));
    maxval = std::stoul(token(is));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PPM header");
  }
  if (maxval != 255 || w == 0 || h == 0) throw IoError(path.string() + ": unsupported PPM");
  std::string buf(w * h * 3, '\0');
  if (!is.read(buf.data(), long(buf.size()))) throw IoError(path.string() + ": truncated PPM");
  Tensor<float> out({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.data()[(c * h + y) * w + x] =
            float(static_cast<unsigned char>(buf[(y * w + x) * 3 + c])) / 255.0f;
  return out;
}

Tensor<float> normalize_range(const Tensor<float>& image) {
  Tensor<float> out(image.shape());
  if (image.numel() == 0) return out;
  const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
  const float a = *lo, span = *hi - *lo;
  if (span <= 0) return out;
  for (std::size_t i = 0; i < image.numel(); ++i) out.data()[i] = (image.data()[i] - a) / span;
  return out;
}

}  // namespace cdnas
