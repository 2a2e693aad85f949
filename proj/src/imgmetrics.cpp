#include "qcroute/imgmetrics.hpp"

#include <cctype>
#include <cmath>

#include "qcroute/error.hpp"

namespace qcroute {

Image make_image(std::size_t width, std::size_t height, std::size_t channels, double fill) {
  Image img{width, height, channels, {}};
  img.data.assign(width * height * channels, fill);
  validate_image(img);
  return img;
}

void validate_image(const Image& img) {
  if (img.width < 1 || img.height < 1) throw ValidationError("image: width and height must be >= 1");
  if (img.channels != 1 && img.channels != 3)
    throw ValidationError("image: channels must be 1 or 3");
  if (img.data.size() != img.width * img.height * img.channels)
    throw ValidationError("image: data size does not match dimensions");
  for (double v : img.data)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("image: intensity outside [0,1]");
}

Kernel gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian_kernel: sigma must be > 0");
  const long r = static_cast<long>(std::ceil(3.0 * sigma));
  const std::size_t side = static_cast<std::size_t>(2 * r + 1);
  Kernel k{static_cast<std::size_t>(r), std::vector<double>(side * side)};
  double sum = 0.0;
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx) {
      const double w = std::exp(-(static_cast<double>(dx * dx + dy * dy)) / (2.0 * sigma * sigma));
      k.weights[static_cast<std::size_t>(dy + r) * side + static_cast<std::size_t>(dx + r)] = w;
      sum += w;
    }
  for (double& w : k.weights) w /= sum;
  return k;
}

namespace {

// reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long last = static_cast<long>(n) - 1;
  while (i < 0 || i > last) {
    if (i < 0) i = -i;
    if (i > last) i = 2 * last - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

Image convolve(const Image& img, const Kernel& kernel) {
  validate_image(img);
  Image out = img;
  const long r = static_cast<long>(kernel.radius);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        // Accumulate deviations from the center pixel: equivalent to the
        // weighted sum for a unit-sum kernel, and exactly fixes constant
        // images regardless of rounding in the kernel normalization.
        const double center = img.at(x, y, c);
        double acc = 0.0;
        for (long dy = -r; dy <= r; ++dy) {
          const std::size_t sy = reflect_index(static_cast<long>(y) + dy, img.height);
          for (long dx = -r; dx <= r; ++dx) {
            const std::size_t sx = reflect_index(static_cast<long>(x) + dx, img.width);
            acc += kernel.at(dx, dy) * (img.at(sx, sy, c) - center);
          }
        }
        out.at(x, y, c) = center + acc;
      }
    }
  }
  return out;
}

double sharpness(const Image& img) {
  validate_image(img);
  const Image blurred = convolve(img, gaussian_kernel(1.0));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double diff = img.data[i] - blurred.data[i];
    num += diff * diff;
    den += img.data[i] * img.data[i];
  }
  if (den == 0.0) return 0.0;
  return num / den;
}

namespace {

std::size_t parse_pnm_uint(std::string_view bytes, std::size_t& pos, const char* what) {
  while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
    throw ValidationError(std::string("pnm: expected ") + what);
  std::size_t v = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
    ++pos;
  }
  return v;
}

}  // namespace

Image read_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ValidationError("pnm: expected P5 or P6 magic");
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const std::size_t width = parse_pnm_uint(bytes, pos, "width");
  const std::size_t height = parse_pnm_uint(bytes, pos, "height");
  const std::size_t maxval = parse_pnm_uint(bytes, pos, "maxval");
  if (maxval != 255) throw ValidationError("pnm: maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ValidationError("pnm: expected single whitespace after maxval");
  ++pos;  // exactly one whitespace byte, then raw data
  const std::size_t expected = width * height * channels;
  if (bytes.size() - pos < expected) throw ValidationError("pnm: truncated pixel data");
  if (bytes.size() - pos > expected) throw ValidationError("pnm: trailing bytes after pixel data");
  Image img{width, height, channels, {}};
  img.data.reserve(expected);
  for (std::size_t i = 0; i < expected; ++i)
    img.data.push_back(static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / 255.0);
  validate_image(img);
  return img;
}

std::string write_pnm(const Image& img) {
  validate_image(img);
  std::string out = img.channels == 1 ? "P5" : "P6";
  out += ' ' + std::to_string(img.width) + ' ' + std::to_string(img.height) + " 255\n";
  out.reserve(out.size() + img.data.size());
  for (double v : img.data)
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  return out;
}

}  // namespace qcroute
