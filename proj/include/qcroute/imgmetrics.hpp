#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace qcroute {

// Raster image with intensities in [0,1], row-major, channel-interleaved.
// 8-bit Netpbm inputs are divided by 255 on load.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 or 3
  std::vector<double> data;  // width * height * channels

  double at(std::size_t x, std::size_t y, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
  double& at(std::size_t x, std::size_t y, std::size_t c) {
    return data[(y * width + x) * channels + c];
  }
};

Image make_image(std::size_t width, std::size_t height, std::size_t channels, double fill = 0.0);
void validate_image(const Image& img);

// Square, flip-symmetric, nonnegative kernel with weights summing to 1.
struct Kernel {
  std::size_t radius = 0;
  std::vector<double> weights;  // (2r+1) x (2r+1), row-major

  double at(long dx, long dy) const {
    const std::size_t side = 2 * radius + 1;
    return weights[static_cast<std::size_t>(dy + static_cast<long>(radius)) * side +
                   static_cast<std::size_t>(dx + static_cast<long>(radius))];
  }
};

// Truncated at radius ceil(3*sigma) and renormalized to sum exactly 1.
Kernel gaussian_kernel(double sigma);

// Per-channel 2-D correlation with reflect-101 boundary padding (the edge
// pixel is not duplicated). Output dimensions equal the input's.
Image convolve(const Image& img, const Kernel& kernel);

// High-pass energy ratio: sum over pixels and channels of (i - i*G)^2
// divided by the sum of i^2, with G the sigma=1 Gaussian. An all-black
// image scores 0 by convention.
double sharpness(const Image& img);

// Binary Netpbm: P5 (grayscale) or P6 (RGB), maxval 255, a single whitespace
// byte after the maxval, then raw bytes.
Image read_pnm(std::string_view bytes);
std::string write_pnm(const Image& img);

}  // namespace qcroute
