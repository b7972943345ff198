#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "udnf/common.hpp"

namespace udnf {

struct Image8 {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // h*w*3 row-major
};

// Format picked from the extension: .png or .ppm (binary P6).
void write_image(const std::string& path, const Image8& img);
Image8 read_image(const std::string& path);

// [0,1] float <-> 8-bit with round-to-nearest and clamping.
Image8 quantize(const std::vector<float>& rgb, int width, int height);
std::vector<float> dequantize(const Image8& img);

}  // namespace udnf
