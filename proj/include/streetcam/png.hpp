#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace streetcam::png {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

std::string encode_gray(const GrayImage& img);
/// Decodes any PNG, converting to 8-bit grayscale. Throws DataError.
GrayImage decode_gray(std::string_view bytes);

}  // namespace streetcam::png
