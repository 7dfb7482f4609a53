// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikedrive/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>

#include "spikedrive/errors.hpp"

namespace spikedrive {

namespace fs = std::filesystem;

Tensor read_image(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open image " + file.string());
  std::string header;
  if (!std::getline(in, header)) throw FormatError("image " + file.string() + " has no header line");
  std::istringstream hs(header);
  long long c = 0, h = 0, w = 0;
  std::string rest;
  if (!(hs >> c >> h >> w) || (hs >> rest) || c < 1 || h < 1 || w < 1) {
    throw FormatError("image " + file.string() + " header must be 'C H W' with positive extents");
  }
  const std::string body{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const std::size_t count = static_cast<std::size_t>(c * h * w);
  if (body.size() != 4 * count) {
    throw FormatError("image " + file.string() + " holds " + std::to_string(body.size()) + " bytes, header implies " +
                      std::to_string(4 * count));
  }
  Tensor img(Shape{static_cast<std::size_t>(c), static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(body[4 * i + b])) << (8 * b);
    const float v = std::bit_cast<float>(bits);
    if (!std::isfinite(v)) throw FormatError("image " + file.string() + " has a non-finite pixel");
    img[i] = v;
  }
  return img;
}

void write_image(const Tensor& image, const fs::path& file) {
  if (image.rank() != 3) throw ShapeError("write_image expects [C, H, W], got " + shape_to_string(image.shape()));
  std::string out = std::to_string(image.dim(0)) + " " + std::to_string(image.dim(1)) + " " +
                    std::to_string(image.dim(2)) + "\n";
  for (double v : image.data()) {
    if (!std::isfinite(v) || std::abs(v) > std::numeric_limits<float>::max()) {
      throw NumericError("image pixel not representable as float32");
    }
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
  }
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write image " + file.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing image " + file.string());
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("image directory " + dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".chw") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace spikedrive
