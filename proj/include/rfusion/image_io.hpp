#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rfusion/renderer.hpp"

namespace rfusion {

std::uint8_t linear_to_srgb8(float linear);

/// Composites the premultiplied target over `background` (linear RGB) and
/// encodes 8-bit sRGB RGB PNG bytes.
std::vector<std::uint8_t> encode_png(const RenderTarget& target,
                                     const Eigen::Vector3f& background = Eigen::Vector3f::Zero());

void write_png(const RenderTarget& target, const std::filesystem::path& path,
               const Eigen::Vector3f& background = Eigen::Vector3f::Zero());

}  // namespace rfusion
