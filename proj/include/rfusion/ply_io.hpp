#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

#include "rfusion/splat_scene.hpp"

namespace rfusion {

class PlyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads a binary little-endian 3DGS export.
///
/// Required vertex properties: x y z, f_dc_0..2, opacity, scale_0..2,
/// rot_0..3 (w first). f_rest_* is optional; its count selects the SH degree
/// (0, 9, 24 or 45 entries) and is stored channel-major as in the reference
/// exporter. Other properties are skipped. Raw values are activated: opacity
/// through a sigmoid, scale through exp, rotation normalized.
///
/// Throws PlyError naming the missing field, for malformed headers, for zero
/// vertices and for degenerate quaternions (norm < 1e-8).
SplatScene load_ply(const std::filesystem::path& path);
SplatScene read_ply(std::istream& in);

/// Writes the scene's model-space splats in the same layout, de-activating
/// opacity (logit) and scale (log). The registration is not stored.
void save_ply(const SplatScene& scene, const std::filesystem::path& path);
void write_ply(const SplatScene& scene, std::ostream& out);

/// Versioned binary cache holding activated splats, convention and
/// registration. Layout documented in docs/formats.md.
inline constexpr std::uint32_t kSceneCacheVersion = 1;
void save_scene_cache(const SplatScene& scene, const std::filesystem::path& path);
SplatScene load_scene_cache(const std::filesystem::path& path);

/// Loads either a PLY or a scene cache, by magic bytes.
SplatScene load_scene(const std::filesystem::path& path);

}  // namespace rfusion
