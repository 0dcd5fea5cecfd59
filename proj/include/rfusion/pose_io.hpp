#pragma once

#include <filesystem>

#include <json.hpp>

#include "rfusion/camera.hpp"
#include "rfusion/rigid_transform.hpp"

namespace rfusion {

/// Pose document: {"rotation": [w, x, y, z], "translation": [x, y, z],
/// "scale": s}. Missing keys default to identity. Throws
/// std::invalid_argument on malformed input or a non-invertible transform.
RigidTransformd transform_from_json(const nlohmann::json& j);
nlohmann::json transform_to_json(const RigidTransformd& t);
RigidTransformd load_transform(const std::filesystem::path& path);
void save_transform(const RigidTransformd& t, const std::filesystem::path& path);

/// Camera document: either {"position", "look_at", "up"} or a pose document,
/// plus optional "vertical_fov" (degrees), "near" and "far". The viewport
/// size comes from the caller.
CameraModel camera_from_json(const nlohmann::json& j, int width, int height);
CameraModel load_camera(const std::filesystem::path& path, int width, int height);

}  // namespace rfusion
