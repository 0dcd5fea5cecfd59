#include "rfusion/pose_io.hpp"

#include <fstream>
#include <stdexcept>

namespace rfusion {
namespace {

Eigen::Vector3d vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-element array");
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

}  // namespace

RigidTransformd transform_from_json(const nlohmann::json& j) {
  try {
    Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
    if (j.contains("rotation")) {
      const auto& r = j.at("rotation");
      if (!r.is_array() || r.size() != 4) throw std::invalid_argument("rotation must be [w, x, y, z]");
      q = Eigen::Quaterniond(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(),
                             r.at(3).get<double>());
      if (!(q.norm() > 1e-12)) throw std::invalid_argument("rotation quaternion has zero norm");
      q.normalize();
    }
    const Eigen::Vector3d t = j.contains("translation") ? vec3(j.at("translation")) : Eigen::Vector3d::Zero();
    const RigidTransformd out(q, t, j.value("scale", 1.0));
    out.require_invertible();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed pose: ") + e.what());
  }
}

nlohmann::json transform_to_json(const RigidTransformd& t) {
  const auto& q = t.rotation();
  const auto& p = t.translation();
  return {{"rotation", {q.w(), q.x(), q.y(), q.z()}}, {"translation", {p.x(), p.y(), p.z()}},
          {"scale", t.uniform_scale()}};
}

RigidTransformd load_transform(const std::filesystem::path& path) { return transform_from_json(read_json(path)); }

void save_transform(const RigidTransformd& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write '" + path.string() + "'");
  out << transform_to_json(t).dump(2) << "\n";
}

CameraModel camera_from_json(const nlohmann::json& j, int width, int height) {
  try {
    RigidTransformd pose;
    if (j.contains("position")) {
      const Eigen::Vector3d up = j.contains("up") ? vec3(j.at("up")) : Eigen::Vector3d::UnitY();
      const Eigen::Vector3d eye = vec3(j.at("position")), target = vec3(j.at("look_at"));
      if ((eye - target).norm() < 1e-12) throw std::invalid_argument("camera position equals look_at");
      pose = look_at<double>(eye, target, up);
    } else {
      pose = transform_from_json(j);
    }
    CameraModel cam = CameraModel::Make(pose, j.value("vertical_fov", 60.0), width, height, j.value("near", 0.01),
                                        j.value("far", 100.0));
    cam.validate();
    return cam;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed camera: ") + e.what());
  }
}

CameraModel load_camera(const std::filesystem::path& path, int width, int height) {
  return camera_from_json(read_json(path), width, height);
}

}  // namespace rfusion
