#include "rfusion/ply_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace rfusion {
namespace {

static_assert(std::endian::native == std::endian::little, "PLY and cache readers assume a little-endian host");

enum class PlyType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

std::optional<PlyType> parse_type(const std::string& name) {
  static const std::map<std::string, PlyType> kTypes = {
      {"char", PlyType::kInt8},     {"int8", PlyType::kInt8},       {"uchar", PlyType::kUint8},
      {"uint8", PlyType::kUint8},   {"short", PlyType::kInt16},     {"int16", PlyType::kInt16},
      {"ushort", PlyType::kUint16}, {"uint16", PlyType::kUint16},   {"int", PlyType::kInt32},
      {"int32", PlyType::kInt32},   {"uint", PlyType::kUint32},     {"uint32", PlyType::kUint32},
      {"float", PlyType::kFloat32}, {"float32", PlyType::kFloat32}, {"double", PlyType::kFloat64},
      {"float64", PlyType::kFloat64}};
  const auto it = kTypes.find(name);
  if (it == kTypes.end()) return std::nullopt;
  return it->second;
}

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUint8:
      return 1;
    case PlyType::kInt16:
    case PlyType::kUint16:
      return 2;
    case PlyType::kInt32:
    case PlyType::kUint32:
    case PlyType::kFloat32:
      return 4;
    case PlyType::kFloat64:
      return 8;
  }
  return 0;
}

template <typename T>
T load_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double read_value(const std::uint8_t* p, PlyType t) {
  switch (t) {
    case PlyType::kInt8:
      return load_le<std::int8_t>(p);
    case PlyType::kUint8:
      return load_le<std::uint8_t>(p);
    case PlyType::kInt16:
      return load_le<std::int16_t>(p);
    case PlyType::kUint16:
      return load_le<std::uint16_t>(p);
    case PlyType::kInt32:
      return load_le<std::int32_t>(p);
    case PlyType::kUint32:
      return load_le<std::uint32_t>(p);
    case PlyType::kFloat32:
      return load_le<float>(p);
    case PlyType::kFloat64:
      return load_le<double>(p);
  }
  return 0.0;
}

struct Property {
  std::string name;
  PlyType type;
  std::size_t offset;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
  std::size_t stride = 0;
};

std::vector<Element> parse_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") {
    throw PlyError("malformed PLY header: missing 'ply' magic");
  }
  bool have_format = false;
  std::vector<Element> elements;
  while (true) {
    if (!std::getline(in, line)) {
      throw PlyError("malformed PLY header: missing end_header");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "end_header") break;
    if (keyword == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt != "binary_little_endian") {
        throw PlyError("unsupported PLY format '" + fmt + "' (expected binary_little_endian)");
      }
      have_format = true;
    } else if (keyword == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (e.name.empty() || count < 0) {
        throw PlyError("malformed PLY header: bad element line '" + line + "'");
      }
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (elements.empty()) {
        throw PlyError("malformed PLY header: property before any element");
      }
      std::string type_name, name;
      ls >> type_name;
      if (type_name == "list") {
        throw PlyError("malformed PLY header: list properties are not supported in '" + elements.back().name + "'");
      }
      ls >> name;
      const auto type = parse_type(type_name);
      if (!type || name.empty()) {
        throw PlyError("malformed PLY header: bad property line '" + line + "'");
      }
      auto& e = elements.back();
      e.properties.push_back({name, *type, e.stride});
      e.stride += type_size(*type);
    } else {
      throw PlyError("malformed PLY header: unknown keyword '" + keyword + "'");
    }
  }
  if (!have_format) {
    throw PlyError("malformed PLY header: missing format line");
  }
  return elements;
}

std::size_t require_field(const std::map<std::string, const Property*>& by_name, const std::string& name,
                          std::vector<const Property*>& out) {
  const auto it = by_name.find(name);
  if (it == by_name.end()) {
    throw PlyError("missing PLY field '" + name + "'");
  }
  out.push_back(it->second);
  return out.size() - 1;
}

constexpr std::array<char, 4> kCacheMagic = {'R', 'F', 'S', 'C'};

}  // namespace

SplatScene read_ply(std::istream& in) {
  const std::vector<Element> elements = parse_header(in);
  std::size_t skip_bytes = 0;
  const Element* vertex = nullptr;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      vertex = &e;
      break;
    }
    skip_bytes += e.count * e.stride;
  }
  if (vertex == nullptr) {
    throw PlyError("malformed PLY header: no vertex element");
  }
  if (vertex->count == 0) {
    throw PlyError("PLY file contains zero splats");
  }
  in.ignore(static_cast<std::streamsize>(skip_bytes));

  std::map<std::string, const Property*> by_name;
  for (const auto& p : vertex->properties) by_name[p.name] = &p;

  std::vector<const Property*> fields;
  for (const char* name : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
                           "rot_0", "rot_1", "rot_2", "rot_3"}) {
    require_field(by_name, name, fields);
  }
  int rest_count = 0;
  while (by_name.count("f_rest_" + std::to_string(rest_count)) != 0) ++rest_count;
  if (rest_count % 3 != 0 || sh_degree_for_count(rest_count / 3 + 1) < 0) {
    throw PlyError("unsupported f_rest count " + std::to_string(rest_count) + " (expected 0, 9, 24 or 45)");
  }
  const int rest_per_channel = rest_count / 3;
  const int n_coeffs = rest_per_channel + 1;
  for (int i = 0; i < rest_count; ++i) {
    require_field(by_name, "f_rest_" + std::to_string(i), fields);
  }

  std::vector<Splat> splats;
  splats.reserve(vertex->count);
  std::vector<std::uint8_t> row(vertex->stride);
  std::vector<double> v(fields.size());
  for (std::size_t i = 0; i < vertex->count; ++i) {
    if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()))) {
      throw PlyError("PLY body truncated at vertex " + std::to_string(i));
    }
    for (std::size_t f = 0; f < fields.size(); ++f) {
      v[f] = read_value(row.data() + fields[f]->offset, fields[f]->type);
    }
    Splat s;
    s.position = Eigen::Vector3d(v[0], v[1], v[2]).cast<float>();
    s.sh = ShCoeffs<float>::Zero(n_coeffs, 3);
    s.sh.row(0) = Eigen::Vector3d(v[3], v[4], v[5]).cast<float>().transpose();
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < rest_per_channel; ++k) {
        s.sh(k + 1, c) = static_cast<float>(v[14 + static_cast<std::size_t>(c * rest_per_channel + k)]);
      }
    }
    s.opacity = static_cast<float>(sigmoid(v[6]));
    s.scale = Eigen::Vector3d(std::exp(v[7]), std::exp(v[8]), std::exp(v[9])).cast<float>();
    const Eigen::Quaterniond q(v[10], v[11], v[12], v[13]);
    if (!(q.norm() >= 1e-8) || !std::isfinite(q.norm())) {
      throw PlyError("degenerate rotation quaternion at vertex " + std::to_string(i));
    }
    s.rotation = q.normalized().cast<float>();
    s.rotation.normalize();
    splats.push_back(std::move(s));
  }
  try {
    return SplatScene(std::move(splats), Convention::kColmap);
  } catch (const SplatSceneError& e) {
    throw PlyError(std::string("invalid splat data: ") + e.what());
  }
}

SplatScene load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw PlyError("cannot open PLY file '" + path.string() + "'");
  }
  return read_ply(in);
}

void write_ply(const SplatScene& scene, std::ostream& out) {
  const int n_coeffs = sh_coeff_count(scene.sh_degree());
  const int rest_per_channel = n_coeffs - 1;
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << scene.size() << "\n";
  for (const char* name : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"}) out << "property float " << name << "\n";
  for (int i = 0; i < 3 * rest_per_channel; ++i) out << "property float f_rest_" << i << "\n";
  for (const char* name : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
    out << "property float " << name << "\n";
  }
  out << "end_header\n";
  std::vector<float> row;
  for (const auto& s : scene.splats()) {
    row.clear();
    row.insert(row.end(), {s.position.x(), s.position.y(), s.position.z(), s.sh(0, 0), s.sh(0, 1), s.sh(0, 2)});
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < rest_per_channel; ++k) row.push_back(s.sh(k + 1, c));
    }
    const double op = std::clamp(static_cast<double>(s.opacity), 1e-7, 1.0 - 1e-7);
    row.push_back(static_cast<float>(logit(op)));
    for (int a = 0; a < 3; ++a) row.push_back(std::log(s.scale[a]));
    row.insert(row.end(), {s.rotation.w(), s.rotation.x(), s.rotation.y(), s.rotation.z()});
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

void save_ply(const SplatScene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw PlyError("cannot write PLY file '" + path.string() + "'");
  }
  write_ply(scene, out);
}

// Cache layout (little-endian):
//   "RFSC" u32 version, u8 convention, u8 sh_degree, u16 reserved, u64 count,
//   f64 world_from_model[8] = (qw qx qy qz tx ty tz scale),
//   then per splat f32: position[3] rotation[4](wxyz) scale[3] opacity sh[(d+1)^2 * 3]
void save_scene_cache(const SplatScene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw SplatSceneError("cannot write scene cache '" + path.string() + "'");
  }
  auto put = [&out](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write(kCacheMagic.data(), kCacheMagic.size());
  put(kSceneCacheVersion);
  put(static_cast<std::uint8_t>(scene.convention() == Convention::kColmap ? 0 : 1));
  put(static_cast<std::uint8_t>(scene.sh_degree()));
  put(std::uint16_t{0});
  put(static_cast<std::uint64_t>(scene.size()));
  const auto& t = scene.world_from_model();
  for (double d : {t.rotation().w(), t.rotation().x(), t.rotation().y(), t.rotation().z(), t.translation().x(),
                   t.translation().y(), t.translation().z(), t.uniform_scale()}) {
    put(d);
  }
  for (const auto& s : scene.splats()) {
    for (float f : {s.position.x(), s.position.y(), s.position.z(), s.rotation.w(), s.rotation.x(), s.rotation.y(),
                    s.rotation.z(), s.scale.x(), s.scale.y(), s.scale.z(), s.opacity}) {
      put(f);
    }
    out.write(reinterpret_cast<const char*>(s.sh.data()), static_cast<std::streamsize>(s.sh.size() * sizeof(float)));
  }
}

SplatScene load_scene_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw SplatSceneError("cannot open scene cache '" + path.string() + "'");
  }
  auto get = [&in](auto& v) {
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) throw SplatSceneError("scene cache truncated");
  };
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (magic != kCacheMagic) {
    throw SplatSceneError("not a scene cache (bad magic)");
  }
  std::uint32_t version = 0;
  get(version);
  if (version != kSceneCacheVersion) {
    throw SplatSceneError("unsupported scene cache version " + std::to_string(version));
  }
  std::uint8_t convention = 0, degree = 0;
  std::uint16_t reserved = 0;
  std::uint64_t count = 0;
  get(convention);
  get(degree);
  get(reserved);
  get(count);
  if (degree > kMaxShDegree) {
    throw SplatSceneError("scene cache SH degree out of range");
  }
  std::array<double, 8> tf{};
  for (auto& d : tf) get(d);
  const RigidTransformd world_from_model(Eigen::Quaterniond(tf[0], tf[1], tf[2], tf[3]),
                                         Eigen::Vector3d(tf[4], tf[5], tf[6]), tf[7]);
  const int n_coeffs = sh_coeff_count(degree);
  std::vector<Splat> splats(count);
  for (auto& s : splats) {
    std::array<float, 11> f{};
    for (auto& x : f) get(x);
    s.position = Eigen::Vector3f(f[0], f[1], f[2]);
    s.rotation = Eigen::Quaternionf(f[3], f[4], f[5], f[6]);
    s.scale = Eigen::Vector3f(f[7], f[8], f[9]);
    s.opacity = f[10];
    s.sh.resize(n_coeffs, 3);
    if (!in.read(reinterpret_cast<char*>(s.sh.data()), static_cast<std::streamsize>(s.sh.size() * sizeof(float)))) {
      throw SplatSceneError("scene cache truncated");
    }
  }
  return SplatScene(std::move(splats), convention == 0 ? Convention::kColmap : Convention::kEngine, world_from_model);
}

SplatScene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw SplatSceneError("cannot open scene '" + path.string() + "'");
  }
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  in.close();
  if (magic == kCacheMagic) {
    return load_scene_cache(path);
  }
  return load_ply(path);
}

}  // namespace rfusion
