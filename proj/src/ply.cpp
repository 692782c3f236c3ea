// SPDX-License-Identifier: Apache-2.0

#include "gsdf/ply.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gsdf {

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(bytes, sizeof(T));
}

std::uint8_t to_byte(double c) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PlyError("cannot open " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw PlyError("write failed: " + path.string());
}

}  // namespace

void write_ply(const std::filesystem::path& path, const SurfelCloud& cloud) {
  const bool colored = !cloud.empty() && std::all_of(cloud.begin(), cloud.end(),
                                                     [](const Surfel& s) { return s.color.has_value(); });
  std::ofstream out = open_for_write(path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property float nx\nproperty float ny\nproperty float nz\n";
  if (colored) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (const Surfel& s : cloud) {
    for (int i = 0; i < 3; ++i) put(out, static_cast<float>(s.position[i]));
    for (int i = 0; i < 3; ++i) put(out, static_cast<float>(s.normal[i]));
    if (colored) {
      for (int i = 0; i < 3; ++i) put(out, to_byte((*s.color)[i]));
    }
  }
  finish(out, path);
}

void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh) {
  const bool colored = !mesh.colors.empty();
  if (colored && mesh.colors.size() != mesh.vertices.size()) {
    throw PlyError("mesh colors must match the vertex count");
  }
  std::ofstream out = open_for_write(path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (colored) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.triangles.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    for (int i = 0; i < 3; ++i) put(out, static_cast<float>(mesh.vertices[v][i]));
    if (colored) {
      for (int i = 0; i < 3; ++i) put(out, to_byte(mesh.colors[v][i]));
    }
  }
  for (const auto& t : mesh.triangles) {
    put(out, static_cast<std::uint8_t>(3));
    for (std::uint32_t idx : t) put(out, static_cast<std::int32_t>(idx));
  }
  finish(out, path);
}

std::size_t PlyData::column(const std::string& name) const {
  const auto it = std::find(vertex_properties.begin(), vertex_properties.end(), name);
  if (it == vertex_properties.end()) throw PlyError("no vertex property " + name);
  return static_cast<std::size_t>(it - vertex_properties.begin());
}

namespace {

enum class Scalar { kI8, kU8, kI16, kU16, kI32, kU32, kF32, kF64 };

Scalar parse_scalar(const std::string& name) {
  if (name == "char" || name == "int8") return Scalar::kI8;
  if (name == "uchar" || name == "uint8") return Scalar::kU8;
  if (name == "short" || name == "int16") return Scalar::kI16;
  if (name == "ushort" || name == "uint16") return Scalar::kU16;
  if (name == "int" || name == "int32") return Scalar::kI32;
  if (name == "uint" || name == "uint32") return Scalar::kU32;
  if (name == "float" || name == "float32") return Scalar::kF32;
  if (name == "double" || name == "float64") return Scalar::kF64;
  throw PlyError("unknown PLY type " + name);
}

template <typename T>
T get(std::istream& in) {
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) throw PlyError("truncated PLY body");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

double read_scalar(std::istream& in, Scalar type, bool binary) {
  if (!binary) {
    double v;
    if (!(in >> v)) throw PlyError("truncated PLY body");
    return v;
  }
  switch (type) {
    case Scalar::kI8: return get<std::int8_t>(in);
    case Scalar::kU8: return get<std::uint8_t>(in);
    case Scalar::kI16: return get<std::int16_t>(in);
    case Scalar::kU16: return get<std::uint16_t>(in);
    case Scalar::kI32: return get<std::int32_t>(in);
    case Scalar::kU32: return get<std::uint32_t>(in);
    case Scalar::kF32: return get<float>(in);
    case Scalar::kF64: return get<double>(in);
  }
  return 0.0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::kF32;
  bool is_list = false;
  Scalar count_type = Scalar::kU8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

}  // namespace

PlyData read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PlyError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw PlyError("not a PLY file: " + path.string());

  bool binary = false;
  std::vector<Element> elements;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        throw PlyError("unsupported PLY format " + fmt);
      }
    } else if (word == "element") {
      Element e;
      ss >> e.name >> e.count;
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw PlyError("property before element");
      Property p;
      std::string type;
      ss >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ss >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = parse_scalar(count_type);
        p.type = parse_scalar(item_type);
      } else {
        p.type = parse_scalar(type);
        ss >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (word == "end_header") {
      break;
    }
  }

  PlyData data;
  for (const Element& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    if (is_vertex) {
      for (const Property& p : e.properties) data.vertex_properties.push_back(p.name);
    }
    for (std::size_t i = 0; i < e.count; ++i) {
      std::vector<double> row;
      for (const Property& p : e.properties) {
        if (!p.is_list) {
          row.push_back(read_scalar(in, p.type, binary));
          continue;
        }
        const auto n = static_cast<std::size_t>(read_scalar(in, p.count_type, binary));
        std::vector<std::int64_t> items(n);
        for (auto& item : items) item = static_cast<std::int64_t>(read_scalar(in, p.type, binary));
        if (is_face) data.faces.push_back(std::move(items));
      }
      if (is_vertex) data.vertex_values.push_back(std::move(row));
    }
  }
  return data;
}

}  // namespace gsdf
