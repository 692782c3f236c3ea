// SPDX-License-Identifier: Apache-2.0
//
// Binary little-endian PLY output for surfel clouds and triangle meshes, and a
// reader for the subset of PLY these writers produce.

#pragma once

#include "gsdf/extraction.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsdf {

class PlyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vertex properties x, y, z, nx, ny, nz as float, plus uchar red, green,
/// blue when every surfel has a color.
void write_ply(const std::filesystem::path& path, const SurfelCloud& cloud);
/// Vertex x, y, z (and rgb when colors are present); faces as
/// "list uchar int vertex_indices".
void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh);

struct PlyData {
  std::vector<std::string> vertex_properties;      // in file order
  std::vector<std::vector<double>> vertex_values;  // one row per vertex
  std::vector<std::vector<std::int64_t>> faces;

  /// Column of a vertex property; throws PlyError when absent.
  std::size_t column(const std::string& name) const;
};

/// Reads binary little-endian or ASCII PLY with scalar vertex properties and
/// an optional face list.
PlyData read_ply(const std::filesystem::path& path);

}  // namespace gsdf
