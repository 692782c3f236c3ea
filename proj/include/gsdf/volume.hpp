// SPDX-License-Identifier: Apache-2.0
//
// Sparse Gradient-SDF volume: one hash map entry per voxel, each voxel holding
// a signed distance, an accumulated weight and an accumulated (unnormalized)
// SDF gradient. Distances are negative in free space and positive inside
// objects, so the stored gradient points into the surface.

#pragma once

#include "gsdf/geometry.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <unordered_map>

namespace gsdf {

/// Gradient norms at or below this are treated as degenerate.
inline constexpr double kGradientEpsilon = 1e-6;

/// Integer grid coordinate; the voxel center is voxel_size * (x, y, z).
struct VoxelKey {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  auto operator<=>(const VoxelKey&) const = default;

  VoxelKey operator+(const VoxelKey& o) const { return {x + o.x, y + o.y, z + o.z}; }
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    return (static_cast<std::size_t>(static_cast<std::uint32_t>(k.x)) * 73856093u) ^
           (static_cast<std::size_t>(static_cast<std::uint32_t>(k.y)) * 19349669u) ^
           (static_cast<std::size_t>(static_cast<std::uint32_t>(k.z)) * 83492791u);
  }
};

struct GradVoxel {
  float dist = 0.0f;
  float weight = 0.0f;
  Eigen::Vector3f grad = Eigen::Vector3f::Zero();

  bool operator==(const GradVoxel&) const = default;
};

/// Nearest grid point, rounding halves away from zero.
VoxelKey world_to_key(const Vec3& p, double voxel_size);
Vec3 key_to_world(const VoxelKey& key, double voxel_size);

/// g / |g|, or nullopt when |g| <= kGradientEpsilon.
std::optional<Vec3> normalized_gradient(const GradVoxel& voxel);

class GradientSdfVolume {
 public:
  using Map = std::unordered_map<VoxelKey, GradVoxel, VoxelKeyHash>;

  GradientSdfVolume(double voxel_size, double truncation);

  double voxel_size() const { return voxel_size_; }
  double truncation() const { return truncation_; }

  /// Counted lookup (see voxel_reads_on_this_thread).
  const GradVoxel* find(const VoxelKey& key) const;
  GradVoxel* find_mutable(const VoxelKey& key);

  /// Inserts a zero voxel if absent. The caller must give it a positive weight
  /// before anyone else reads the volume.
  GradVoxel& get_or_insert(const VoxelKey& key) { return voxels_[key]; }
  void erase(const VoxelKey& key) { voxels_.erase(key); }

  Vec3 center(const VoxelKey& key) const { return key_to_world(key, voxel_size_); }

  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }

  /// Uncounted iteration over all stored voxels.
  const Map& voxels() const { return voxels_; }
  Map& voxels() { return voxels_; }

  bool operator==(const GradientSdfVolume& other) const;

 private:
  double voxel_size_;
  double truncation_;
  Map voxels_;
};

/// Number of GradientSdfVolume::find calls made by the calling thread so far.
std::uint64_t voxel_reads_on_this_thread();

/// Runs fn and returns how many voxel reads it performed on this thread.
template <typename Fn>
std::uint64_t count_voxel_reads(Fn&& fn) {
  const std::uint64_t before = voxel_reads_on_this_thread();
  std::forward<Fn>(fn)();
  return voxel_reads_on_this_thread() - before;
}

enum class QueryStatus {
  kOk,
  kNoEstimate,              // nearest voxel missing or unobserved
  kDegenerateGradient,      // stored gradient too short to normalize
  kIncompleteNeighborhood,  // a trilinear corner is missing
};

struct DistanceQuery {
  QueryStatus status = QueryStatus::kNoEstimate;
  double distance = 0.0;
  Vec3 gradient = Vec3::Zero();

  bool ok() const { return status == QueryStatus::kOk; }
};

/// First-order expansion around the nearest voxel j:
///   d(p) = psi_j + (p - v_j)^T g_j,   grad d(p) = g_j
/// using exactly one voxel read.
DistanceQuery taylor_query(const GradientSdfVolume& vol, const Vec3& p);

/// Trilinear interpolation of the 8 enclosing voxels (8 reads, no gradient).
DistanceQuery trilinear_distance(const GradientSdfVolume& vol, const Vec3& p);

/// Trilinear distance plus a gradient from central differences of trilinear
/// values at +-voxel_size along each axis (32 distinct voxel reads).
DistanceQuery trilinear_query(const GradientSdfVolume& vol, const Vec3& p);

/// Closest surface point v_j - psi_j g_j; nullopt for missing voxels or
/// degenerate gradients.
std::optional<Vec3> closest_surface_point(const GradientSdfVolume& vol, const VoxelKey& key);

/// Binary snapshot: "GSDF1", voxel size and truncation as float64, then per
/// voxel 3 x int32 key, float32 dist, float32 weight, 3 x float32 grad. All
/// little-endian. Voxels are written in key order so output is deterministic.
void write_snapshot(const GradientSdfVolume& vol, std::ostream& out);
GradientSdfVolume read_snapshot(std::istream& in);
void save_snapshot(const GradientSdfVolume& vol, const std::filesystem::path& path);
GradientSdfVolume load_snapshot(const std::filesystem::path& path);

}  // namespace gsdf
