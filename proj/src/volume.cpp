// SPDX-License-Identifier: Apache-2.0

#include "gsdf/volume.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace gsdf {

namespace {

thread_local std::uint64_t t_voxel_reads = 0;

bool observed(const GradVoxel* v) { return v != nullptr && v->weight > 0.0f; }

}  // namespace

VoxelKey world_to_key(const Vec3& p, double voxel_size) {
  // std::round rounds halfway cases away from zero.
  return {static_cast<std::int32_t>(std::round(p.x() / voxel_size)),
          static_cast<std::int32_t>(std::round(p.y() / voxel_size)),
          static_cast<std::int32_t>(std::round(p.z() / voxel_size))};
}

Vec3 key_to_world(const VoxelKey& key, double voxel_size) {
  return voxel_size * Vec3(key.x, key.y, key.z);
}

std::optional<Vec3> normalized_gradient(const GradVoxel& voxel) {
  const Vec3 g = voxel.grad.cast<double>();
  const double n = g.norm();
  if (!(n > kGradientEpsilon)) return std::nullopt;
  return g / n;
}

GradientSdfVolume::GradientSdfVolume(double voxel_size, double truncation)
    : voxel_size_(voxel_size), truncation_(truncation) {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("voxel size must be positive");
  if (!(truncation >= voxel_size)) {
    throw std::invalid_argument("truncation must be at least one voxel");
  }
}

const GradVoxel* GradientSdfVolume::find(const VoxelKey& key) const {
  ++t_voxel_reads;
  const auto it = voxels_.find(key);
  return it == voxels_.end() ? nullptr : &it->second;
}

GradVoxel* GradientSdfVolume::find_mutable(const VoxelKey& key) {
  const auto it = voxels_.find(key);
  return it == voxels_.end() ? nullptr : &it->second;
}

bool GradientSdfVolume::operator==(const GradientSdfVolume& other) const {
  return voxel_size_ == other.voxel_size_ && truncation_ == other.truncation_ &&
         voxels_ == other.voxels_;
}

std::uint64_t voxel_reads_on_this_thread() { return t_voxel_reads; }

DistanceQuery taylor_query(const GradientSdfVolume& vol, const Vec3& p) {
  DistanceQuery q;
  const VoxelKey key = world_to_key(p, vol.voxel_size());
  const GradVoxel* voxel = vol.find(key);
  if (!observed(voxel)) return q;
  const auto g = normalized_gradient(*voxel);
  if (!g) {
    q.status = QueryStatus::kDegenerateGradient;
    return q;
  }
  q.status = QueryStatus::kOk;
  q.gradient = *g;
  q.distance = static_cast<double>(voxel->dist) + (p - vol.center(key)).dot(*g);
  return q;
}

namespace {

struct CellCoords {
  VoxelKey base;
  Vec3 frac;
};

CellCoords cell_of(const GradientSdfVolume& vol, const Vec3& p) {
  const Vec3 s = p / vol.voxel_size();
  const Vec3 f = s.array().floor();
  return {{static_cast<std::int32_t>(f.x()), static_cast<std::int32_t>(f.y()),
           static_cast<std::int32_t>(f.z())},
          s - f};
}

template <typename Fetch>
std::optional<double> interpolate_cell(const VoxelKey& base, const Vec3& frac, Fetch&& fetch) {
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1;
    const int dy = (c >> 1) & 1;
    const int dz = (c >> 2) & 1;
    const std::optional<double> psi = fetch(base + VoxelKey{dx, dy, dz});
    if (!psi) return std::nullopt;
    const double w = (dx ? frac.x() : 1.0 - frac.x()) * (dy ? frac.y() : 1.0 - frac.y()) *
                     (dz ? frac.z() : 1.0 - frac.z());
    acc += w * *psi;
  }
  return acc;
}

}  // namespace

DistanceQuery trilinear_distance(const GradientSdfVolume& vol, const Vec3& p) {
  DistanceQuery q;
  const CellCoords cell = cell_of(vol, p);
  const auto d = interpolate_cell(cell.base, cell.frac,
                                  [&](const VoxelKey& k) -> std::optional<double> {
                                    const GradVoxel* v = vol.find(k);
                                    if (!observed(v)) return std::nullopt;
                                    return static_cast<double>(v->dist);
                                  });
  if (!d) {
    q.status = QueryStatus::kIncompleteNeighborhood;
    return q;
  }
  q.status = QueryStatus::kOk;
  q.distance = *d;
  return q;
}

DistanceQuery trilinear_query(const GradientSdfVolume& vol, const Vec3& p) {
  DistanceQuery q;
  const CellCoords cell = cell_of(vol, p);

  // Offsets in [-1, 2]^3 relative to the cell base; each voxel is read once.
  struct Slot {
    bool fetched = false;
    std::optional<double> value;
  };
  std::array<Slot, 64> cache{};
  auto fetch = [&](const VoxelKey& k) -> std::optional<double> {
    const VoxelKey off{k.x - cell.base.x + 1, k.y - cell.base.y + 1, k.z - cell.base.z + 1};
    Slot& slot = cache[static_cast<std::size_t>(off.x + 4 * off.y + 16 * off.z)];
    if (!slot.fetched) {
      slot.fetched = true;
      const GradVoxel* v = vol.find(k);
      if (observed(v)) slot.value = static_cast<double>(v->dist);
    }
    return slot.value;
  };

  const auto d = interpolate_cell(cell.base, cell.frac, fetch);
  if (!d) {
    q.status = QueryStatus::kIncompleteNeighborhood;
    return q;
  }
  Vec3 grad;
  for (int axis = 0; axis < 3; ++axis) {
    VoxelKey step{0, 0, 0};
    (axis == 0 ? step.x : axis == 1 ? step.y : step.z) = 1;
    const VoxelKey back{-step.x, -step.y, -step.z};
    const auto fwd = interpolate_cell(cell.base + step, cell.frac, fetch);
    const auto bwd = interpolate_cell(cell.base + back, cell.frac, fetch);
    if (!fwd || !bwd) {
      q.status = QueryStatus::kIncompleteNeighborhood;
      return q;
    }
    grad[axis] = (*fwd - *bwd) / (2.0 * vol.voxel_size());
  }
  q.status = QueryStatus::kOk;
  q.distance = *d;
  q.gradient = grad;
  return q;
}

std::optional<Vec3> closest_surface_point(const GradientSdfVolume& vol, const VoxelKey& key) {
  const GradVoxel* voxel = vol.find(key);
  if (!observed(voxel)) return std::nullopt;
  const auto g = normalized_gradient(*voxel);
  if (!g) return std::nullopt;
  return vol.center(key) - static_cast<double>(voxel->dist) * *g;
}

// ---------------------------------------------------------------------------
// Snapshot I/O

namespace {

constexpr char kMagic[5] = {'G', 'S', 'D', 'F', '1'};
constexpr std::size_t kRecordBytes = 3 * 4 + 5 * 4;

template <typename T>
void put_le(std::vector<char>& buf, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  buf.insert(buf.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(const char* src) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_snapshot(const GradientSdfVolume& vol, std::ostream& out) {
  std::vector<std::pair<VoxelKey, GradVoxel>> sorted(vol.voxels().begin(), vol.voxels().end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<char> buf;
  buf.reserve(sizeof(kMagic) + 16 + sorted.size() * kRecordBytes);
  buf.insert(buf.end(), std::begin(kMagic), std::end(kMagic));
  put_le(buf, vol.voxel_size());
  put_le(buf, vol.truncation());
  for (const auto& [key, voxel] : sorted) {
    put_le(buf, key.x);
    put_le(buf, key.y);
    put_le(buf, key.z);
    put_le(buf, voxel.dist);
    put_le(buf, voxel.weight);
    put_le(buf, voxel.grad.x());
    put_le(buf, voxel.grad.y());
    put_le(buf, voxel.grad.z());
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed to write volume snapshot");
}

GradientSdfVolume read_snapshot(std::istream& in) {
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t header = sizeof(kMagic) + 16;
  if (buf.size() < header || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a GSDF1 volume snapshot");
  }
  if ((buf.size() - header) % kRecordBytes != 0) {
    throw std::runtime_error("truncated volume snapshot");
  }
  const char* p = buf.data() + sizeof(kMagic);
  const auto voxel_size = get_le<double>(p);
  const auto truncation = get_le<double>(p + 8);
  GradientSdfVolume vol(voxel_size, truncation);
  const std::size_t count = (buf.size() - header) / kRecordBytes;
  vol.voxels().reserve(count);
  p = buf.data() + header;
  for (std::size_t i = 0; i < count; ++i, p += kRecordBytes) {
    const VoxelKey key{get_le<std::int32_t>(p), get_le<std::int32_t>(p + 4),
                       get_le<std::int32_t>(p + 8)};
    GradVoxel v;
    v.dist = get_le<float>(p + 12);
    v.weight = get_le<float>(p + 16);
    v.grad = {get_le<float>(p + 20), get_le<float>(p + 24), get_le<float>(p + 28)};
    vol.get_or_insert(key) = v;
  }
  return vol;
}

void save_snapshot(const GradientSdfVolume& vol, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_snapshot(vol, out);
}

GradientSdfVolume load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_snapshot(in);
}

}  // namespace gsdf
