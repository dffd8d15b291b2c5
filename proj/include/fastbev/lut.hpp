#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fastbev/detail/bytes.hpp"
#include "fastbev/error.hpp"
#include "fastbev/geometry.hpp"

namespace fastbev {

inline constexpr std::int32_t kInvalidEntry = -1;
inline constexpr std::uint32_t kLutFormatVersion = 1;

struct LutBuildConfig {
  int feature_stride = 4;
  std::vector<int> camera_priority;  // empty means ascending camera_id
  double near_clip = kNearClip;
};

/// Static voxel -> (camera, v, u) table. Each entry is
/// camera * H_f * W_f + v * W_f + u, or -1 when no camera sees the voxel
/// center. Entries are ordered i-major, then j, then k.
struct ProjectionLUT {
  VoxelGridSpec grid;
  int feature_h = 0;
  int feature_w = 0;
  int num_cameras = 0;
  std::vector<std::int32_t> entries;

  std::int64_t feature_cells_per_camera() const {
    return static_cast<std::int64_t>(feature_h) * feature_w;
  }
  std::int64_t index_limit() const { return feature_cells_per_camera() * num_cameras; }
  std::size_t size_bytes() const { return entries.size() * sizeof(std::int32_t); }

  friend bool operator==(const ProjectionLUT&, const ProjectionLUT&) = default;
};

struct OccupancyReport {
  std::int64_t total_voxels = 0;
  std::int64_t valid_count = 0;
  std::vector<std::int64_t> per_camera_claims;

  double valid_fraction() const {
    return total_voxels == 0 ? 0.0 : static_cast<double>(valid_count) / total_voxels;
  }
  double camera_fraction(int cam) const {
    return total_voxels == 0 ? 0.0 : static_cast<double>(per_camera_claims.at(cam)) / total_voxels;
  }
};

struct RigLayout {
  int image_width = 0;
  int image_height = 0;
  int feature_w = 0;
  int feature_h = 0;
  std::vector<int> priority;
};

/// Checks the rig against the build config and resolves the camera order.
/// Camera ids must be exactly 0..N-1 since they are folded into LUT entries.
inline RigLayout check_rig(std::span<const CameraCalibration> rig, const LutBuildConfig& cfg) {
  if (rig.empty()) throw RigError("rig has no cameras");
  if (cfg.feature_stride <= 0) throw ConfigError("feature stride must be positive");
  RigLayout layout;
  layout.image_width = rig.front().image_width;
  layout.image_height = rig.front().image_height;
  std::vector<bool> seen(rig.size(), false);
  for (std::size_t c = 0; c < rig.size(); ++c) {
    validate(rig[c]);
    if (rig[c].image_width != layout.image_width || rig[c].image_height != layout.image_height) {
      throw RigError("camera " + std::to_string(rig[c].camera_id) + " image size " +
                     std::to_string(rig[c].image_width) + "x" +
                     std::to_string(rig[c].image_height) + " differs from the rig's " +
                     std::to_string(layout.image_width) + "x" +
                     std::to_string(layout.image_height));
    }
    const int id = rig[c].camera_id;
    if (id < 0 || id >= static_cast<int>(rig.size()) || seen[id]) {
      throw RigError("camera ids must be unique and in [0, " + std::to_string(rig.size()) + ")");
    }
    seen[id] = true;
  }
  if (layout.image_width % cfg.feature_stride != 0 ||
      layout.image_height % cfg.feature_stride != 0) {
    throw ConfigError("feature stride " + std::to_string(cfg.feature_stride) +
                      " does not divide image size " + std::to_string(layout.image_width) + "x" +
                      std::to_string(layout.image_height));
  }
  layout.feature_w = layout.image_width / cfg.feature_stride;
  layout.feature_h = layout.image_height / cfg.feature_stride;

  if (cfg.camera_priority.empty()) {
    layout.priority.resize(rig.size());
    for (std::size_t c = 0; c < rig.size(); ++c) layout.priority[c] = static_cast<int>(c);
  } else {
    std::vector<int> sorted = cfg.camera_priority;
    std::sort(sorted.begin(), sorted.end());
    bool perm = sorted.size() == rig.size();
    for (std::size_t c = 0; perm && c < sorted.size(); ++c) perm = sorted[c] == static_cast<int>(c);
    if (!perm) throw ConfigError("camera priority must be a permutation of the rig's camera ids");
    layout.priority = cfg.camera_priority;
  }
  return layout;
}

namespace detail {

// Rig reordered so that position p holds camera id priority[p].
inline std::vector<const CameraCalibration*> by_id(std::span<const CameraCalibration> rig,
                                                   std::span<const int> priority) {
  std::vector<const CameraCalibration*> id_to_cam(rig.size());
  for (const auto& cam : rig) id_to_cam[cam.camera_id] = &cam;
  std::vector<const CameraCalibration*> ordered;
  ordered.reserve(priority.size());
  for (int id : priority) ordered.push_back(id_to_cam[id]);
  return ordered;
}

inline void fill_lut_slab(const std::vector<const CameraCalibration*>& ordered,
                          const VoxelGridSpec& grid, const RigLayout& layout,
                          const LutBuildConfig& cfg, int i_begin, int i_end,
                          std::vector<std::int32_t>& entries) {
  const std::int32_t plane = layout.feature_h * layout.feature_w;
  for (int i = i_begin; i < i_end; ++i) {
    for (int j = 0; j < grid.dims[1]; ++j) {
      for (int k = 0; k < grid.dims[2]; ++k) {
        const Vec3 p = grid.center(i, j, k);
        std::int32_t entry = kInvalidEntry;
        for (const CameraCalibration* cam : ordered) {
          if (auto fc = project_point(*cam, p, cfg.feature_stride, cfg.near_clip)) {
            entry = cam->camera_id * plane + fc->v * layout.feature_w + fc->u;
            break;
          }
        }
        entries[grid.flat(i, j, k)] = entry;
      }
    }
  }
}

}  // namespace detail

/// Precomputes the voxel -> feature index table. The first camera in
/// priority order that sees a voxel center claims it. `threads` > 1 splits
/// the work over i-slabs; the table does not depend on the thread count.
inline ProjectionLUT build_lut(std::span<const CameraCalibration> rig, const VoxelGridSpec& grid,
                               const LutBuildConfig& cfg, int threads = 1) {
  validate(grid);
  const RigLayout layout = check_rig(rig, cfg);
  if (static_cast<std::int64_t>(layout.feature_h) * layout.feature_w *
          static_cast<std::int64_t>(rig.size()) >
      INT32_MAX) {
    throw ConfigError("feature maps too large for 32-bit LUT entries");
  }

  ProjectionLUT lut;
  lut.grid = grid;
  lut.feature_h = layout.feature_h;
  lut.feature_w = layout.feature_w;
  lut.num_cameras = static_cast<int>(rig.size());
  lut.entries.assign(static_cast<std::size_t>(grid.voxel_count()), kInvalidEntry);

  const auto ordered = detail::by_id(rig, layout.priority);
  const int nx = grid.dims[0];
  threads = std::clamp(threads, 1, nx);
  if (threads == 1) {
    detail::fill_lut_slab(ordered, grid, layout, cfg, 0, nx, lut.entries);
    return lut;
  }
  std::vector<std::jthread> workers;
  for (int t = 0; t < threads; ++t) {
    const int b = nx * t / threads;
    const int e = nx * (t + 1) / threads;
    workers.emplace_back(
        [&, b, e] { detail::fill_lut_slab(ordered, grid, layout, cfg, b, e, lut.entries); });
  }
  workers.clear();
  return lut;
}

inline OccupancyReport lut_stats(const ProjectionLUT& lut) {
  OccupancyReport r;
  r.total_voxels = static_cast<std::int64_t>(lut.entries.size());
  r.per_camera_claims.assign(static_cast<std::size_t>(lut.num_cameras), 0);
  const std::int64_t plane = lut.feature_cells_per_camera();
  for (std::int32_t e : lut.entries) {
    if (e < 0) continue;
    ++r.valid_count;
    ++r.per_camera_claims[static_cast<std::size_t>(e / plane)];
  }
  return r;
}

/// "FBLT", u32 version, u32 Nx Ny Nz H_f W_f num_cameras, then i32 entries.
/// The grid's origin and cell size are not part of the format; a decoded
/// table carries a unit-cell grid at the origin unless the caller supplies one.
inline std::vector<std::uint8_t> serialize_lut(const ProjectionLUT& lut) {
  detail::ByteWriter w;
  w.reserve(4 + 4 * 7 + lut.entries.size() * 4);
  w.magic("FBLT");
  w.u32(kLutFormatVersion);
  for (int d : lut.grid.dims) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(lut.feature_h));
  w.u32(static_cast<std::uint32_t>(lut.feature_w));
  w.u32(static_cast<std::uint32_t>(lut.num_cameras));
  for (std::int32_t e : lut.entries) w.i32(e);
  return std::move(w).take();
}

inline ProjectionLUT deserialize_lut(std::span<const std::uint8_t> bytes,
                                     const VoxelGridSpec* grid = nullptr) {
  detail::ByteReader r(bytes);
  if (!r.magic_matches("FBLT")) throw DecodeError(DecodeError::Kind::bad_magic);
  const std::uint32_t version = r.u32();
  if (version != kLutFormatVersion) {
    throw DecodeError(DecodeError::Kind::version_mismatch,
                      "got " + std::to_string(version) + ", expected " +
                          std::to_string(kLutFormatVersion));
  }
  ProjectionLUT lut;
  std::uint64_t count = 1;
  for (int a = 0; a < 3; ++a) {
    const std::uint32_t d = r.u32();
    if (d == 0 || d > static_cast<std::uint32_t>(INT32_MAX)) {
      throw DecodeError(DecodeError::Kind::dims_overflow, "grid dimension " + std::to_string(d));
    }
    lut.grid.dims[a] = static_cast<int>(d);
    count *= d;
  }
  const std::uint32_t fh = r.u32();
  const std::uint32_t fw = r.u32();
  const std::uint32_t cams = r.u32();
  if (count > static_cast<std::uint64_t>(INT32_MAX) ||
      static_cast<std::uint64_t>(fh) * fw * cams > static_cast<std::uint64_t>(INT32_MAX)) {
    throw DecodeError(DecodeError::Kind::dims_overflow);
  }
  lut.feature_h = static_cast<int>(fh);
  lut.feature_w = static_cast<int>(fw);
  lut.num_cameras = static_cast<int>(cams);
  if (grid != nullptr) {
    if (grid->dims != lut.grid.dims) {
      throw ContractError("LUT dims do not match the supplied voxel grid");
    }
    lut.grid = *grid;
  }
  r.need(static_cast<std::size_t>(count) * 4);
  lut.entries.resize(static_cast<std::size_t>(count));
  const std::int64_t limit = lut.index_limit();
  for (std::size_t v = 0; v < lut.entries.size(); ++v) {
    const std::int32_t e = r.i32();
    if (e < kInvalidEntry || e >= limit) {
      throw DecodeError(DecodeError::Kind::entry_out_of_range,
                        "entry " + std::to_string(v) + " = " + std::to_string(e));
    }
    lut.entries[v] = e;
  }
  if (r.remaining() != 0) throw DecodeError(DecodeError::Kind::trailing_bytes);
  return lut;
}

}  // namespace fastbev
