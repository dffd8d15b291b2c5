#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <thread>
#include <vector>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "fastbev/error.hpp"
#include "fastbev/geometry.hpp"
#include "fastbev/lut.hpp"

namespace fastbev {

/// Per-camera H_f x W_f x C feature maps, cameras stacked, row-major.
struct FeatureMapSet {
  int num_cameras = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  FeatureMapSet() = default;
  FeatureMapSet(int cams, int h, int w, int c)
      : num_cameras(cams), height(h), width(w), channels(c),
        data(static_cast<std::size_t>(cams) * h * w * c, 0.0f) {}

  std::size_t offset(int cam, int v, int u) const {
    return ((static_cast<std::size_t>(cam) * height + v) * width + u) * channels;
  }
  std::span<float> at(int cam, int v, int u) {
    return {data.data() + offset(cam, v, u), static_cast<std::size_t>(channels)};
  }
  std::span<const float> at(int cam, int v, int u) const {
    return {data.data() + offset(cam, v, u), static_cast<std::size_t>(channels)};
  }
};

/// Nx x Ny x (frames * Nz * C). Per (i,j) cell the channel axis is
/// frame-major, then z, then c. Single-frame tensors have frames == 1.
struct BevTensor {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  int channels = 0;
  int frames = 1;
  std::vector<float> data;

  BevTensor() = default;
  BevTensor(int x, int y, int z, int c, int f = 1)
      : nx(x), ny(y), nz(z), channels(c), frames(f),
        data(static_cast<std::size_t>(x) * y * z * c * f, 0.0f) {}

  std::size_t cell_channels() const { return static_cast<std::size_t>(frames) * nz * channels; }
  std::size_t offset(int i, int j) const {
    return (static_cast<std::size_t>(i) * ny + j) * cell_channels();
  }
  std::size_t offset(int i, int j, int k, int frame = 0) const {
    return offset(i, j) + (static_cast<std::size_t>(frame) * nz + k) * channels;
  }
  std::span<const float> voxel(int i, int j, int k, int frame = 0) const {
    return {data.data() + offset(i, j, k, frame), static_cast<std::size_t>(channels)};
  }
  bool same_shape(const BevTensor& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz && channels == o.channels && frames == o.frames;
  }

  friend bool operator==(const BevTensor&, const BevTensor&) = default;
};

/// One zero-initialized BEV tensor and validity mask per camera.
struct SparseVoxelSet {
  std::vector<BevTensor> per_camera;
  std::vector<std::vector<std::uint64_t>> masks;  // 1 bit per voxel, flat LUT order

  static bool bit(const std::vector<std::uint64_t>& mask, std::int64_t voxel) {
    return (mask[static_cast<std::size_t>(voxel >> 6)] >> (voxel & 63)) & 1u;
  }
  std::int64_t mask_count(int cam) const {
    std::int64_t n = 0;
    for (std::uint64_t w : masks.at(cam)) n += std::popcount(w);
    return n;
  }
};

namespace detail {

// Bulk channel copies bypass the cache when the target is 16-byte aligned
// and the channel count is a multiple of 4; callers issue
// `stream_fence()` once after a batch of streamed writes. Every bulk
// voxel write in both projection paths goes through these two helpers.
inline void stream_copy(float* dst, const float* src, std::size_t n) {
#if defined(__SSE2__)
  if (n % 4 == 0 && reinterpret_cast<std::uintptr_t>(dst) % 16 == 0) {
    for (std::size_t i = 0; i < n; i += 4) _mm_stream_ps(dst + i, _mm_loadu_ps(src + i));
    return;
  }
#endif
  std::memcpy(dst, src, n * sizeof(float));
}

inline void stream_zero(float* dst, std::size_t n) {
#if defined(__SSE2__)
  if (n % 4 == 0 && reinterpret_cast<std::uintptr_t>(dst) % 16 == 0) {
    const __m128 z = _mm_setzero_ps();
    for (std::size_t i = 0; i < n; i += 4) _mm_stream_ps(dst + i, z);
    return;
  }
#endif
  std::memset(dst, 0, n * sizeof(float));
}

inline void stream_fence() {
#if defined(__SSE2__)
  _mm_sfence();
#endif
}

inline void check_dense_inputs(const ProjectionLUT& lut, const FeatureMapSet& feats) {
  if (feats.num_cameras != lut.num_cameras || feats.height != lut.feature_h ||
      feats.width != lut.feature_w) {
    throw ContractError("feature maps " + std::to_string(feats.num_cameras) + "x" +
                        std::to_string(feats.height) + "x" + std::to_string(feats.width) +
                        " do not match LUT " + std::to_string(lut.num_cameras) + "x" +
                        std::to_string(lut.feature_h) + "x" + std::to_string(lut.feature_w));
  }
  if (feats.channels <= 0 ||
      feats.data.size() != static_cast<std::size_t>(feats.num_cameras) * feats.height *
                               feats.width * feats.channels) {
    throw ContractError("feature map payload size does not match its dims");
  }
  if (lut.entries.size() != static_cast<std::size_t>(lut.grid.voxel_count())) {
    throw ContractError("LUT entry count does not match its grid");
  }
}

inline void gather_rows(const ProjectionLUT& lut, const FeatureMapSet& feats, BevTensor& out,
                        int i_begin, int i_end) {
  const std::size_t c = static_cast<std::size_t>(feats.channels);
  const std::size_t per_row = static_cast<std::size_t>(lut.grid.dims[1]) * lut.grid.dims[2];
  const float* src = feats.data.data();
  float* dst = out.data.data();
  for (std::size_t v = i_begin * per_row, end = i_end * per_row; v < end; ++v) {
    const std::int32_t e = lut.entries[v];
    if (e >= 0) {
      stream_copy(dst + v * c, src + static_cast<std::size_t>(e) * c, c);
    } else {
      stream_zero(dst + v * c, c);
    }
  }
  stream_fence();
}

}  // namespace detail

/// Dense view transformation into a caller-owned tensor (reshaped if
/// needed): one gather per voxel through the table, no projection math.
/// With `threads` > 1 the BEV rows are sharded; the output is identical to
/// the sequential result.
inline void project_dense_into(const ProjectionLUT& lut, const FeatureMapSet& feats,
                               BevTensor& out, int threads = 1) {
  detail::check_dense_inputs(lut, feats);
  out.nx = lut.grid.dims[0];
  out.ny = lut.grid.dims[1];
  out.nz = lut.grid.dims[2];
  out.channels = feats.channels;
  out.frames = 1;
  // Every element is written by the gather, so stale contents are fine.
  out.data.resize(static_cast<std::size_t>(lut.grid.voxel_count()) * feats.channels);
  threads = std::clamp(threads, 1, out.nx);
  if (threads == 1) {
    detail::gather_rows(lut, feats, out, 0, out.nx);
    return;
  }
  std::vector<std::jthread> workers;
  for (int t = 0; t < threads; ++t) {
    const int b = out.nx * t / threads;
    const int e = out.nx * (t + 1) / threads;
    workers.emplace_back([&, b, e] { detail::gather_rows(lut, feats, out, b, e); });
  }
}

inline BevTensor project_dense(const ProjectionLUT& lut, const FeatureMapSet& feats,
                               int threads = 1) {
  BevTensor out;
  project_dense_into(lut, feats, out, threads);
  return out;
}

/// Per-camera projection recomputed from the calibration on every call: each
/// camera's volume and visibility mask are cleared and refilled. `out` may
/// hold buffers from a previous call; they are reused when shapes match.
inline void project_sparse_baseline_into(std::span<const CameraCalibration> rig,
                                         const VoxelGridSpec& grid, const LutBuildConfig& cfg,
                                         const FeatureMapSet& feats, SparseVoxelSet& out) {
  validate(grid);
  const RigLayout layout = check_rig(rig, cfg);
  if (feats.num_cameras != static_cast<int>(rig.size()) || feats.height != layout.feature_h ||
      feats.width != layout.feature_w) {
    throw ContractError("feature maps do not match the rig's feature dims");
  }
  const std::size_t c = static_cast<std::size_t>(feats.channels);
  const std::int64_t voxels = grid.voxel_count();

  out.per_camera.resize(rig.size());
  out.masks.resize(rig.size());
  for (std::size_t n = 0; n < rig.size(); ++n) {
    BevTensor& t = out.per_camera[n];
    t.nx = grid.dims[0];
    t.ny = grid.dims[1];
    t.nz = grid.dims[2];
    t.channels = feats.channels;
    t.frames = 1;
    t.data.assign(static_cast<std::size_t>(voxels) * c, 0.0f);
    out.masks[n].assign(static_cast<std::size_t>((voxels + 63) / 64), 0);
  }

  for (const CameraCalibration& cam : rig) {
    float* dst = out.per_camera[cam.camera_id].data.data();
    auto& mask = out.masks[cam.camera_id];
    for (int i = 0; i < grid.dims[0]; ++i) {
      for (int j = 0; j < grid.dims[1]; ++j) {
        for (int k = 0; k < grid.dims[2]; ++k) {
          const auto fc =
              project_point(cam, grid.center(i, j, k), cfg.feature_stride, cfg.near_clip);
          if (!fc) continue;
          const std::int64_t v = grid.flat(i, j, k);
          mask[static_cast<std::size_t>(v >> 6)] |= std::uint64_t{1} << (v & 63);
          detail::stream_copy(dst + v * c, feats.at(cam.camera_id, fc->v, fc->u).data(), c);
        }
      }
    }
  }
  detail::stream_fence();
}

inline SparseVoxelSet project_sparse_baseline(std::span<const CameraCalibration> rig,
                                              const VoxelGridSpec& grid,
                                              const LutBuildConfig& cfg,
                                              const FeatureMapSet& feats) {
  SparseVoxelSet out;
  project_sparse_baseline_into(rig, grid, cfg, feats, out);
  return out;
}

/// Merges per-camera volumes into `out`: the first camera in `priority`
/// whose mask bit is set supplies the voxel; voxels nobody sees are zero.
inline void aggregate_into(const SparseVoxelSet& sparse, std::span<const int> priority,
                           BevTensor& out) {
  if (sparse.per_camera.empty()) throw ContractError("sparse voxel set is empty");
  const BevTensor& first = sparse.per_camera.front();
  for (const BevTensor& t : sparse.per_camera) {
    if (!t.same_shape(first)) throw ContractError("sparse volumes differ in shape");
  }
  const int cams = static_cast<int>(sparse.per_camera.size());
  std::vector<int> order(priority.begin(), priority.end());
  if (order.empty()) {
    for (int n = 0; n < cams; ++n) order.push_back(n);
  }
  {
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    bool perm = static_cast<int>(sorted.size()) == cams;
    for (int n = 0; perm && n < cams; ++n) perm = sorted[n] == n;
    if (!perm) throw ConfigError("aggregation priority must be a permutation of camera ids");
  }

  out.nx = first.nx;
  out.ny = first.ny;
  out.nz = first.nz;
  out.channels = first.channels;
  out.frames = 1;
  const std::size_t c = static_cast<std::size_t>(first.channels);
  const std::int64_t voxels = static_cast<std::int64_t>(first.nx) * first.ny * first.nz;
  out.data.resize(static_cast<std::size_t>(voxels) * c);
  for (std::int64_t v = 0; v < voxels; ++v) {
    float* dst = out.data.data() + v * c;
    bool hit = false;
    for (int cam : order) {
      if (SparseVoxelSet::bit(sparse.masks[cam], v)) {
        detail::stream_copy(dst, sparse.per_camera[cam].data.data() + v * c, c);
        hit = true;
        break;
      }
    }
    if (!hit) detail::stream_zero(dst, c);
  }
  detail::stream_fence();
}

inline BevTensor aggregate(const SparseVoxelSet& sparse, std::span<const int> priority) {
  BevTensor out;
  aggregate_into(sparse, priority, out);
  return out;
}

}  // namespace fastbev
