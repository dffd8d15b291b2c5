#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fastbev/error.hpp"
#include "fastbev/geometry.hpp"
#include "fastbev/projection.hpp"

namespace fastbev {

inline constexpr int kMaxFusedFrames = 4;

struct FrameBundle {
  BevTensor bev;
  EgoPose pose;
  int frame_offset = 0;  // 0 = current, 1..F-1 = history
};

namespace detail {

// Fractional cell coordinates within this distance of an integer are snapped
// onto it, so integer-cell motions reproduce the input exactly.
inline constexpr double kCellSnap = 1e-6;

inline double snap(double f) {
  const double r = std::nearbyint(f);
  return std::abs(f - r) < kCellSnap ? r : f;
}

inline void warp_rows(const BevTensor& src, const PlanarPose& rel, const VoxelGridSpec& grid,
                      BevTensor& out, int i_begin, int i_end) {
  // Inverse warp: q_past = R^T (p_current - t).
  const double c = std::cos(rel.yaw);
  const double s = std::sin(rel.yaw);
  const int nx = grid.dims[0];
  const int ny = grid.dims[1];
  const std::size_t ch = src.cell_channels();
  for (int i = i_begin; i < i_end; ++i) {
    for (int j = 0; j < ny; ++j) {
      const double px = grid.origin[0] + i * grid.cell[0] - rel.tx;
      const double py = grid.origin[1] + j * grid.cell[1] - rel.ty;
      const double qx = c * px + s * py;
      const double qy = -s * px + c * py;
      const double fi = snap((qx - grid.origin[0]) / grid.cell[0]);
      const double fj = snap((qy - grid.origin[1]) / grid.cell[1]);
      float* dst = out.data.data() + out.offset(i, j);
      if (!(fi >= 0.0 && fi <= nx - 1 && fj >= 0.0 && fj <= ny - 1)) continue;

      const int i0 = static_cast<int>(std::floor(fi));
      const int j0 = static_cast<int>(std::floor(fj));
      const double wi = fi - i0;
      const double wj = fj - j0;
      if (wi == 0.0 && wj == 0.0) {
        std::memcpy(dst, src.data.data() + src.offset(i0, j0), ch * sizeof(float));
        continue;
      }
      const int i1 = std::min(i0 + 1, nx - 1);
      const int j1 = std::min(j0 + 1, ny - 1);
      const float w00 = static_cast<float>((1.0 - wi) * (1.0 - wj));
      const float w10 = static_cast<float>(wi * (1.0 - wj));
      const float w01 = static_cast<float>((1.0 - wi) * wj);
      const float w11 = static_cast<float>(wi * wj);
      const float* a = src.data.data() + src.offset(i0, j0);
      const float* b = src.data.data() + src.offset(i1, j0);
      const float* d = src.data.data() + src.offset(i0, j1);
      const float* e = src.data.data() + src.offset(i1, j1);
      for (std::size_t n = 0; n < ch; ++n) {
        dst[n] = w00 * a[n] + w10 * b[n] + w01 * d[n] + w11 * e[n];
      }
    }
  }
}

}  // namespace detail

/// Resamples a history BEV tensor into the current ego frame. `rel` is the
/// current-from-past planar motion; every current cell center is mapped back
/// into the past frame and bilinearly interpolated over all fused channels.
/// Samples that fall outside the past grid are zero.
inline BevTensor align_bev(const BevTensor& history, const PlanarPose& rel,
                           const VoxelGridSpec& grid, int threads = 1) {
  validate(grid);
  if (history.nx != grid.dims[0] || history.ny != grid.dims[1] || history.nz != grid.dims[2]) {
    throw ContractError("history BEV dims do not match the voxel grid");
  }
  if (history.data.size() != static_cast<std::size_t>(history.nx) * history.ny *
                                 history.cell_channels()) {
    throw ContractError("history BEV payload size does not match its dims");
  }
  BevTensor out(history.nx, history.ny, history.nz, history.channels, history.frames);
  threads = std::clamp(threads, 1, history.nx);
  if (threads == 1) {
    detail::warp_rows(history, rel, grid, out, 0, history.nx);
    return out;
  }
  std::vector<std::jthread> workers;
  for (int t = 0; t < threads; ++t) {
    const int b = history.nx * t / threads;
    const int e = history.nx * (t + 1) / threads;
    workers.emplace_back([&, b, e] { detail::warp_rows(history, rel, grid, out, b, e); });
  }
  workers.clear();
  return out;
}

/// Aligns every history frame to the current pose and concatenates all frames
/// along channels, current frame first and history in frame_offset order.
inline BevTensor fuse_frames(std::span<const FrameBundle> bundles, std::size_t current_index,
                             const VoxelGridSpec& grid) {
  if (bundles.empty() || bundles.size() > static_cast<std::size_t>(kMaxFusedFrames)) {
    throw ConfigError("frame count must be in [1, " + std::to_string(kMaxFusedFrames) + "]");
  }
  if (current_index >= bundles.size()) throw ConfigError("current frame index out of range");
  const FrameBundle& current = bundles[current_index];
  if (current.frame_offset != 0) throw ConfigError("current frame must have frame_offset 0");
  if (current.bev.frames != 1) throw ContractError("input BEV tensors must be single-frame");

  std::vector<const FrameBundle*> order;
  for (const FrameBundle& b : bundles) {
    if (!b.bev.same_shape(current.bev)) {
      throw ContractError("frame " + std::to_string(b.frame_offset) +
                          " BEV dims differ from the current frame");
    }
    order.push_back(&b);
  }
  std::sort(order.begin(), order.end(),
            [](const FrameBundle* a, const FrameBundle* b) { return a->frame_offset < b->frame_offset; });
  for (std::size_t n = 1; n < order.size(); ++n) {
    if (order[n]->frame_offset == order[n - 1]->frame_offset) {
      throw ConfigError("duplicate frame_offset " + std::to_string(order[n]->frame_offset));
    }
  }

  const int frames = static_cast<int>(order.size());
  const BevTensor& ref = current.bev;
  BevTensor out(ref.nx, ref.ny, ref.nz, ref.channels, frames);
  const std::size_t group = ref.cell_channels();
  for (int g = 0; g < frames; ++g) {
    const FrameBundle& b = *order[g];
    const BevTensor aligned =
        &b == &current ? BevTensor{} : align_bev(b.bev, relative_planar_pose(b.pose, current.pose), grid);
    const BevTensor& src = &b == &current ? current.bev : aligned;
    for (int i = 0; i < ref.nx; ++i) {
      for (int j = 0; j < ref.ny; ++j) {
        std::memcpy(out.data.data() + out.offset(i, j) + g * group,
                    src.data.data() + src.offset(i, j), group * sizeof(float));
      }
    }
  }
  return out;
}

}  // namespace fastbev
