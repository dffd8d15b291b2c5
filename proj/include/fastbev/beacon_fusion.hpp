#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "fastbev/geometry.hpp"
#include "fastbev/lut.hpp"
#include "fastbev/projection.hpp"
#include "fastbev/scene.hpp"
#include "fastbev/temporal.hpp"

namespace fastbev {

struct BeaconTrack {
  std::array<int, 3> expected_cell{};  // (i, j, k) in the current frame
  std::vector<double> score_at_expected;  // per frame group
  std::vector<double> group_peak;         // per frame group, max over cells
  double combined_at_expected = 0.0;      // score summed over frame groups
  double combined_peak = 0.0;
  // Cells sharing the combined peak. Dense projection fills a whole ray, so a
  // beacon close to the direction of travel stays ambiguous in depth.
  int peak_cells = 0;

  bool tracked() const {
    if (!(combined_at_expected > 0.0) || combined_at_expected != combined_peak) return false;
    for (std::size_t g = 0; g < score_at_expected.size(); ++g) {
      if (!(score_at_expected[g] > 0.0) || score_at_expected[g] != group_peak[g]) return false;
    }
    return true;
  }
};

struct BeaconFusionResult {
  SyntheticScene scene;
  VoxelGridSpec grid;
  BevTensor fused;
  std::vector<BeaconTrack> tracks;
};

/// Per-cell score of one beacon in one frame group: the largest value of the
/// beacon's signature channel over all z slices.
inline double beacon_score(const BevTensor& fused, int frame, int channel, int i, int j) {
  double best = 0.0;
  for (int k = 0; k < fused.nz; ++k) best = std::max(best, double(fused.voxel(i, j, k, frame)[channel]));
  return best;
}

inline std::vector<BeaconTrack> locate_beacons(const BevTensor& fused, const VoxelGridSpec& grid,
                                               const SyntheticScene& scene) {
  std::vector<BeaconTrack> tracks;
  const Mat4 ego_from_global = inverse_rigid(scene.trajectory.front().global_from_ego());
  for (std::size_t b = 0; b < scene.beacons.size(); ++b) {
    const Vec3 p = (ego_from_global * scene.beacons[b].position.homogeneous()).head<3>();
    BeaconTrack t;
    for (int a = 0; a < 3; ++a) {
      t.expected_cell[a] = static_cast<int>(std::lround((p[a] - grid.origin[a]) / grid.cell[a]));
    }
    const int channel = static_cast<int>(b % static_cast<std::size_t>(scene.channels));
    t.score_at_expected.assign(static_cast<std::size_t>(fused.frames), 0.0);
    t.group_peak.assign(static_cast<std::size_t>(fused.frames), 0.0);
    double best = -1.0;
    for (int i = 0; i < fused.nx; ++i) {
      for (int j = 0; j < fused.ny; ++j) {
        double total = 0.0;
        for (int g = 0; g < fused.frames; ++g) {
          const double s = beacon_score(fused, g, channel, i, j);
          total += s;
          t.group_peak[g] = std::max(t.group_peak[g], s);
          if (i == t.expected_cell[0] && j == t.expected_cell[1]) t.score_at_expected[g] = s;
        }
        if (i == t.expected_cell[0] && j == t.expected_cell[1]) t.combined_at_expected = total;
        if (total > best) {
          best = total;
          t.peak_cells = 1;
        } else if (total == best) {
          ++t.peak_cells;
        }
      }
    }
    t.combined_peak = best;
    tracks.push_back(t);
  }
  return tracks;
}

/// Static beacons seen from a rig moving along +x at a speed that covers
/// `cells_per_frame` x-cells every 0.5 s. Beacons sit on voxel centers of the
/// current frame, so every history frame sees them on voxel centers too.
/// With `align` false the history frames are concatenated unwarped.
inline BeaconFusionResult run_beacon_fusion(const std::vector<CameraCalibration>& rig,
                                            const VoxelGridSpec& grid, int frames, int channels,
                                            int cells_per_frame, const std::vector<std::array<int, 3>>& beacon_cells,
                                            bool align = true, int stride = 4) {
  constexpr double kKeyframeInterval = 0.5;
  BeaconFusionResult res;
  res.grid = grid;
  res.scene.rig = rig;
  res.scene.channels = channels;
  res.scene.trajectory = straight_line_trajectory(
      frames, cells_per_frame * grid.cell[0] / kKeyframeInterval, kKeyframeInterval, 0.0);
  for (std::size_t b = 0; b < beacon_cells.size(); ++b) {
    const auto& c = beacon_cells[b];
    res.scene.beacons.push_back(
        {grid.center(c[0], c[1], c[2]), beacon_signature(static_cast<int>(b), channels)});
  }

  LutBuildConfig cfg;
  cfg.feature_stride = stride;
  const ProjectionLUT lut = build_lut(rig, grid, cfg);
  std::vector<FrameBundle> bundles;
  for (int f = 0; f < frames; ++f) {
    const FeatureMapSet maps = render_beacons(res.scene, static_cast<std::size_t>(f), stride);
    const EgoPose pose = align ? res.scene.trajectory[static_cast<std::size_t>(f)]
                               : res.scene.trajectory.front();
    bundles.push_back({project_dense(lut, maps), pose, f});
  }
  res.fused = fuse_frames(bundles, 0, grid);
  res.tracks = locate_beacons(res.fused, grid, res.scene);
  return res;
}

}  // namespace fastbev
