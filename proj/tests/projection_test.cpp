#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace fastbev;
namespace ft = fastbev::testing;

TEST(Projection, SingleGatherPlacesOneHotVector) {
  ProjectionLUT lut;
  lut.grid.dims = {2, 2, 2};
  lut.feature_h = 4;
  lut.feature_w = 5;
  lut.num_cameras = 1;
  lut.entries.assign(8, kInvalidEntry);
  lut.entries[0] = 2 * 5 + 3;  // voxel (0,0,0) -> (u=3, v=2)
  FeatureMapSet feats(1, 4, 5, 8);
  feats.at(0, 2, 3)[6] = 1.0f;
  const BevTensor out = project_dense(lut, feats);
  ASSERT_EQ(out.data.size(), 8u * 8u);
  for (std::size_t n = 0; n < out.data.size(); ++n) EXPECT_EQ(out.data[n], n == 6 ? 1.0f : 0.0f) << n;
}

TEST(Projection, DenseEqualsSparseAggregateOnRandomInstances) {
  std::mt19937_64 rng(42);
  for (int n = 0; n < 40; ++n) {
    const auto inst = ft::random_instance(rng);
    const auto lut = build_lut(inst.rig, inst.grid, inst.cfg);
    const auto feats = random_feature_maps(static_cast<int>(inst.rig.size()), lut.feature_h, lut.feature_w,
                                           inst.channels, 1000 + n);
    const BevTensor dense = project_dense(lut, feats);
    const BevTensor ref = aggregate(project_sparse_baseline(inst.rig, inst.grid, inst.cfg, feats),
                                    inst.cfg.camera_priority);
    ASSERT_TRUE(dense.same_shape(ref));
    ASSERT_EQ(std::memcmp(dense.data.data(), ref.data.data(), dense.data.size() * 4), 0) << "instance " << n;
  }
}

TEST(Projection, ShardedMatchesSequential) {
  const auto rig = make_nuscenes_like_rig("six_cam_default");
  const auto grid = centered_grid(64, 64, 4, 50.0, -3.0, 3.0);
  const auto lut = build_lut(rig, grid, {});
  const auto feats = random_feature_maps(6, lut.feature_h, lut.feature_w, 12, 5);
  const auto one = project_dense(lut, feats, 1);
  EXPECT_EQ(one, project_dense(lut, feats, 4));
  EXPECT_EQ(one, project_dense(lut, feats, 1000));
}

TEST(Projection, BuffersAreReusedWithoutStaleData) {
  std::mt19937_64 rng(3);
  const auto inst = ft::random_instance(rng, 16);
  const auto lut = build_lut(inst.rig, inst.grid, inst.cfg);
  const int cams = static_cast<int>(inst.rig.size());
  BevTensor dense, agg;
  SparseVoxelSet sparse;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto feats = random_feature_maps(cams, lut.feature_h, lut.feature_w, inst.channels, seed);
    project_dense_into(lut, feats, dense);
    project_sparse_baseline_into(inst.rig, inst.grid, inst.cfg, feats, sparse);
    aggregate_into(sparse, inst.cfg.camera_priority, agg);
    EXPECT_EQ(dense, project_dense(lut, feats));
    EXPECT_EQ(agg, dense);
  }
}

TEST(Projection, Linearity) {
  std::mt19937_64 rng(8);
  const auto inst = ft::random_instance(rng, 32);
  const auto lut = build_lut(inst.rig, inst.grid, inst.cfg);
  auto feats = random_feature_maps(static_cast<int>(inst.rig.size()), lut.feature_h, lut.feature_w,
                                   inst.channels, 9);
  const BevTensor base = project_dense(lut, feats);
  for (float a : {2.0f, -0.5f, 3.25f}) {
    FeatureMapSet scaled = feats;
    for (float& v : scaled.data) v *= a;
    const BevTensor out = project_dense(lut, scaled);
    for (std::size_t n = 0; n < out.data.size(); ++n) ASSERT_EQ(out.data[n], a * base.data[n]);
  }
}

TEST(Projection, ZeroInputGivesZeroOutputOnBothPaths) {
  const auto rig = make_nuscenes_like_rig("six_cam_default");
  const auto grid = centered_grid(40, 40, 4, 50.0, -3.0, 3.0);
  const auto lut = build_lut(rig, grid, {});
  const FeatureMapSet zero(6, lut.feature_h, lut.feature_w, 8);
  for (float v : project_dense(lut, zero).data) ASSERT_EQ(v, 0.0f);
  for (float v : aggregate(project_sparse_baseline(rig, grid, {}, zero), {}).data) ASSERT_EQ(v, 0.0f);
}

TEST(Projection, MasksAreZeroOutsideAndCoverLutClaims) {
  const auto rig = make_nuscenes_like_rig("six_cam_default");
  const auto grid = centered_grid(50, 50, 4, 50.0, -3.0, 3.0);
  const auto lut = build_lut(rig, grid, {});
  const auto feats = random_feature_maps(6, lut.feature_h, lut.feature_w, 4, 2);
  const auto sparse = project_sparse_baseline(rig, grid, {}, feats);
  const auto stats = lut_stats(lut);
  for (int cam = 0; cam < 6; ++cam) {
    EXPECT_GE(sparse.mask_count(cam), stats.per_camera_claims[cam]);
    const auto& t = sparse.per_camera[cam];
    for (std::int64_t v = 0; v < grid.voxel_count(); ++v) {
      if (SparseVoxelSet::bit(sparse.masks[cam], v)) continue;
      for (int c = 0; c < 4; ++c) ASSERT_EQ(t.data[v * 4 + c], 0.0f);
    }
  }
}

TEST(Projection, GridBehindAllCamerasHasEmptyMasks) {
  const std::vector<CameraCalibration> rig{ft::outward_camera(0, 0.0, 0.0, Vec3::Zero(), 50.0, 64, 64)};
  VoxelGridSpec g;
  g.origin = {-20.0, -2.0, -1.0};
  g.cell = {1.0, 1.0, 1.0};
  g.dims = {10, 4, 2};
  const auto feats = random_feature_maps(1, 16, 16, 4, 0);
  const auto sparse = project_sparse_baseline(rig, g, {}, feats);
  EXPECT_EQ(sparse.mask_count(0), 0);
}

TEST(Projection, AggregatePriorityFirstWins) {
  SparseVoxelSet s;
  for (int cam = 0; cam < 2; ++cam) {
    BevTensor t(1, 1, 2, 2);
    t.data = {float(cam + 1), float(cam + 1), float(cam + 10), float(cam + 10)};
    s.per_camera.push_back(t);
    s.masks.push_back({cam == 0 ? 0b11u : 0b01u});
  }
  const int order10[] = {1, 0};
  const BevTensor a = aggregate(s, order10);
  EXPECT_EQ(a.data, (std::vector<float>{2, 2, 10, 10}));
  const BevTensor b = aggregate(s, {});
  EXPECT_EQ(b.data, (std::vector<float>{1, 1, 10, 10}));
  const int bad[] = {0, 0};
  EXPECT_THROW(aggregate(s, bad), ConfigError);
}

TEST(Projection, SingleCameraAggregateIsIdentity) {
  const std::vector<CameraCalibration> rig{ft::outward_camera(0, 0.0, 0.1, Vec3(0, 0, 1.5), 50.0, 64, 48)};
  const auto grid = centered_grid(20, 20, 3, 20.0, -2.0, 2.0);
  const auto feats = random_feature_maps(1, 12, 16, 4, 3);
  const auto sparse = project_sparse_baseline(rig, grid, {}, feats);
  EXPECT_EQ(aggregate(sparse, {}), sparse.per_camera[0]);
}

TEST(Projection, InputContractChecks) {
  const auto rig = make_nuscenes_like_rig("six_cam_default");
  const auto grid = centered_grid(8, 8, 2, 50.0, -3.0, 3.0);
  const auto lut = build_lut(rig, grid, {});
  EXPECT_THROW(project_dense(lut, FeatureMapSet(5, lut.feature_h, lut.feature_w, 4)), ContractError);
  EXPECT_THROW(project_dense(lut, FeatureMapSet(6, lut.feature_h + 1, lut.feature_w, 4)), ContractError);
  FeatureMapSet short_payload(6, lut.feature_h, lut.feature_w, 4);
  short_payload.data.pop_back();
  EXPECT_THROW(project_dense(lut, short_payload), ContractError);
  EXPECT_THROW(project_sparse_baseline(rig, grid, {}, FeatureMapSet(6, 1, 1, 4)), ContractError);
}

// Channel counts that are not a multiple of 4 take the unaligned copy path.
TEST(Projection, OddChannelCountsStillAgree) {
  const auto rig = make_nuscenes_like_rig("six_cam_default");
  const auto grid = centered_grid(30, 30, 2, 50.0, -3.0, 3.0);
  const auto lut = build_lut(rig, grid, {});
  for (int c : {1, 3, 5, 7}) {
    const auto feats = random_feature_maps(6, lut.feature_h, lut.feature_w, c, c);
    EXPECT_EQ(project_dense(lut, feats), aggregate(project_sparse_baseline(rig, grid, {}, feats), {}));
  }
}
