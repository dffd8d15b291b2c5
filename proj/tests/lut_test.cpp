#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace fastbev;
namespace ft = fastbev::testing;

namespace {

std::vector<CameraCalibration> two_facing_cameras() {
  // Both look down +x from nearly the same spot, so they overlap heavily.
  return {ft::outward_camera(0, 0.0, 0.0, Vec3(0, 0, 0), 40.0, 64, 48),
          ft::outward_camera(1, 0.3, 0.0, Vec3(0, 0, 0), 40.0, 64, 48)};
}

}  // namespace

TEST(Lut, MatchesNaiveOracleOnRandomRigs) {
  std::mt19937_64 rng(1234);
  for (int n = 0; n < 60; ++n) {
    const auto inst = ft::random_instance(rng);
    const ProjectionLUT lut = build_lut(inst.rig, inst.grid, inst.cfg);
    ASSERT_EQ(lut.entries, ft::oracle_lut(inst.rig, inst.grid, inst.cfg)) << "instance " << n;
    ASSERT_EQ(lut.entries.size(), static_cast<std::size_t>(inst.grid.voxel_count()));
    for (auto e : lut.entries) ASSERT_TRUE(e == kInvalidEntry || (e >= 0 && e < lut.index_limit()));
  }
}

TEST(Lut, ThreadCountDoesNotChangeTable) {
  std::mt19937_64 rng(77);
  for (int n = 0; n < 10; ++n) {
    const auto inst = ft::random_instance(rng);
    const auto a = build_lut(inst.rig, inst.grid, inst.cfg, 1);
    EXPECT_EQ(a, build_lut(inst.rig, inst.grid, inst.cfg, 3));
    EXPECT_EQ(a, build_lut(inst.rig, inst.grid, inst.cfg, 64));
    EXPECT_EQ(a, build_lut(inst.rig, inst.grid, inst.cfg, 1));  // rebuild is bit-identical
  }
}

TEST(Lut, PriorityOnlyAffectsSharedVoxels) {
  const auto rig = two_facing_cameras();
  const auto grid = centered_grid(40, 40, 2, 20.0, -1.0, 1.0);
  LutBuildConfig a, b;
  a.camera_priority = {0, 1};
  b.camera_priority = {1, 0};
  const auto la = build_lut(rig, grid, a);
  const auto lb = build_lut(rig, grid, b);
  const auto s0 = ft::scalar_cam(rig[0]), s1 = ft::scalar_cam(rig[1]);
  int shared = 0, changed = 0;
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 40; ++j) {
      for (int k = 0; k < 2; ++k) {
        const Vec3 p = grid.center(i, j, k);
        const bool v0 = ft::oracle_feature(s0, p.x(), p.y(), p.z(), 4).has_value();
        const bool v1 = ft::oracle_feature(s1, p.x(), p.y(), p.z(), 4).has_value();
        const auto f = grid.flat(i, j, k);
        if (v0 && v1) {
          ++shared;
          changed += la.entries[f] != lb.entries[f];
        } else {
          EXPECT_EQ(la.entries[f], lb.entries[f]);
        }
      }
    }
  }
  EXPECT_GT(shared, 0);
  EXPECT_EQ(changed, shared);
}

TEST(Lut, RigValidation) {
  auto rig = two_facing_cameras();
  LutBuildConfig cfg;
  const auto grid = centered_grid(4, 4, 1, 2.0, 0.0, 1.0);

  auto odd = rig;
  odd[1].image_width = 60;
  EXPECT_THROW(build_lut(odd, grid, cfg), RigError);

  auto dup = rig;
  dup[1].camera_id = 0;
  EXPECT_THROW(build_lut(dup, grid, cfg), RigError);

  auto gap = rig;
  gap[1].camera_id = 5;
  EXPECT_THROW(build_lut(gap, grid, cfg), RigError);

  EXPECT_THROW(build_lut(std::vector<CameraCalibration>{}, grid, cfg), RigError);

  cfg.feature_stride = 5;  // does not divide 64x48
  EXPECT_THROW(build_lut(rig, grid, cfg), ConfigError);

  cfg.feature_stride = 4;
  cfg.camera_priority = {0, 0};
  EXPECT_THROW(build_lut(rig, grid, cfg), ConfigError);
  cfg.camera_priority = {0};
  EXPECT_THROW(build_lut(rig, grid, cfg), ConfigError);
}

TEST(Lut, GridBehindEveryCameraIsAllInvalid) {
  const auto rig = two_facing_cameras();
  VoxelGridSpec g;
  g.origin = {-30.0, -1.0, -1.0};  // all x < 0, behind both cameras
  g.cell = {0.5, 0.5, 0.5};
  g.dims = {20, 4, 4};
  const auto lut = build_lut(rig, g, {});
  const auto stats = lut_stats(lut);
  EXPECT_EQ(stats.valid_count, 0);
  EXPECT_EQ(stats.valid_fraction(), 0.0);
}

TEST(Lut, CountingStats) {
  ProjectionLUT lut;
  lut.grid.dims = {2, 2, 2};
  lut.feature_h = 2;
  lut.feature_w = 2;
  lut.num_cameras = 2;
  lut.entries = {-1, 0, -1, 5, -1, -1, 3, -1};
  const auto s = lut_stats(lut);
  EXPECT_EQ(s.valid_count, 3);
  EXPECT_DOUBLE_EQ(s.valid_fraction(), 0.375);
  EXPECT_EQ(s.per_camera_claims, (std::vector<std::int64_t>{2, 1}));
}

TEST(Lut, RoundTripIsByteIdentical) {
  const auto rig = make_nuscenes_like_rig("six_cam_default");
  const auto grid = centered_grid(50, 50, 4, 50.0, -3.0, 3.0);
  const auto lut = build_lut(rig, grid, {});
  const auto bytes = serialize_lut(lut);
  ASSERT_EQ(bytes.size(), 32 + lut.entries.size() * 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FBLT");
  const auto back = deserialize_lut(bytes, &grid);
  EXPECT_EQ(back, lut);
  EXPECT_EQ(serialize_lut(back), bytes);
  const auto bare = deserialize_lut(bytes);  // no grid: unit cells at the origin
  EXPECT_EQ(bare.entries, lut.entries);
  EXPECT_EQ(bare.grid.dims, grid.dims);
}

TEST(Lut, HeaderFieldsAreLittleEndian) {
  ProjectionLUT lut;
  lut.grid.dims = {2, 1, 1};
  lut.feature_h = 1;
  lut.feature_w = 3;
  lut.num_cameras = 1;
  lut.entries = {-1, 2};
  const std::vector<std::uint8_t> expected{
      'F', 'B', 'L', 'T', 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0,
      3,   0,   0,   0,   1, 0, 0, 0, 0xff, 0xff, 0xff, 0xff, 2, 0, 0, 0};
  EXPECT_EQ(serialize_lut(lut), expected);
}

namespace {

std::vector<std::uint8_t> small_lut_bytes() {
  ProjectionLUT lut;
  lut.grid.dims = {2, 2, 1};
  lut.feature_h = 2;
  lut.feature_w = 2;
  lut.num_cameras = 1;
  lut.entries = {0, 3, -1, 2};
  return serialize_lut(lut);
}

DecodeError::Kind decode_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    deserialize_lut(bytes);
  } catch (const DecodeError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode unexpectedly succeeded";
  return DecodeError::Kind::bad_magic;
}

}  // namespace

TEST(Lut, DecodeErrors) {
  auto b = small_lut_bytes();
  b[0] = 'X';
  EXPECT_EQ(decode_kind(b), DecodeError::Kind::bad_magic);

  b = small_lut_bytes();
  b[4] = 2;
  EXPECT_EQ(decode_kind(b), DecodeError::Kind::version_mismatch);

  b = small_lut_bytes();
  b.pop_back();
  EXPECT_EQ(decode_kind(b), DecodeError::Kind::truncated);
  EXPECT_EQ(decode_kind(std::vector<std::uint8_t>(b.begin(), b.begin() + 10)), DecodeError::Kind::truncated);

  b = small_lut_bytes();
  b[b.size() - 4] = 4;  // == num_cameras * H_f * W_f, one past the max
  EXPECT_EQ(decode_kind(b), DecodeError::Kind::entry_out_of_range);
  b[b.size() - 4] = 0xfe;  // -2
  for (int n = 1; n < 4; ++n) b[b.size() - 4 + n] = 0xff;
  EXPECT_EQ(decode_kind(b), DecodeError::Kind::entry_out_of_range);

  b = small_lut_bytes();
  b.push_back(0);
  EXPECT_EQ(decode_kind(b), DecodeError::Kind::trailing_bytes);

  b = small_lut_bytes();
  b[8] = 0;  // Nx = 0
  EXPECT_EQ(decode_kind(b), DecodeError::Kind::dims_overflow);
}

TEST(Lut, DecodeErrorMessages) {
  auto b = small_lut_bytes();
  b[0] = 'X';
  try {
    deserialize_lut(b);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("bad magic", 0), 0u);
    EXPECT_EQ(e.exit_code(), 6);
  }
  b = small_lut_bytes();
  b[b.size() - 4] = 4;
  try {
    deserialize_lut(b);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_NE(std::string(e.what()).find("entry out of range"), std::string::npos);
  }
}

TEST(Lut, SuppliedGridMustMatchDims) {
  const auto bytes = small_lut_bytes();
  const auto wrong = centered_grid(3, 2, 1, 1.0, 0.0, 1.0);
  EXPECT_THROW(deserialize_lut(bytes, &wrong), ContractError);
}
