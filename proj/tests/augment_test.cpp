#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "test_support.hpp"

using namespace fastbev;

namespace {

Vec3 point_in_front(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> x(2.0, 40.0), y(-15.0, 15.0), z(-2.0, 2.0);
  return {x(rng), y(rng), z(rng)};
}

const CameraCalibration& front() {
  static const auto rig = make_nuscenes_like_rig("six_cam_default");
  return rig[1];
}

}  // namespace

TEST(Augment, IdentityLeavesCalibrationUnchanged) {
  const auto res = apply_image_aug(ImageAug{}, front());
  EXPECT_EQ(res.calib.intrinsics.matrix(), front().intrinsics.matrix());
  EXPECT_EQ(res.calib.image_width, front().image_width);
  EXPECT_EQ(res.calib.image_height, front().image_height);
  EXPECT_FALSE(res.warning);

  const auto rig = make_nuscenes_like_rig("six_cam_default");
  const std::vector<Box3D> boxes{{Vec3(5, 1, 0), Vec3(4, 2, 1.5), 0.3, 1.0, 0.5}};
  const auto [rig2, boxes2] = apply_bev_aug(BevAug{}, rig, boxes);
  for (std::size_t c = 0; c < rig.size(); ++c) EXPECT_EQ(rig2[c].extrinsics.matrix(), rig[c].extrinsics.matrix());
  EXPECT_EQ(boxes2[0].center, boxes[0].center);
  EXPECT_EQ(boxes2[0].yaw, boxes[0].yaw);
}

TEST(Augment, HorizontalFlipMirrorsPixels) {
  ImageAug flip;
  flip.flip_horizontal = true;
  const auto res = apply_image_aug(flip, front());
  const int w = front().image_width;
  std::mt19937_64 rng(1);
  int checked = 0;
  for (int n = 0; n < 500; ++n) {
    const Vec3 p = point_in_front(rng);
    const auto a = project_to_image(front(), p);
    const auto b = project_to_image(res.calib, p);
    ASSERT_TRUE(a && b);
    EXPECT_NEAR(b->u, w - 1 - a->u, 1e-9);
    EXPECT_NEAR(b->v, a->v, 1e-9);
    ++checked;
  }
  EXPECT_EQ(checked, 500);
}

TEST(Augment, DoubleScaleMatchesDoubleStride) {
  ImageAug twice;
  twice.scale = 2.0;
  const auto res = apply_image_aug(twice, front());
  EXPECT_EQ(res.calib.image_width, 2 * front().image_width);
  std::mt19937_64 rng(2);
  for (int n = 0; n < 500; ++n) {
    const Vec3 p = point_in_front(rng);
    const auto a = project_to_image(front(), p);
    const auto b = project_to_image(res.calib, p);
    ASSERT_TRUE(a && b);
    EXPECT_NEAR(b->u, 2 * a->u, 1e-9);
    EXPECT_NEAR(b->v, 2 * a->v, 1e-9);
    const auto fa = project_point(front(), p, 4);
    const auto fb = project_point(res.calib, p, 8);
    ASSERT_EQ(fa.has_value(), fb.has_value());
    if (fa) {
      EXPECT_EQ(fa->u, fb->u);
      EXPECT_EQ(fa->v, fb->v);
    }
  }
}

TEST(Augment, ImageAugMatchesMatrixOnRandomAugs) {
  std::mt19937_64 rng(3);
  const AugRanges ranges;
  for (int n = 0; n < 1000; ++n) {
    ImageAug aug = sample_image_aug(rng, ranges);
    aug.crop_du = 10.0 * (n % 3);
    const Mat3 a = aug.matrix(front().image_width, front().image_height);
    const auto res = apply_image_aug(aug, front());
    const Vec3 p = point_in_front(rng);
    const auto before = project_to_image(front(), p);
    const auto after = project_to_image(res.calib, p);
    ASSERT_TRUE(before && after);
    const Vec3 h = a * Vec3(before->u, before->v, 1.0);
    EXPECT_NEAR(after->u, h.x() / h.z(), 1e-4);
    EXPECT_NEAR(after->v, h.y() / h.z(), 1e-4);
  }
}

TEST(Augment, PrincipalPointOutsideIsFlagged) {
  ImageAug crop;
  crop.crop_du = 500.0;  // cx = 352 moves to -148
  const auto res = apply_image_aug(crop, front());
  ASSERT_TRUE(res.warning);
  EXPECT_NE(res.warning->find("principal point"), std::string::npos);
}

TEST(Augment, InvalidImageAugRejected) {
  ImageAug bad;
  bad.scale = 0.0;
  EXPECT_THROW(apply_image_aug(bad, front()), ConfigError);
  ImageAug empty;
  empty.crop_du = 10000.0;
  EXPECT_THROW(apply_image_aug(empty, front()), ConfigError);
}

TEST(Augment, BevAugKeepsProjectionsConsistent) {
  const auto rig = make_nuscenes_like_rig("six_cam_default");
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> c(-40.0, 40.0), z(-2.0, 2.0);
  const AugRanges ranges;
  int compared = 0;
  for (int n = 0; n < 500; ++n) {
    const BevAug aug = sample_bev_aug(rng, ranges);
    const auto [rig2, boxes] = apply_bev_aug(aug, rig, {});
    const Mat4 b = aug.matrix();
    const Vec3 p(c(rng), c(rng), z(rng));
    const Vec3 bp = (b * p.homogeneous()).head<3>();
    for (std::size_t cam = 0; cam < rig.size(); ++cam) {
      const auto before = project_to_image(rig[cam], p);
      const auto after = project_to_image(rig2[cam], bp);
      ASSERT_EQ(before.has_value(), after.has_value());
      if (!before) continue;
      EXPECT_NEAR(after->u, before->u, 1e-4);
      EXPECT_NEAR(after->v, before->v, 1e-4);
      ++compared;
    }
  }
  EXPECT_GT(compared, 500);
}

TEST(Augment, YawRotationMovesBoxes) {
  BevAug aug;
  aug.rotation = 0.4;
  const std::vector<Box3D> boxes{{Vec3(10, 0, 0.5), Vec3(4, 2, 1.5), 0.1, 2.0, 0.0}};
  const auto [rig, out] = apply_bev_aug(aug, {}, boxes);
  EXPECT_NEAR(out[0].center.x(), 10 * std::cos(0.4), 1e-12);
  EXPECT_NEAR(out[0].center.y(), 10 * std::sin(0.4), 1e-12);
  EXPECT_NEAR(out[0].center.z(), 0.5, 1e-12);
  EXPECT_NEAR(out[0].yaw, 0.5, 1e-12);
  EXPECT_NEAR(out[0].vx, 2 * std::cos(0.4), 1e-12);
  EXPECT_NEAR(out[0].vy, 2 * std::sin(0.4), 1e-12);
}

TEST(Augment, FlipsMirrorBoxes) {
  BevAug fx;
  fx.flip_x = true;
  const std::vector<Box3D> boxes{{Vec3(3, 4, 0), Vec3(4, 2, 1.5), 0.3, 1.0, 1.0}};
  const auto [r1, a] = apply_bev_aug(fx, {}, boxes);
  EXPECT_NEAR(a[0].center.x(), -3, 1e-12);
  EXPECT_NEAR(a[0].yaw, std::numbers::pi - 0.3, 1e-12);
  EXPECT_NEAR(a[0].vx, -1.0, 1e-12);
  const Mat3 lin = fx.matrix().topLeftCorner<3, 3>();
  EXPECT_LT(lin.determinant(), 0.0);
}

TEST(Augment, DoubleFlipIsIdentity) {
  const auto rig = make_nuscenes_like_rig("six_cam_default");
  BevAug f;
  f.flip_x = true;
  f.flip_y = true;
  const auto once = apply_bev_aug(f, rig, {}).first;
  const auto twice = apply_bev_aug(f, once, {}).first;
  for (std::size_t c = 0; c < rig.size(); ++c) {
    EXPECT_LT((twice[c].extrinsics.matrix() - rig[c].extrinsics.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  }
  ImageAug h;
  h.flip_horizontal = true;
  const auto i1 = apply_image_aug(h, front()).calib;
  const auto i2 = apply_image_aug(h, i1).calib;
  EXPECT_LT((i2.intrinsics.matrix() - front().intrinsics.matrix()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Augment, BoxVolumeScalesAsCube) {
  std::mt19937_64 rng(5);
  for (int n = 0; n < 100; ++n) {
    const BevAug aug = sample_bev_aug(rng, AugRanges{});
    const Box3D box{Vec3(1, 2, 0), Vec3(4.1, 1.9, 1.6), 0.2, 0.0, 0.0};
    const auto out = apply_bev_aug(aug, {}, std::vector<Box3D>{box}).second[0];
    const double v0 = box.size.prod(), v1 = out.size.prod();
    EXPECT_NEAR(v1, v0 * std::pow(aug.scale, 3), 1e-9);
  }
}

TEST(Augment, SamplingRespectsRanges) {
  std::mt19937_64 rng(6);
  const AugRanges r;
  int flips = 0;
  for (int n = 0; n < 2000; ++n) {
    const ImageAug a = sample_image_aug(rng, r);
    EXPECT_LE(std::abs(a.rotation), 5.0 * std::numbers::pi / 180 + 1e-12);
    EXPECT_GE(a.scale, 0.9);
    EXPECT_LE(a.scale, 1.1);
    flips += a.flip_horizontal;
    const BevAug b = sample_bev_aug(rng, r);
    EXPECT_LE(std::abs(b.rotation), 22.5 * std::numbers::pi / 180 + 1e-12);
    EXPECT_GE(b.scale, 0.95);
    EXPECT_LE(b.scale, 1.05);
  }
  EXPECT_GT(flips, 800);
  EXPECT_LT(flips, 1200);
}

// An augmented rig goes through the same LUT path as a clean one.
TEST(Augment, AugmentedRigBuildsLut) {
  const auto rig = make_nuscenes_like_rig("six_cam_default");
  BevAug aug;
  aug.rotation = 0.2;
  aug.flip_y = true;
  const auto rig2 = apply_bev_aug(aug, rig, {}).first;
  const auto grid = centered_grid(40, 40, 2, 50.0, -3.0, 3.0);
  const auto lut = build_lut(rig2, grid, {});
  const auto feats = random_feature_maps(6, lut.feature_h, lut.feature_w, 4, 1);
  EXPECT_EQ(project_dense(lut, feats), aggregate(project_sparse_baseline(rig2, grid, {}, feats), {}));
}
