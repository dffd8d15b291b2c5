#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fastbev/geometry.hpp"

namespace fastbev {

/// Image-space augmentation, applied as: scale about the pixel origin, crop
/// (shift by -crop offset), horizontal flip on the output width, then
/// rotation about the output image center.
struct ImageAug {
  bool flip_horizontal = false;
  double rotation = 0.0;  // radians
  double scale = 1.0;
  double crop_du = 0.0;
  double crop_dv = 0.0;
  // Output image size; when unset it is round(W*scale - du) x round(H*scale - dv).
  std::optional<std::pair<int, int>> output_size;

  std::pair<int, int> output_dims(int width, int height) const {
    if (output_size) return *output_size;
    return {static_cast<int>(std::lround(width * scale - crop_du)),
            static_cast<int>(std::lround(height * scale - crop_dv))};
  }

  /// The 3x3 homogeneous pixel transform A (p_out = A * p_in).
  Mat3 matrix(int width, int height) const {
    const auto [w, h] = output_dims(width, height);
    Mat3 s = Mat3::Identity();
    s(0, 0) = scale;
    s(1, 1) = scale;
    Mat3 crop = Mat3::Identity();
    crop(0, 2) = -crop_du;
    crop(1, 2) = -crop_dv;
    Mat3 flip = Mat3::Identity();
    if (flip_horizontal) {
      flip(0, 0) = -1.0;
      flip(0, 2) = w - 1.0;
    }
    const double cu = 0.5 * (w - 1.0);
    const double cv = 0.5 * (h - 1.0);
    const double c = std::cos(rotation);
    const double sn = std::sin(rotation);
    Mat3 rot = Mat3::Identity();
    rot(0, 0) = c;
    rot(0, 1) = -sn;
    rot(1, 0) = sn;
    rot(1, 1) = c;
    rot(0, 2) = cu - c * cu + sn * cv;
    rot(1, 2) = cv - sn * cu - c * cv;
    return rot * flip * crop * s;
  }
};

/// BEV-space augmentation of the ego frame: p' = B p with
/// B = scale * Rz(rotation) * diag(flip_x ? -1 : 1, flip_y ? -1 : 1, 1).
/// flip_x negates the x coordinate, flip_y negates y.
struct BevAug {
  bool flip_x = false;
  bool flip_y = false;
  double rotation = 0.0;  // radians about ego z
  double scale = 1.0;

  Mat4 matrix() const {
    Mat3 f = Mat3::Identity();
    if (flip_x) f(0, 0) = -1.0;
    if (flip_y) f(1, 1) = -1.0;
    Mat4 b = Mat4::Identity();
    b.topLeftCorner<3, 3>() = scale * Eigen::AngleAxisd(rotation, Vec3::UnitZ()).toRotationMatrix() * f;
    return b;
  }
};

struct Box3D {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // l, w, h
  double yaw = 0.0;
  double vx = 0.0;
  double vy = 0.0;
};

struct ImageAugResult {
  CameraCalibration calib;
  std::optional<std::string> warning;
};

/// Rewrites K' = A K for an augmented image; extrinsics stay as they are.
inline ImageAugResult apply_image_aug(const ImageAug& aug, const CameraCalibration& calib) {
  if (!(aug.scale > 0.0)) throw ConfigError("image augmentation scale must be positive");
  const auto [w, h] = aug.output_dims(calib.image_width, calib.image_height);
  if (w <= 0 || h <= 0) throw ConfigError("image augmentation leaves an empty image");

  ImageAugResult out{calib, std::nullopt};
  const Mat3 k = aug.matrix(calib.image_width, calib.image_height) * calib.intrinsics.matrix();
  out.calib.intrinsics = Intrinsics::affine(k);
  out.calib.image_width = w;
  out.calib.image_height = h;
  if (!(k(0, 2) >= 0.0 && k(0, 2) < w && k(1, 2) >= 0.0 && k(1, 2) < h)) {
    out.warning = "camera " + std::to_string(calib.camera_id) +
                  ": principal point lies outside the augmented image";
  }
  return out;
}

/// Moves the scene by B: extrinsics become E * B^-1 so that projecting B p
/// under the new rig matches projecting p under the old one. Boxes move with
/// the scene; sizes and velocities scale with aug.scale.
inline std::pair<std::vector<CameraCalibration>, std::vector<Box3D>> apply_bev_aug(
    const BevAug& aug, std::span<const CameraCalibration> rig, std::span<const Box3D> boxes) {
  if (!(aug.scale > 0.0)) throw ConfigError("BEV augmentation scale must be positive");
  const Mat4 b = aug.matrix();
  const Mat4 b_inv = inverse_affine(b);

  std::vector<CameraCalibration> rig_out(rig.begin(), rig.end());
  for (CameraCalibration& cam : rig_out) {
    cam.extrinsics = Extrinsics::affine(cam.extrinsics.matrix() * b_inv);
  }

  const Mat3 lin = b.topLeftCorner<3, 3>();
  std::vector<Box3D> boxes_out;
  boxes_out.reserve(boxes.size());
  for (const Box3D& box : boxes) {
    Box3D o = box;
    o.center = lin * box.center + b.topRightCorner<3, 1>();
    o.size = box.size * aug.scale;
    const Vec3 heading = lin * Vec3(std::cos(box.yaw), std::sin(box.yaw), 0.0);
    o.yaw = std::atan2(heading.y(), heading.x());
    const Vec3 vel = lin * Vec3(box.vx, box.vy, 0.0);
    o.vx = vel.x();
    o.vy = vel.y();
    boxes_out.push_back(o);
  }
  return {std::move(rig_out), std::move(boxes_out)};
}

/// Sampling ranges. Defaults: image rotation +-5 deg, scale [0.9, 1.1],
/// flip p = 0.5; BEV rotation +-22.5 deg, scale [0.95, 1.05], per-axis flip p = 0.5.
struct AugRanges {
  double image_rotation_deg = 5.0;
  double image_scale_min = 0.9;
  double image_scale_max = 1.1;
  double image_flip_prob = 0.5;
  double bev_rotation_deg = 22.5;
  double bev_scale_min = 0.95;
  double bev_scale_max = 1.05;
  double bev_flip_prob = 0.5;
};

inline ImageAug sample_image_aug(std::mt19937_64& rng, const AugRanges& r) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> rot(-r.image_rotation_deg * kDeg, r.image_rotation_deg * kDeg);
  std::uniform_real_distribution<double> scale(r.image_scale_min, r.image_scale_max);
  std::bernoulli_distribution flip(r.image_flip_prob);
  ImageAug a;
  a.scale = scale(rng);
  a.rotation = rot(rng);
  a.flip_horizontal = flip(rng);
  return a;
}

inline BevAug sample_bev_aug(std::mt19937_64& rng, const AugRanges& r) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> rot(-r.bev_rotation_deg * kDeg, r.bev_rotation_deg * kDeg);
  std::uniform_real_distribution<double> scale(r.bev_scale_min, r.bev_scale_max);
  std::bernoulli_distribution flip(r.bev_flip_prob);
  BevAug a;
  a.rotation = rot(rng);
  a.scale = scale(rng);
  a.flip_x = flip(rng);
  a.flip_y = flip(rng);
  return a;
}

}  // namespace fastbev
