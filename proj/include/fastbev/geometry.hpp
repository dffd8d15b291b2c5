#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "fastbev/error.hpp"

namespace fastbev {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kNearClip = 0.1;
inline constexpr double kRigidTolerance = 1e-6;

namespace detail {

inline bool has_affine_bottom_row(const Mat4& m) {
  return m(3, 0) == 0.0 && m(3, 1) == 0.0 && m(3, 2) == 0.0 && m(3, 3) == 1.0;
}

inline bool is_orthonormal(const Mat3& r, double tol) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace detail

/// Pinhole pixel matrix K. Calibrations read from disk are upper-triangular
/// with positive focals; image augmentation can fold a rotation into K, so a
/// general affine pixel matrix (bottom row 0 0 1, nonsingular; a mirror flip
/// makes the determinant negative) is also representable through `affine()`.
class Intrinsics {
 public:
  Intrinsics() : k_(Mat3::Identity()) {}

  static Intrinsics pinhole(double fx, double fy, double cx, double cy) {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return from_matrix(k);
  }

  static Intrinsics from_matrix(const Mat3& k) {
    if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0)) {
      throw GeometryError("intrinsics: focal lengths must be positive");
    }
    if (k(1, 0) != 0.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0 || k(2, 2) != 1.0) {
      throw GeometryError("intrinsics: matrix must be upper-triangular with bottom row (0,0,1)");
    }
    return Intrinsics(k);
  }

  static Intrinsics affine(const Mat3& k) {
    if (k(2, 0) != 0.0 || k(2, 1) != 0.0 || k(2, 2) != 1.0) {
      throw GeometryError("intrinsics: bottom row must be (0,0,1)");
    }
    if (k.determinant() == 0.0) {
      throw GeometryError("intrinsics: pixel matrix is singular");
    }
    return Intrinsics(k);
  }

  const Mat3& matrix() const { return k_; }
  double fx() const { return k_(0, 0); }
  double fy() const { return k_(1, 1); }
  double cx() const { return k_(0, 2); }
  double cy() const { return k_(1, 2); }
  bool is_pinhole() const { return k_(0, 1) == 0.0 && k_(1, 0) == 0.0; }

 private:
  explicit Intrinsics(const Mat3& k) : k_(k) {}
  Mat3 k_;
};

/// Camera-from-ego transform (maps ego-frame points into the camera frame).
/// Rigs loaded from calibration are rigid; BEV augmentation produces a
/// similarity or reflection which is kept as a general affine map.
class Extrinsics {
 public:
  Extrinsics() : m_(Mat4::Identity()), rigid_(true) {}

  static Extrinsics rigid(const Mat4& m) {
    if (!detail::has_affine_bottom_row(m)) {
      throw GeometryError("extrinsics: bottom row must be exactly (0,0,0,1)");
    }
    if (!detail::is_orthonormal(m.topLeftCorner<3, 3>(), kRigidTolerance)) {
      throw GeometryError("extrinsics: rotation block is not orthonormal with det +1");
    }
    return Extrinsics(m, true);
  }

  static Extrinsics affine(const Mat4& m) {
    if (!detail::has_affine_bottom_row(m)) {
      throw GeometryError("extrinsics: bottom row must be exactly (0,0,0,1)");
    }
    if (m.topLeftCorner<3, 3>().determinant() == 0.0) {
      throw GeometryError("extrinsics: linear block is singular");
    }
    return Extrinsics(m, false);
  }

  static Extrinsics from_rotation_translation(const Mat3& r, const Vec3& t) {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = r;
    m.topRightCorner<3, 1>() = t;
    return rigid(m);
  }

  const Mat4& matrix() const { return m_; }
  bool is_rigid() const { return rigid_; }

 private:
  Extrinsics(const Mat4& m, bool rigid) : m_(m), rigid_(rigid) {}
  Mat4 m_;
  bool rigid_;
};

struct CameraCalibration {
  int camera_id = 0;
  std::string name;
  Intrinsics intrinsics;
  Extrinsics extrinsics;
  int image_width = 0;
  int image_height = 0;
};

inline void validate(const CameraCalibration& calib) {
  if (calib.image_width <= 0 || calib.image_height <= 0) {
    throw GeometryError("camera " + std::to_string(calib.camera_id) +
                        ": image dimensions must be positive");
  }
}

/// Global-from-ego pose at a timestamp.
class EgoPose {
 public:
  EgoPose() : m_(Mat4::Identity()) {}
  EgoPose(const Mat4& global_from_ego, double timestamp) : m_(global_from_ego), t_(timestamp) {
    if (!detail::has_affine_bottom_row(m_)) {
      throw GeometryError("ego pose: bottom row must be exactly (0,0,0,1)");
    }
    if (!detail::is_orthonormal(m_.topLeftCorner<3, 3>(), kRigidTolerance)) {
      throw GeometryError("ego pose: rotation block is not orthonormal");
    }
  }

  static EgoPose planar(double x, double y, double yaw, double timestamp = 0.0) {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    m(0, 3) = x;
    m(1, 3) = y;
    return EgoPose(m, timestamp);
  }

  const Mat4& global_from_ego() const { return m_; }
  double timestamp() const { return t_; }

 private:
  Mat4 m_;
  double t_ = 0.0;
};

/// BEV lattice. `origin` is the center of cell (0,0,0).
struct VoxelGridSpec {
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::array<double, 3> cell{1.0, 1.0, 1.0};
  std::array<int, 3> dims{1, 1, 1};

  std::int64_t voxel_count() const {
    return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
  }

  Vec3 center(int i, int j, int k) const {
    return {origin[0] + i * cell[0], origin[1] + j * cell[1], origin[2] + k * cell[2]};
  }

  // Flat index with i slowest, then j, then k.
  std::int64_t flat(int i, int j, int k) const {
    return (static_cast<std::int64_t>(i) * dims[1] + j) * dims[2] + k;
  }

  friend bool operator==(const VoxelGridSpec&, const VoxelGridSpec&) = default;
};

inline void validate(const VoxelGridSpec& grid) {
  for (int a = 0; a < 3; ++a) {
    if (!(grid.cell[a] > 0.0)) throw ConfigError("voxel grid: cell sizes must be positive");
    if (grid.dims[a] < 1) throw ConfigError("voxel grid: dims must be >= 1");
  }
}

/// Grid of Nx*Ny*Nz cells centered on the ego origin in x/y, covering
/// [-half_extent_xy, half_extent_xy] and [z_min, z_max].
inline VoxelGridSpec centered_grid(int nx, int ny, int nz, double half_extent_xy, double z_min,
                                   double z_max) {
  VoxelGridSpec g;
  g.dims = {nx, ny, nz};
  g.cell = {2.0 * half_extent_xy / nx, 2.0 * half_extent_xy / ny, (z_max - z_min) / nz};
  g.origin = {-half_extent_xy + 0.5 * g.cell[0], -half_extent_xy + 0.5 * g.cell[1],
              z_min + 0.5 * g.cell[2]};
  validate(g);
  return g;
}

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

struct FeatureCoord {
  int u = 0;
  int v = 0;
  double depth = 0.0;

  friend bool operator==(const FeatureCoord&, const FeatureCoord&) = default;
};

/// Continuous pixel projection with no image-bounds check; absent only when
/// the point is at or behind the near plane.
inline std::optional<PixelCoord> project_to_image(const CameraCalibration& calib,
                                                  const Vec3& p_ego,
                                                  double near_clip = kNearClip) {
  const Mat4& e = calib.extrinsics.matrix();
  const double x = e(0, 0) * p_ego.x() + e(0, 1) * p_ego.y() + e(0, 2) * p_ego.z() + e(0, 3);
  const double y = e(1, 0) * p_ego.x() + e(1, 1) * p_ego.y() + e(1, 2) * p_ego.z() + e(1, 3);
  const double z = e(2, 0) * p_ego.x() + e(2, 1) * p_ego.y() + e(2, 2) * p_ego.z() + e(2, 3);
  if (!(z > near_clip)) return std::nullopt;
  const Mat3& k = calib.intrinsics.matrix();
  const double u = (k(0, 0) * x + k(0, 1) * y) / z + k(0, 2);
  const double v = (k(1, 0) * x + k(1, 1) * y) / z + k(1, 2);
  return PixelCoord{u, v, z};
}

/// Projects an ego-frame point to an integer feature cell: floor(pixel / stride).
/// Absent when behind the near plane or outside [0,W) x [0,H).
inline std::optional<FeatureCoord> project_point(const CameraCalibration& calib,
                                                 const Vec3& p_ego, int feature_stride,
                                                 double near_clip = kNearClip) {
  const auto px = project_to_image(calib, p_ego, near_clip);
  if (!px) return std::nullopt;
  if (!(px->u >= 0.0 && px->u < calib.image_width && px->v >= 0.0 &&
        px->v < calib.image_height)) {
    return std::nullopt;
  }
  return FeatureCoord{static_cast<int>(std::floor(px->u / feature_stride)),
                      static_cast<int>(std::floor(px->v / feature_stride)), px->depth};
}

inline Mat4 compose(const Mat4& a, const Mat4& b) { return a * b; }

/// Inverse of a rigid transform via transpose.
inline Mat4 inverse_rigid(const Mat4& t) {
  Mat4 out = Mat4::Identity();
  const Mat3 rt = t.topLeftCorner<3, 3>().transpose();
  out.topLeftCorner<3, 3>() = rt;
  out.topRightCorner<3, 1>() = -rt * t.topRightCorner<3, 1>();
  return out;
}

inline Mat4 inverse_affine(const Mat4& t) {
  Mat4 out = Mat4::Identity();
  const Mat3 inv = t.topLeftCorner<3, 3>().inverse();
  out.topLeftCorner<3, 3>() = inv;
  out.topRightCorner<3, 1>() = -inv * t.topRightCorner<3, 1>();
  return out;
}

inline bool is_rigid(const Mat4& t, double tol = 1e-5) {
  return detail::has_affine_bottom_row(t) && detail::is_orthonormal(t.topLeftCorner<3, 3>(), tol);
}

/// SE(2) transform: p_current = R(yaw) * p_past + (tx, ty).
struct PlanarPose {
  double tx = 0.0;
  double ty = 0.0;
  double yaw = 0.0;

  friend bool operator==(const PlanarPose&, const PlanarPose&) = default;
};

/// a * b: applies b first, like the matrix product.
inline PlanarPose compose(const PlanarPose& a, const PlanarPose& b) {
  const double c = std::cos(a.yaw);
  const double s = std::sin(a.yaw);
  return {c * b.tx - s * b.ty + a.tx, s * b.tx + c * b.ty + a.ty, a.yaw + b.yaw};
}

/// Current-from-past motion, reduced to the ground plane. Roll and pitch of
/// the relative pose are dropped.
inline PlanarPose relative_planar_pose(const EgoPose& past, const EgoPose& current) {
  const Mat4& gp = past.global_from_ego();
  const Mat4& gc = current.global_from_ego();
  const Mat3 rc_t = gc.topLeftCorner<3, 3>().transpose();
  const Vec3 t = rc_t * (gp.topRightCorner<3, 1>() - gc.topRightCorner<3, 1>());
  // R^T R is only approximately I in floating point; identical rotations
  // must give exactly zero yaw.
  const Mat3 r = gp.topLeftCorner<3, 3>() == gc.topLeftCorner<3, 3>()
                     ? Mat3::Identity()
                     : Mat3(rc_t * gp.topLeftCorner<3, 3>());
  return {t.x(), t.y(), std::atan2(r(1, 0), r(0, 0))};
}

}  // namespace fastbev
