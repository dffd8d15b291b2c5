#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastbev/error.hpp"
#include "fastbev/geometry.hpp"
#include "fastbev/lut.hpp"
#include "fastbev/projection.hpp"

namespace fastbev {

inline constexpr double kQuaternionNormTolerance = 1e-3;

/// One camera as it appears in a calibration document: ego-from-camera
/// translation and unit quaternion (w, x, y, z), row-major intrinsics.
struct CalibrationRecord {
  std::string camera_id;
  std::array<double, 3> translation{};
  std::array<double, 4> rotation{1.0, 0.0, 0.0, 0.0};
  std::array<std::array<double, 3>, 3> intrinsic{};
  int width = 0;
  int height = 0;
};

/// Converts a record to the internal camera-from-ego convention.
inline CameraCalibration calibration_from_record(const CalibrationRecord& rec, int camera_id) {
  const auto& q = rec.rotation;
  const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (std::abs(norm - 1.0) > kQuaternionNormTolerance) {
    throw ParseError(ParseError::Kind::non_unit_quaternion,
                     rec.camera_id + " has norm " + std::to_string(norm));
  }
  const auto& k = rec.intrinsic;
  if (!(k[0][0] > 0.0) || !(k[1][1] > 0.0)) {
    throw ParseError(ParseError::Kind::non_positive_focal, rec.camera_id);
  }
  if (k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0 || k[2][2] != 1.0) {
    throw ParseError(ParseError::Kind::malformed,
                     rec.camera_id + ": camera_intrinsic must be upper-triangular with bottom row (0,0,1)");
  }
  if (rec.width <= 0 || rec.height <= 0) {
    throw ParseError(ParseError::Kind::malformed, rec.camera_id + ": width and height must be positive");
  }

  const Mat3 ego_r = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
  const Vec3 ego_t(rec.translation[0], rec.translation[1], rec.translation[2]);
  const Mat3 r = ego_r.transpose();

  Mat3 km;
  km << k[0][0], k[0][1], k[0][2], k[1][0], k[1][1], k[1][2], k[2][0], k[2][1], k[2][2];

  CameraCalibration calib;
  calib.camera_id = camera_id;
  calib.name = rec.camera_id;
  calib.intrinsics = Intrinsics::from_matrix(km);
  calib.extrinsics = Extrinsics::from_rotation_translation(r, -(r * ego_t));
  calib.image_width = rec.width;
  calib.image_height = rec.height;
  return calib;
}

/// Inverse of calibration_from_record; only rigid, pinhole calibrations
/// have a record form.
inline CalibrationRecord record_from_calibration(const CameraCalibration& calib) {
  if (!calib.extrinsics.is_rigid()) {
    throw GeometryError("camera " + calib.name + ": only rigid extrinsics can be written as a record");
  }
  const Mat4& e = calib.extrinsics.matrix();
  const Mat3 ego_r = e.topLeftCorner<3, 3>().transpose();
  const Vec3 ego_t = -(ego_r * e.topRightCorner<3, 1>());
  Eigen::Quaterniond q(ego_r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;

  CalibrationRecord rec;
  rec.camera_id = calib.name.empty() ? "CAM_" + std::to_string(calib.camera_id) : calib.name;
  rec.translation = {ego_t.x(), ego_t.y(), ego_t.z()};
  rec.rotation = {q.w(), q.x(), q.y(), q.z()};
  const Mat3& k = calib.intrinsics.matrix();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rec.intrinsic[r][c] = k(r, c);
  }
  rec.width = calib.image_width;
  rec.height = calib.image_height;
  return rec;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, std::string_view field,
                                     const std::string& where) {
  const auto it = obj.find(field);
  if (it == obj.end()) {
    throw ParseError(ParseError::Kind::missing_field, where + ": " + std::string(field));
  }
  return *it;
}

template <std::size_t N>
std::array<double, N> number_array(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != N) {
    throw ParseError(ParseError::Kind::malformed, where + ": expected " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t n = 0; n < N; ++n) {
    if (!j[n].is_number()) throw ParseError(ParseError::Kind::malformed, where + ": expected a number");
    out[n] = j[n].get<double>();
  }
  return out;
}

inline CalibrationRecord record_from_json(const nlohmann::json& j, std::size_t index) {
  const std::string where = "camera record " + std::to_string(index);
  if (!j.is_object()) throw ParseError(ParseError::Kind::malformed, where + " is not an object");
  CalibrationRecord rec;
  const auto& id = require(j, "camera_id", where);
  rec.camera_id = id.is_string() ? id.get<std::string>() : id.dump();
  const std::string named = where + " (" + rec.camera_id + ")";
  rec.translation = number_array<3>(require(j, "translation", named), named + " translation");
  rec.rotation = number_array<4>(require(j, "rotation", named), named + " rotation");
  const auto& k = require(j, "camera_intrinsic", named);
  if (!k.is_array() || k.size() != 3) {
    throw ParseError(ParseError::Kind::malformed, named + ": camera_intrinsic must be 3x3");
  }
  for (std::size_t r = 0; r < 3; ++r) rec.intrinsic[r] = number_array<3>(k[r], named + " camera_intrinsic");
  const auto& w = require(j, "width", named);
  const auto& h = require(j, "height", named);
  if (!w.is_number_integer() || !h.is_number_integer()) {
    throw ParseError(ParseError::Kind::malformed, named + ": width and height must be integers");
  }
  rec.width = w.get<int>();
  rec.height = h.get<int>();
  return rec;
}

}  // namespace detail

/// Parses the calibration document: either {"cameras": [record, ...]} or a
/// bare array of records. Camera ids are assigned in document order.
inline std::vector<CameraCalibration> parse_nuscenes_calibration(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(ParseError::Kind::malformed, e.what());
  }
  const nlohmann::json* records = &doc;
  if (doc.is_object()) records = &detail::require(doc, "cameras", "calibration document");
  if (!records->is_array() || records->empty()) {
    throw ParseError(ParseError::Kind::malformed, "calibration document has no camera records");
  }
  std::vector<CameraCalibration> rig;
  for (std::size_t n = 0; n < records->size(); ++n) {
    rig.push_back(calibration_from_record(detail::record_from_json((*records)[n], n), static_cast<int>(n)));
  }
  return rig;
}

inline std::vector<CameraCalibration> load_nuscenes_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_nuscenes_calibration(ss.str());
}

inline std::string to_nuscenes_json(std::span<const CameraCalibration> rig) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& calib : rig) {
    const CalibrationRecord rec = record_from_calibration(calib);
    nlohmann::json k = nlohmann::json::array();
    for (const auto& row : rec.intrinsic) k.push_back(row);
    cams.push_back({{"camera_id", rec.camera_id},
                    {"translation", rec.translation},
                    {"rotation", rec.rotation},
                    {"camera_intrinsic", k},
                    {"width", rec.width},
                    {"height", rec.height}});
  }
  return nlohmann::json{{"cameras", cams}}.dump(2);
}

// Same numbers as data/calib/six_cam_default.json. The ego frame of this rig
// sits at camera height; cameras ring a 5 cm mount, 704x256 images.
inline const std::array<CalibrationRecord, 6>& six_cam_default_records() {
  static const std::array<CalibrationRecord, 6> records{{
      {"CAM_FRONT_LEFT", {0.028679, 0.040958, 0.0},
       {0.6743797232066279, -0.6743797232066279, 0.21263110997159387, -0.21263110997159387},
       {{{500.0, 0.0, 352.0}, {0.0, 500.0, 128.0}, {0.0, 0.0, 1.0}}}, 704, 256},
      {"CAM_FRONT", {0.05, 0.0, 0.0}, {0.5, -0.5, 0.5, -0.5},
       {{{500.0, 0.0, 352.0}, {0.0, 500.0, 128.0}, {0.0, 0.0, 1.0}}}, 704, 256},
      {"CAM_FRONT_RIGHT", {0.028679, -0.040958, 0.0},
       {0.21263110997159387, -0.21263110997159387, 0.6743797232066279, -0.6743797232066279},
       {{{500.0, 0.0, 352.0}, {0.0, 500.0, 128.0}, {0.0, 0.0, 1.0}}}, 704, 256},
      {"CAM_BACK_LEFT", {-0.017101, 0.046985, 0.0},
       {0.696364240320019, -0.696364240320019, -0.1227878039689728, 0.1227878039689728},
       {{{500.0, 0.0, 352.0}, {0.0, 500.0, 128.0}, {0.0, 0.0, 1.0}}}, 704, 256},
      {"CAM_BACK", {-0.05, 0.0, 0.0}, {0.5, -0.5, -0.49999999999999994, 0.49999999999999994},
       {{{420.0, 0.0, 352.0}, {0.0, 420.0, 128.0}, {0.0, 0.0, 1.0}}}, 704, 256},
      {"CAM_BACK_RIGHT", {-0.017101, -0.046985, 0.0},
       {0.1227878039689728, -0.1227878039689728, -0.696364240320019, 0.696364240320019},
       {{{500.0, 0.0, 352.0}, {0.0, 500.0, 128.0}, {0.0, 0.0, 1.0}}}, 704, 256},
  }};
  return records;
}

inline std::vector<CameraCalibration> make_nuscenes_like_rig(std::string_view preset) {
  if (preset != "six_cam_default") {
    throw ConfigError("unknown rig preset '" + std::string(preset) + "'");
  }
  std::vector<CameraCalibration> rig;
  const auto& records = six_cam_default_records();
  for (std::size_t n = 0; n < records.size(); ++n) {
    rig.push_back(calibration_from_record(records[n], static_cast<int>(n)));
  }
  return rig;
}

struct Beacon {
  Vec3 position = Vec3::Zero();  // global frame
  std::vector<float> signature;
};

struct SyntheticScene {
  std::vector<CameraCalibration> rig;
  std::vector<EgoPose> trajectory;
  std::vector<Beacon> beacons;
  int channels = 0;
};

/// One-hot signature on channel `index % channels`.
inline std::vector<float> beacon_signature(int index, int channels) {
  std::vector<float> sig(static_cast<std::size_t>(channels), 0.0f);
  sig[static_cast<std::size_t>(index % channels)] = 1.0f;
  return sig;
}

/// Poses at `dt` spacing along a straight global line; frame 0 is the
/// newest (current) pose and frame f lies f*dt seconds in the past.
inline std::vector<EgoPose> straight_line_trajectory(int frames, double speed, double dt,
                                                     double heading, const Vec3& start = Vec3::Zero()) {
  std::vector<EgoPose> poses;
  for (int f = 0; f < frames; ++f) {
    const double back = -speed * dt * f;
    poses.push_back(EgoPose::planar(start.x() + back * std::cos(heading),
                                    start.y() + back * std::sin(heading), heading, -dt * f));
  }
  return poses;
}

/// Paints each beacon's signature into every camera that sees it at `frame`.
/// When two beacons land on the same feature cell of a camera, the earlier
/// beacon in the list is kept.
inline FeatureMapSet render_beacons(const SyntheticScene& scene, std::size_t frame, int stride) {
  if (frame >= scene.trajectory.size()) throw ConfigError("frame index out of range");
  const RigLayout layout = check_rig(scene.rig, LutBuildConfig{stride, {}, kNearClip});
  FeatureMapSet maps(static_cast<int>(scene.rig.size()), layout.feature_h, layout.feature_w,
                     scene.channels);
  std::vector<bool> written(static_cast<std::size_t>(maps.num_cameras) * maps.height * maps.width, false);
  const Mat4 ego_from_global = inverse_rigid(scene.trajectory[frame].global_from_ego());
  for (const Beacon& b : scene.beacons) {
    if (b.signature.size() != static_cast<std::size_t>(scene.channels)) {
      throw ContractError("beacon signature length does not match scene channels");
    }
    const Vec3 p = (ego_from_global * b.position.homogeneous()).head<3>();
    for (const CameraCalibration& cam : scene.rig) {
      const auto fc = project_point(cam, p, stride);
      if (!fc) continue;
      const std::size_t cell =
          (static_cast<std::size_t>(cam.camera_id) * maps.height + fc->v) * maps.width + fc->u;
      if (written[cell]) continue;
      written[cell] = true;
      std::copy(b.signature.begin(), b.signature.end(), maps.at(cam.camera_id, fc->v, fc->u).begin());
    }
  }
  return maps;
}

}  // namespace fastbev
