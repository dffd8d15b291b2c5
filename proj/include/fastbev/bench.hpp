#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fastbev/error.hpp"
#include "fastbev/geometry.hpp"
#include "fastbev/lut.hpp"
#include "fastbev/projection.hpp"
#include "fastbev/scene.hpp"
#include "fastbev/temporal.hpp"

namespace fastbev {

// BEV extent shared by every preset: +-50 m in x/y, 6 m of height around the
// rig's mounting plane.
inline constexpr double kPresetHalfExtent = 50.0;
inline constexpr double kPresetZMin = -3.0;
inline constexpr double kPresetZMax = 3.0;

inline constexpr std::array<std::string_view, 5> kGridPresets{
    "200x200x4", "200x200x6", "250x250x6", "300x300x6", "400x400x12"};

inline VoxelGridSpec grid_preset(std::string_view name) {
  if (std::find(kGridPresets.begin(), kGridPresets.end(), name) == kGridPresets.end()) {
    throw ConfigError("unknown grid preset '" + std::string(name) + "'");
  }
  int nx = 0, ny = 0, nz = 0;
  char x1 = 0, x2 = 0;
  std::istringstream in{std::string(name)};
  in >> nx >> x1 >> ny >> x2 >> nz;
  return centered_grid(nx, ny, nz, kPresetHalfExtent, kPresetZMin, kPresetZMax);
}

enum class ThreadMode { single, sharded };

inline std::string_view to_string(ThreadMode m) { return m == ThreadMode::single ? "single" : "sharded"; }

inline ThreadMode parse_thread_mode(std::string_view s) {
  if (s == "single") return ThreadMode::single;
  if (s == "sharded") return ThreadMode::sharded;
  throw ConfigError("thread mode must be 'single' or 'sharded', got '" + std::string(s) + "'");
}

struct BenchConfig {
  std::string grid = "200x200x4";
  int channels = 64;
  int feature_stride = 4;
  int frames = 1;
  int warmup = 3;
  int iterations = 15;
  ThreadMode thread_mode = ThreadMode::single;
  int shard_threads = 0;  // 0 = hardware concurrency
  std::uint64_t seed = 0;
  bool time_baseline = true;
  std::vector<CameraCalibration> rig;  // empty = six_cam_default
  std::string rig_label = "six_cam_default";
};

inline void validate(const BenchConfig& cfg) {
  grid_preset(cfg.grid);
  if (cfg.channels < 1) throw ConfigError("channels must be >= 1");
  if (cfg.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (cfg.warmup < 0) throw ConfigError("warmup must be >= 0");
  if (cfg.frames != 1 && cfg.frames != 2 && cfg.frames != 4) {
    throw ConfigError("frames must be 1, 2 or 4");
  }
  if (cfg.shard_threads < 0) throw ConfigError("thread count must be >= 0");
}

struct LatencyStats {
  double min_ms = 0.0;
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  int samples = 0;
};

/// Median of even-sized samples averages the two middle values; p95 is the
/// nearest-rank percentile.
inline LatencyStats summarize(std::vector<double> ms) {
  if (ms.empty()) throw ConfigError("no latency samples");
  std::sort(ms.begin(), ms.end());
  LatencyStats s;
  s.samples = static_cast<int>(ms.size());
  s.min_ms = ms.front();
  const std::size_t n = ms.size();
  s.median_ms = n % 2 == 1 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(n);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_ms = ms[std::max<std::size_t>(rank, 1) - 1];
  if (n == 1) s.p95_ms = s.median_ms;
  return s;
}

struct BenchReport {
  std::string grid;
  std::array<int, 3> dims{};
  int channels = 0;
  int frames = 1;
  int feature_h = 0;
  int feature_w = 0;
  int num_cameras = 0;
  int iterations = 0;
  int warmup = 0;
  std::uint64_t seed = 0;
  std::string rig;

  LatencyStats dense;
  std::optional<LatencyStats> baseline;
  std::optional<LatencyStats> dense_sharded;
  std::optional<LatencyStats> fusion;
  double speedup = 0.0;  // baseline median / dense median (single thread)

  double lut_build_ms = 0.0;
  std::size_t lut_bytes = 0;
  double valid_fraction = 0.0;
  std::vector<double> camera_claim_fraction;
  std::vector<double> camera_visible_fraction;

  bool equivalence_checked = false;
  std::uint64_t input_checksum = 0;
  std::uint64_t output_checksum = 0;

  std::string cpu_model;
  ThreadMode thread_mode = ThreadMode::single;
  int threads = 1;
  double timer_resolution_ns = 0.0;
  std::vector<std::string> warnings;
};

inline std::uint64_t fnv1a(std::span<const float> values) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  for (std::size_t n = 0; n < values.size_bytes(); ++n) {
    h ^= bytes[n];
    h *= 1099511628211ull;
  }
  return h;
}

inline FeatureMapSet random_feature_maps(int cams, int h, int w, int c, std::uint64_t seed) {
  FeatureMapSet f(cams, h, w, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (float& v : f.data) v = dist(rng);
  return f;
}

inline std::string cpu_model_string() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        auto s = line.substr(colon + 1);
        s.erase(0, s.find_first_not_of(' '));
        return s;
      }
    }
  }
  return "unknown";
}

/// Throws EquivalenceError naming the first voxel where the tensors differ
/// bitwise.
inline void require_identical(const BevTensor& dense, const BevTensor& reference,
                              std::string_view what) {
  if (!dense.same_shape(reference)) {
    throw EquivalenceError(std::string(what) + ": output shapes differ");
  }
  const std::size_t c = static_cast<std::size_t>(dense.channels);
  const std::size_t voxels = dense.data.size() / c;
  for (std::size_t v = 0; v < voxels; ++v) {
    if (std::memcmp(dense.data.data() + v * c, reference.data.data() + v * c, c * sizeof(float)) != 0) {
      const std::size_t k = v % dense.nz;
      const std::size_t j = (v / dense.nz) % dense.ny;
      const std::size_t i = v / (static_cast<std::size_t>(dense.nz) * dense.ny);
      throw EquivalenceError(std::string(what) + ": first mismatch at voxel (" + std::to_string(i) +
                             "," + std::to_string(j) + "," + std::to_string(k) + ")");
    }
  }
}

namespace detail {

template <typename F>
std::vector<double> time_runs(int warmup, int iterations, F&& body) {
  using clock = std::chrono::steady_clock;
  for (int n = 0; n < warmup; ++n) body();
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(iterations));
  for (int n = 0; n < iterations; ++n) {
    const auto t0 = clock::now();
    body();
    const auto t1 = clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return ms;
}

// Keeps the optimizer from discarding timed results.
inline volatile float g_sink = 0.0f;

}  // namespace detail

/// Builds the table, checks both paths agree bitwise on the seeded inputs,
/// then times each path.
inline BenchReport run_benchmark(const BenchConfig& cfg) {
  validate(cfg);
  using clock = std::chrono::steady_clock;
  const std::vector<CameraCalibration> rig =
      cfg.rig.empty() ? make_nuscenes_like_rig("six_cam_default") : cfg.rig;
  const VoxelGridSpec grid = grid_preset(cfg.grid);
  LutBuildConfig lcfg;
  lcfg.feature_stride = cfg.feature_stride;

  BenchReport rep;
  rep.grid = cfg.grid;
  rep.dims = grid.dims;
  rep.channels = cfg.channels;
  rep.frames = cfg.frames;
  rep.iterations = cfg.iterations;
  rep.warmup = cfg.warmup;
  rep.seed = cfg.seed;
  rep.rig = cfg.rig_label;
  rep.cpu_model = cpu_model_string();
  rep.thread_mode = cfg.thread_mode;
  rep.threads = cfg.thread_mode == ThreadMode::single
                    ? 1
                    : (cfg.shard_threads > 0 ? cfg.shard_threads
                                             : std::max(1u, std::thread::hardware_concurrency()));
  rep.timer_resolution_ns =
      1e9 * static_cast<double>(clock::period::num) / static_cast<double>(clock::period::den);
  if (rep.timer_resolution_ns > 1000.0) {
    rep.warnings.push_back("monotonic clock resolution is coarser than 1 us");
  }

  const auto tb0 = clock::now();
  const ProjectionLUT lut = build_lut(rig, grid, lcfg);
  rep.lut_build_ms = std::chrono::duration<double, std::milli>(clock::now() - tb0).count();
  rep.lut_bytes = lut.size_bytes();
  rep.feature_h = lut.feature_h;
  rep.feature_w = lut.feature_w;
  rep.num_cameras = lut.num_cameras;
  const OccupancyReport occ = lut_stats(lut);
  rep.valid_fraction = occ.valid_fraction();
  for (int c = 0; c < lut.num_cameras; ++c) rep.camera_claim_fraction.push_back(occ.camera_fraction(c));

  const FeatureMapSet feats =
      random_feature_maps(lut.num_cameras, lut.feature_h, lut.feature_w, cfg.channels, cfg.seed);
  rep.input_checksum = fnv1a(feats.data);

  {
    const BevTensor dense = project_dense(lut, feats);
    {
      const SparseVoxelSet sparse = project_sparse_baseline(rig, grid, lcfg, feats);
      for (int c = 0; c < lut.num_cameras; ++c) {
        rep.camera_visible_fraction.push_back(static_cast<double>(sparse.mask_count(c)) /
                                              static_cast<double>(grid.voxel_count()));
      }
      const std::vector<int> priority = check_rig(rig, lcfg).priority;
      require_identical(dense, aggregate(sparse, priority), "dense vs sparse baseline");
    }
    if (cfg.thread_mode == ThreadMode::sharded) {
      require_identical(project_dense(lut, feats, rep.threads), dense, "sharded vs single-thread dense");
    }
    rep.output_checksum = fnv1a(dense.data);
    rep.equivalence_checked = true;
  }

  // Steady-state timing: each path writes into buffers it owns across
  // iterations, as a deployed pipeline would.
  {
    BevTensor out;
    rep.dense = summarize(detail::time_runs(cfg.warmup, cfg.iterations, [&] {
      project_dense_into(lut, feats, out);
      detail::g_sink = out.data[out.data.size() / 2];
    }));
  }

  if (cfg.time_baseline) {
    const std::vector<int> priority = check_rig(rig, lcfg).priority;
    SparseVoxelSet scratch;
    BevTensor out;
    rep.baseline = summarize(detail::time_runs(cfg.warmup, cfg.iterations, [&] {
      project_sparse_baseline_into(rig, grid, lcfg, feats, scratch);
      aggregate_into(scratch, priority, out);
      detail::g_sink = out.data[out.data.size() / 2];
    }));
    rep.speedup = rep.baseline->median_ms / rep.dense.median_ms;
  }

  if (cfg.thread_mode == ThreadMode::sharded) {
    BevTensor out;
    rep.dense_sharded = summarize(detail::time_runs(cfg.warmup, cfg.iterations, [&] {
      project_dense_into(lut, feats, out, rep.threads);
      detail::g_sink = out.data[out.data.size() / 2];
    }));
  }

  if (cfg.frames > 1) {
    // History frames along a straight 0.5 s-spaced trajectory at 5 m/s.
    const auto poses = straight_line_trajectory(cfg.frames, 5.0, 0.5, 0.0);
    std::vector<FrameBundle> bundles;
    for (int f = 0; f < cfg.frames; ++f) {
      bundles.push_back({project_dense(lut, random_feature_maps(lut.num_cameras, lut.feature_h,
                                                                lut.feature_w, cfg.channels,
                                                                cfg.seed + 1 + f)),
                         poses[static_cast<std::size_t>(f)], f});
    }
    rep.fusion = summarize(detail::time_runs(cfg.warmup, cfg.iterations, [&] {
      const BevTensor out = fuse_frames(bundles, 0, grid);
      detail::g_sink = out.data[out.data.size() / 2];
    }));
  }
  return rep;
}

enum class ReportFormat { table, csv, json };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "table") return ReportFormat::table;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ConfigError("format must be table, csv or json, got '" + std::string(s) + "'");
}

inline constexpr std::array<std::string_view, 28> kCsvColumns{
    "grid",           "nx",
    "ny",             "nz",
    "channels",       "frames",
    "cameras",        "thread_mode",
    "threads",        "iterations",
    "dense_min_ms",   "dense_median_ms",
    "dense_mean_ms",  "dense_p95_ms",
    "baseline_min_ms", "baseline_median_ms",
    "baseline_mean_ms", "baseline_p95_ms",
    "speedup",        "sharded_median_ms",
    "fusion_median_ms", "lut_build_ms",
    "lut_bytes",      "valid_fraction",
    "mean_claim_fraction", "mean_visible_fraction",
    "input_checksum", "cpu_model"};

namespace detail {

inline nlohmann::json stats_json(const LatencyStats& s) {
  return {{"min_ms", s.min_ms}, {"median_ms", s.median_ms}, {"mean_ms", s.mean_ms},
          {"p95_ms", s.p95_ms}, {"samples", s.samples}};
}

inline double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace detail

inline nlohmann::json report_json(const BenchReport& r) {
  nlohmann::json j;
  j["grid"] = r.grid;
  j["dims"] = r.dims;
  j["channels"] = r.channels;
  j["frames"] = r.frames;
  j["feature_dims"] = {r.feature_h, r.feature_w};
  j["cameras"] = r.num_cameras;
  j["rig"] = r.rig;
  j["iterations"] = r.iterations;
  j["warmup"] = r.warmup;
  j["seed"] = r.seed;
  j["dense"] = detail::stats_json(r.dense);
  j["baseline"] = r.baseline ? detail::stats_json(*r.baseline) : nlohmann::json(nullptr);
  j["dense_sharded"] = r.dense_sharded ? detail::stats_json(*r.dense_sharded) : nlohmann::json(nullptr);
  j["fusion"] = r.fusion ? detail::stats_json(*r.fusion) : nlohmann::json(nullptr);
  j["speedup"] = r.speedup;
  j["lut_build_ms"] = r.lut_build_ms;
  j["lut_bytes"] = r.lut_bytes;
  j["occupancy"] = {{"valid_fraction", r.valid_fraction},
                    {"camera_claim_fraction", r.camera_claim_fraction},
                    {"camera_visible_fraction", r.camera_visible_fraction}};
  j["equivalence_checked"] = r.equivalence_checked;
  j["input_checksum"] = detail::hex64(r.input_checksum);
  j["output_checksum"] = detail::hex64(r.output_checksum);
  j["environment"] = {{"cpu_model", r.cpu_model},
                      {"thread_mode", std::string(to_string(r.thread_mode))},
                      {"threads", r.threads},
                      {"timer_resolution_ns", r.timer_resolution_ns}};
  j["warnings"] = r.warnings;
  return j;
}

inline void emit_report(std::span<const BenchReport> reports, ReportFormat format, std::ostream& os) {
  if (format == ReportFormat::json) {
    if (reports.size() == 1) {
      os << report_json(reports.front()).dump(2) << '\n';
    } else {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& r : reports) arr.push_back(report_json(r));
      os << arr.dump(2) << '\n';
    }
    return;
  }

  if (format == ReportFormat::csv) {
    for (std::size_t c = 0; c < kCsvColumns.size(); ++c) os << (c ? "," : "") << kCsvColumns[c];
    os << '\n';
    const auto opt = [](const std::optional<LatencyStats>& s, double LatencyStats::*m) {
      return s ? std::to_string((*s).*m) : std::string();
    };
    for (const auto& r : reports) {
      os << r.grid << ',' << r.dims[0] << ',' << r.dims[1] << ',' << r.dims[2] << ',' << r.channels
         << ',' << r.frames << ',' << r.num_cameras << ',' << to_string(r.thread_mode) << ','
         << r.threads << ',' << r.iterations << ',' << r.dense.min_ms << ',' << r.dense.median_ms
         << ',' << r.dense.mean_ms << ',' << r.dense.p95_ms << ','
         << opt(r.baseline, &LatencyStats::min_ms) << ',' << opt(r.baseline, &LatencyStats::median_ms)
         << ',' << opt(r.baseline, &LatencyStats::mean_ms) << ','
         << opt(r.baseline, &LatencyStats::p95_ms) << ',' << r.speedup << ','
         << opt(r.dense_sharded, &LatencyStats::median_ms) << ','
         << opt(r.fusion, &LatencyStats::median_ms) << ',' << r.lut_build_ms << ',' << r.lut_bytes
         << ',' << r.valid_fraction << ',' << detail::mean_of(r.camera_claim_fraction) << ','
         << detail::mean_of(r.camera_visible_fraction) << ',' << detail::hex64(r.input_checksum)
         << ',' << detail::csv_quote(r.cpu_model) << '\n';
    }
    return;
  }

  const auto row = [&os](std::string_view label, const LatencyStats& s) {
    os << "  " << std::left << std::setw(28) << label << std::right << std::fixed
       << std::setprecision(3) << std::setw(10) << s.min_ms << std::setw(10) << s.median_ms
       << std::setw(10) << s.mean_ms << std::setw(10) << s.p95_ms << '\n';
  };
  for (const auto& r : reports) {
    os << "View transformation latency: grid " << r.grid << ", C=" << r.channels << ", "
       << r.num_cameras << " cameras (" << r.rig << "), features " << r.feature_h << "x"
       << r.feature_w << '\n';
    os << "  cpu: " << r.cpu_model << ", thread mode: " << to_string(r.thread_mode);
    if (r.thread_mode == ThreadMode::sharded) os << " (" << r.threads << " threads)";
    os << ", " << r.iterations << " iterations after " << r.warmup << " warmup\n";
    os << "  " << std::left << std::setw(28) << "path" << std::right << std::setw(10) << "min"
       << std::setw(10) << "median" << std::setw(10) << "mean" << std::setw(10) << "p95"
       << "   (ms)\n";
    if (r.baseline) row("sparse baseline (per-camera)", *r.baseline);
    row("dense LUT gather", r.dense);
    if (r.dense_sharded) row("dense LUT gather (sharded)", *r.dense_sharded);
    if (r.fusion) row("temporal fusion F=" + std::to_string(r.frames), *r.fusion);
    if (r.baseline) {
      os << "  speedup: " << std::fixed << std::setprecision(1) << r.speedup << "x\n";
    }
    os << "  LUT: built in " << std::fixed << std::setprecision(1) << r.lut_build_ms << " ms, "
       << std::setprecision(1) << static_cast<double>(r.lut_bytes) / 1024.0 << " KiB\n";
    os << "  occupancy: valid " << std::setprecision(1) << 100.0 * r.valid_fraction
       << "%, per-camera claimed";
    for (double f : r.camera_claim_fraction) os << ' ' << std::setprecision(1) << 100.0 * f << '%';
    os << ", visible";
    for (double f : r.camera_visible_fraction) os << ' ' << std::setprecision(1) << 100.0 * f << '%';
    os << '\n';
    os << "  equivalence: " << (r.equivalence_checked ? "checked bitwise" : "NOT checked")
       << ", input checksum " << detail::hex64(r.input_checksum) << '\n';
    for (const auto& w : r.warnings) os << "  warning: " << w << '\n';
    os.unsetf(std::ios::floatfield);
    os << std::setprecision(6);
  }
}

inline void emit_report(std::span<const BenchReport> reports, ReportFormat format,
                        const std::string& path) {
  if (path.empty() || path == "-") {
    emit_report(reports, format, std::cout);
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  emit_report(reports, format, out);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace fastbev
