// fastbev: build projection tables, run both view-transformation paths,
// benchmark them, and fuse multi-frame BEV tensors.

#include <cstdint>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fastbev/fastbev.hpp"

namespace {

using namespace fastbev;

std::vector<CameraCalibration> load_rig(const std::string& calib) {
  if (calib.empty() || calib == "six_cam_default") return make_nuscenes_like_rig("six_cam_default");
  return load_nuscenes_calibration(calib);
}

std::vector<std::string> split_grids(const std::string& spec) {
  if (spec == "all") return {kGridPresets.begin(), kGridPresets.end()};
  std::vector<std::string> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("no grid preset given");
  return out;
}

void write_bev(const std::string& path, const BevTensor& bev) {
  const std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(bev.nx),
                                        static_cast<std::uint32_t>(bev.ny),
                                        static_cast<std::uint32_t>(bev.cell_channels())};
  write_tensor(path, dims, bev.data);
}

BevTensor read_bev(const std::string& path, const VoxelGridSpec& grid) {
  Tensor t = read_tensor(path);
  if (t.dims.size() != 3 || t.dims[0] != static_cast<std::uint32_t>(grid.dims[0]) ||
      t.dims[1] != static_cast<std::uint32_t>(grid.dims[1]) || t.dims[2] % grid.dims[2] != 0) {
    throw ContractError(path + ": expected a rank-3 Nx x Ny x (Nz*C) tensor matching the grid");
  }
  BevTensor bev;
  bev.nx = grid.dims[0];
  bev.ny = grid.dims[1];
  bev.nz = grid.dims[2];
  bev.channels = static_cast<int>(t.dims[2]) / grid.dims[2];
  bev.data = std::move(t.data);
  return bev;
}

FeatureMapSet read_features(const std::string& path) {
  Tensor t = read_tensor(path);
  if (t.dims.size() != 4) {
    throw ContractError(path + ": expected a rank-4 (cameras, H_f, W_f, C) tensor, got rank " +
                        std::to_string(t.dims.size()));
  }
  FeatureMapSet f;
  f.num_cameras = static_cast<int>(t.dims[0]);
  f.height = static_cast<int>(t.dims[1]);
  f.width = static_cast<int>(t.dims[2]);
  f.channels = static_cast<int>(t.dims[3]);
  f.data = std::move(t.data);
  return f;
}

void print_occupancy(const ProjectionLUT& lut, const std::vector<CameraCalibration>* rig,
                     const std::string& format, std::ostream& os) {
  const OccupancyReport occ = lut_stats(lut);
  auto name = [&](int c) {
    return rig && c < static_cast<int>(rig->size()) && !(*rig)[c].name.empty()
               ? (*rig)[c].name
               : "camera_" + std::to_string(c);
  };
  if (format == "json") {
    nlohmann::json j;
    j["dims"] = lut.grid.dims;
    j["feature_dims"] = {lut.feature_h, lut.feature_w};
    j["cameras"] = lut.num_cameras;
    j["total_voxels"] = occ.total_voxels;
    j["valid_count"] = occ.valid_count;
    j["valid_fraction"] = occ.valid_fraction();
    j["per_camera_claims"] = occ.per_camera_claims;
    std::vector<double> fr;
    for (int c = 0; c < lut.num_cameras; ++c) fr.push_back(occ.camera_fraction(c));
    j["per_camera_fraction"] = fr;
    os << j.dump(2) << '\n';
  } else if (format == "csv") {
    os << "camera,claims,fraction\n";
    for (int c = 0; c < lut.num_cameras; ++c) {
      os << name(c) << ',' << occ.per_camera_claims[c] << ',' << std::setprecision(17)
         << occ.camera_fraction(c) << '\n';
    }
    os << "all," << occ.valid_count << ',' << occ.valid_fraction() << '\n';
  } else {
    os << "LUT " << lut.grid.dims[0] << "x" << lut.grid.dims[1] << "x" << lut.grid.dims[2]
       << ", " << lut.num_cameras << " cameras, features " << lut.feature_h << "x" << lut.feature_w
       << ", " << lut.size_bytes() << " bytes\n";
    os << std::fixed << std::setprecision(4);
    for (int c = 0; c < lut.num_cameras; ++c) {
      os << "  " << std::left << std::setw(18) << name(c) << std::right << std::setw(10)
         << occ.per_camera_claims[c] << "  " << occ.camera_fraction(c) << '\n';
    }
    os << "  " << std::left << std::setw(18) << "valid" << std::right << std::setw(10)
       << occ.valid_count << "  " << occ.valid_fraction() << '\n';
  }
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::trunc);
  if (!file) throw IoError("cannot open " + path + " for writing");
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fast-BEV style view transformation: LUT build, projection, benchmark, fusion"};
  app.set_config("--config", "", "Read flags from a TOML/INI config file; command-line flags win");
  app.require_subcommand(1);

  std::string calib, grid = "200x200x4", out, lut_path, features, format = "table", manifest;
  int stride = 4, channels = 64, frames = 1, iters = 15, warmup = 3, threads = 1;
  std::uint64_t seed = 0;
  std::vector<int> priority;
  bool no_baseline = false;

  auto add_rig = [&](CLI::App* sub) {
    sub->add_option("--calib", calib, "Calibration JSON file (default: six_cam_default preset)");
    sub->add_option("--grid", grid, "Grid preset, e.g. 200x200x4");
    sub->add_option("--stride", stride, "Feature stride in pixels")->check(CLI::PositiveNumber);
    sub->add_option("--priority", priority, "Camera priority order (camera ids)");
  };

  auto* build = app.add_subcommand("build-lut", "Precompute and save the projection table");
  add_rig(build);
  build->add_option("--out", out, "Output .lut file")->required();

  auto* stats = app.add_subcommand("stats", "Occupancy of a projection table");
  add_rig(stats);
  stats->add_option("--lut", lut_path, "Read a saved table instead of building one");
  stats->add_option("--format", format, "table | csv | json")
      ->check(CLI::IsMember({"table", "csv", "json"}));
  stats->add_option("--out", out, "Output file (default stdout)");

  auto* project = app.add_subcommand("project", "Dense LUT projection of feature maps to BEV");
  add_rig(project);
  project->add_option("--lut", lut_path, "Saved table (otherwise built from --calib/--grid)");
  project->add_option("--features", features, "Rank-4 feature tensor (cameras, H_f, W_f, C)");
  project->add_option("--channels", channels, "Channels for random features")->check(CLI::PositiveNumber);
  project->add_option("--seed", seed, "Seed for random features");
  project->add_option("--threads", threads, "Worker threads (1 = single, 0 = all cores)")->check(CLI::NonNegativeNumber);
  project->add_option("--out", out, "Output BEV tensor file")->required();

  auto* bench = app.add_subcommand("bench", "Time the dense LUT path against the sparse baseline");
  bench->add_option("--calib", calib, "Calibration JSON file (default: six_cam_default preset)");
  bench->add_option("--grid", grid, "Grid preset(s): comma list or 'all'");
  bench->add_option("--stride", stride, "Feature stride in pixels")->check(CLI::PositiveNumber);
  bench->add_option("--channels", channels, "Feature channels")->check(CLI::PositiveNumber);
  bench->add_option("--frames", frames, "Frames fused per sample (1, 2 or 4)");
  bench->add_option("--iters", iters, "Measured iterations")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "Warmup iterations")->check(CLI::NonNegativeNumber);
  bench->add_option("--threads", threads,
                    "1 = single thread; N > 1 also times the dense path sharded over N threads; "
                    "0 = sharded over all cores")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--seed", seed, "Seed for the random feature maps");
  bench->add_option("--format", format, "table | csv | json")
      ->check(CLI::IsMember({"table", "csv", "json"}));
  bench->add_option("--out", out, "Report file (default stdout)");
  bench->add_flag("--no-baseline", no_baseline, "Skip timing the sparse baseline (still checked once)");

  auto* fuse = app.add_subcommand("fuse", "Align and concatenate multi-frame BEV tensors");
  fuse->add_option("--calib", calib, "Calibration JSON file (default: six_cam_default preset)");
  fuse->add_option("--grid", grid, "Grid preset");
  fuse->add_option("--frames", frames, "Frames for the synthetic beacon scene (1-4)");
  fuse->add_option("--channels", channels, "Channels for the synthetic beacon scene")
      ->check(CLI::PositiveNumber);
  fuse->add_option("--seed", seed, "Seed for beacon placement");
  fuse->add_option("--manifest", manifest,
                   "JSON manifest of saved frames: {\"frames\": [{\"bev\", \"pose\", \"frame_offset\"}]}");
  fuse->add_option("--format", format, "table | json")->check(CLI::IsMember({"table", "json"}));
  fuse->add_option("--out", out, "Output fused BEV tensor file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    LutBuildConfig lcfg;
    lcfg.feature_stride = stride;
    lcfg.camera_priority = priority;

    if (*build) {
      const auto rig = load_rig(calib);
      const ProjectionLUT lut = build_lut(rig, grid_preset(grid), lcfg);
      write_file_bytes(out, serialize_lut(lut));
      print_occupancy(lut, &rig, "table", std::cout);
      std::cout << "wrote " << out << '\n';
      return 0;
    }

    if (*stats) {
      std::ofstream file;
      std::ostream& os = open_out(out, file);
      if (!lut_path.empty()) {
        const ProjectionLUT lut = deserialize_lut(read_file_bytes(lut_path));
        print_occupancy(lut, nullptr, format, os);
      } else {
        const auto rig = load_rig(calib);
        print_occupancy(build_lut(rig, grid_preset(grid), lcfg), &rig, format, os);
      }
      return 0;
    }

    if (*project) {
      ProjectionLUT lut;
      if (!lut_path.empty()) {
        lut = deserialize_lut(read_file_bytes(lut_path));
      } else {
        lut = build_lut(load_rig(calib), grid_preset(grid), lcfg);
      }
      const FeatureMapSet feats =
          features.empty()
              ? random_feature_maps(lut.num_cameras, lut.feature_h, lut.feature_w, channels, seed)
              : read_features(features);
      const BevTensor bev = project_dense(lut, feats, threads == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency())) : threads);
      write_bev(out, bev);
      std::cout << "wrote " << out << " (" << bev.nx << "x" << bev.ny << "x" << bev.cell_channels()
                << ")\n";
      return 0;
    }

    if (*bench) {
      std::vector<BenchReport> reports;
      for (const auto& g : split_grids(grid)) {
        BenchConfig cfg;
        cfg.grid = g;
        cfg.channels = channels;
        cfg.feature_stride = stride;
        cfg.frames = frames;
        cfg.iterations = iters;
        cfg.warmup = warmup;
        cfg.seed = seed;
        cfg.time_baseline = !no_baseline;
        cfg.thread_mode = threads == 1 ? ThreadMode::single : ThreadMode::sharded;
        cfg.shard_threads = threads > 1 ? threads : 0;
        if (!calib.empty()) {
          cfg.rig = load_rig(calib);
          cfg.rig_label = std::filesystem::path(calib).filename().string();
        }
        reports.push_back(run_benchmark(cfg));
      }
      emit_report(reports, parse_report_format(format), out);
      return 0;
    }

    if (*fuse) {
      const VoxelGridSpec g = grid_preset(grid);
      if (!manifest.empty()) {
        std::ifstream in(manifest);
        if (!in) throw IoError("cannot open manifest " + manifest);
        nlohmann::json doc;
        try {
          doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw ParseError(ParseError::Kind::malformed, manifest + ": " + e.what());
        }
        const auto base = std::filesystem::path(manifest).parent_path();
        std::vector<FrameBundle> bundles;
        std::size_t current = 0;
        try {
          for (const auto& fr : doc.at("frames")) {
            Mat4 m;
            const auto& rows = fr.at("pose");
            for (int r = 0; r < 4; ++r) {
              for (int c = 0; c < 4; ++c) m(r, c) = rows.at(r).at(c).get<double>();
            }
            const auto bev_path = base / fr.at("bev").get<std::string>();
            const int offset = fr.at("frame_offset").get<int>();
            if (offset == 0) current = bundles.size();
            bundles.push_back({read_bev(bev_path.string(), g), EgoPose(m, 0.0), offset});
          }
        } catch (const nlohmann::json::exception& e) {
          throw ParseError(ParseError::Kind::malformed, manifest + ": " + e.what());
        }
        const BevTensor fused = fuse_frames(bundles, current, g);
        if (out.empty()) throw ConfigError("--out is required with --manifest");
        write_bev(out, fused);
        std::cout << "wrote " << out << " (" << fused.frames << " frames, " << fused.cell_channels()
                  << " channels per cell)\n";
        return 0;
      }

      // Synthetic beacon scene: beacons on voxel centers ahead of and beside
      // the rig, ego moving 2 cells per keyframe. A history frame sees the
      // beacon 2 cells further along x per frame back; every one of those
      // cells must be covered by the table or the beacon is never painted.
      const auto rig = load_rig(calib);
      LutBuildConfig lcfg;
      lcfg.feature_stride = stride;
      const ProjectionLUT lut = build_lut(rig, g, lcfg);
      const auto seen = [&](const std::array<int, 3>& c) {
        for (int f = 0; f < frames; ++f) {
          const int i = c[0] + 2 * f;
          if (i >= g.dims[0]) return false;
          if (lut.entries[(static_cast<std::size_t>(i) * g.dims[1] + c[1]) * g.dims[2] + c[2]] < 0) return false;
        }
        return true;
      };
      std::mt19937_64 rng(seed);
      const int margin = 4 * 2 * 3 + 2;
      std::uniform_int_distribution<int> di(g.dims[0] / 2 + 6, g.dims[0] - margin);
      std::uniform_int_distribution<int> dj(g.dims[1] / 4, 3 * g.dims[1] / 4);
      std::uniform_int_distribution<int> dk(0, g.dims[2] - 1);
      std::vector<std::array<int, 3>> cells;
      for (int tries = 0; static_cast<int>(cells.size()) < std::min(channels, 4); ++tries) {
        if (tries == 10000) throw ConfigError("no beacon cell stays in view of the rig over all frames");
        const std::array<int, 3> c{di(rng), dj(rng), dk(rng)};
        if (seen(c)) cells.push_back(c);
      }
      const auto res = run_beacon_fusion(rig, g, frames, channels, 2, cells, true, stride);
      if (!out.empty()) write_bev(out, res.fused);
      bool all = true;
      nlohmann::json j = nlohmann::json::array();
      for (std::size_t b = 0; b < res.tracks.size(); ++b) {
        const auto& t = res.tracks[b];
        all = all && t.tracked();
        j.push_back({{"beacon", b},
                     {"expected_cell", t.expected_cell},
                     {"peak_cells", t.peak_cells},
                     {"score_at_expected", t.score_at_expected},
                     {"tracked", t.tracked()}});
      }
      if (format == "json") {
        std::cout << nlohmann::json{{"frames", frames}, {"beacons", j}, {"all_tracked", all}}.dump(2)
                  << '\n';
      } else {
        for (const auto& e : j) {
          std::cout << "beacon " << e["beacon"] << " expected cell " << e["expected_cell"]
                    << " peak cells " << e["peak_cells"] << (e["tracked"].get<bool>() ? " ok" : " MISSED")
                    << '\n';
        }
        std::cout << (all ? "all beacons aligned across " : "alignment FAILED across ") << frames
                  << " frames\n";
      }
      return all ? 0 : 10;
    }
  } catch (const fastbev::Error& e) {
    std::cerr << "error[" << e.name() << "]: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
