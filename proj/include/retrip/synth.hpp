#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "retrip/geometry.hpp"
#include "retrip/scan_io.hpp"

namespace retrip {

enum class Layout { kTown, kCorridor };
enum class Environment { kIndoor, kOutdoor };

const char* environment_name(Environment e);
Environment parse_environment(const std::string& s);  // throws std::invalid_argument

struct ReflectivitySpec {
  double mean = 0.0;
  double spread = 0.0;  // per-surface offset drawn uniformly from [-spread, spread]
};

struct SceneConfig {
  Layout layout = Layout::kTown;
  std::uint64_t seed = 1;
  int num_markers = 30;
  ReflectivitySpec marker_reflectivity{200.0, 10.0};
  ReflectivitySpec background_reflectivity{20.0, 5.0};
  int num_walls = 40;           // buildings (town) or bays (corridor)
  double world_extent = 19.9;  // town: figure-eight lobe radius; corridor: length
  double dynamic_ratio = 0.2;   // fraction of returns replaced by clutter per scan
  double noise_sigma_xyz = 0.01;
  double noise_sigma_r = 2.0;

  void validate() const;
};

struct ScanModel {
  int rings = 32;
  int points_per_ring = 1024;
  double vertical_fov = 45.0;  // degrees, centered on the horizon
  double max_range = 120.0;

  void validate() const;
};

// Bounded rectangle: points c + a*u + b*v with |a| <= half_u, |b| <= half_v.
struct Quad {
  Vec3 center = Vec3::Zero();
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitZ();
  double half_u = 0.5;
  double half_v = 0.5;
  double reflectivity = 0.0;
  int marker = -1;  // index into Scene::markers, or -1
};

// Vertical cylinder.
struct Pole {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.1;
  double z0 = 0.0;
  double z1 = 1.0;
  double reflectivity = 0.0;
};

struct MarkerRecord {
  int id = 0;
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();
  double width = 0.0;
  double height = 0.0;
  double reflectivity = 0.0;
};

struct Scene {
  SceneConfig config;
  double ground_reflectivity = 0.0;
  std::optional<double> ceiling_z;
  double ceiling_reflectivity = 0.0;
  std::vector<Quad> quads;
  std::vector<Pole> poles;
  std::vector<MarkerRecord> markers;
};

// Deterministic in cfg (including seed).
Scene generate_scene(const SceneConfig& cfg);

// Text dump of every primitive at full precision; equal scenes give equal text.
std::string scene_manifest(const Scene& scene);

struct Trajectory {
  std::vector<RigidTransform> poses;  // sensor in world
  std::vector<double> arclen;
};

// Poses sampled every `spacing` meters of nominal path length for the scene's
// layout. Town: two laps of a figure-eight, the second shifted 0.7 m to the
// left of travel. Corridor: out and back, the return 0.3 m to the side.
Trajectory make_trajectory(const SceneConfig& cfg, double spacing, double sensor_height);

struct RenderOptions {
  bool clutter = true;
  bool noise = true;
};

// Per-point provenance of a rendered scan.
struct ScanLabels {
  std::vector<int> marker;    // marker id or -1
  std::vector<char> clutter;  // 1 for dynamic-clutter returns
};

// Ray-casts one scan from `pose`. Points are in the sensor frame and rounded
// to single precision so they survive the binary format unchanged. The RNG
// stream depends only on (scene seed, scan_index).
PointCloud render_scan(const Scene& scene, const RigidTransform& pose, const ScanModel& model,
                       std::uint64_t scan_index, const RenderOptions& opt = {}, ScanLabels* labels = nullptr);

struct Preset {
  std::string name;
  SceneConfig scene;
  ScanModel model;
  Environment env = Environment::kOutdoor;
  double spacing = 0.25;
  double sensor_height = 1.8;
};

// "town", "corridor", "corridor-nomarkers". Throws std::invalid_argument.
Preset make_preset(const std::string& name);
std::vector<std::string> preset_names();

struct BenchmarkInfo {
  std::string preset;
  Environment env = Environment::kOutdoor;
  double spacing = 0.0;
  std::uint64_t seed = 0;
  std::size_t frames = 0;
};

// Writes dir/scans/NNNNNN.rtrp, dir/poses.csv, dir/markers.csv and
// dir/benchmark.cfg. Rendering uses `workers` threads; output does not depend
// on it.
BenchmarkInfo make_benchmark(const Preset& preset, const std::filesystem::path& dir, unsigned workers = 1);

BenchmarkInfo read_benchmark_info(const std::filesystem::path& dir);
std::filesystem::path benchmark_scan_path(const std::filesystem::path& dir, std::size_t frame);

void write_poses_csv(const std::filesystem::path& path, const Trajectory& traj);
void write_markers_csv(const std::filesystem::path& path, const Scene& scene);

}  // namespace retrip
