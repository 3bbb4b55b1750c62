#include "retrip/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace retrip {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal(double sigma) { return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(gen_) : 0.0; }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }  // inclusive
  bool coin(double p) { return uniform(0.0, 1.0) < p; }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

double surface_value(Rng& rng, const ReflectivitySpec& s) {
  return std::max(0.0, s.mean + (s.spread > 0.0 ? rng.uniform(-s.spread, s.spread) : 0.0));
}

using Polyline = std::vector<Eigen::Vector2d>;

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * ab - p).norm();
}

// Closest point on the polyline to p.
Eigen::Vector2d closest_on_path(const Eigen::Vector2d& p, const Polyline& path) {
  Eigen::Vector2d best = path.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Eigen::Vector2d ab = path[i + 1] - path[i];
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - path[i]).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Eigen::Vector2d c = path[i] + t * ab;
    const double d = (c - p).norm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

double path_distance(const Eigen::Vector2d& p, const Polyline& path) { return (closest_on_path(p, path) - p).norm(); }

// Figure-eight of two circular lobes of radius r touching at the origin, both
// passing it heading +y.
constexpr int kLobeSegments = 256;

Polyline town_lap(double r) {
  Polyline out;
  for (int i = 0; i <= kLobeSegments; ++i) {
    const double th = kPi - 2.0 * kPi * i / kLobeSegments;
    out.emplace_back(r + r * std::cos(th), r * std::sin(th));
  }
  for (int i = 1; i <= kLobeSegments; ++i) {
    const double th = 2.0 * kPi * i / kLobeSegments;
    out.emplace_back(-r + r * std::cos(th), r * std::sin(th));
  }
  out.front() = out.back() = Eigen::Vector2d::Zero();
  out[kLobeSegments] = Eigen::Vector2d::Zero();
  return out;
}

Quad vertical_quad(const Vec3& center, const Vec3& u, double half_u, double half_v, double refl) {
  Quad q;
  q.center = center;
  q.u = u;
  q.v = Vec3::UnitZ();
  q.half_u = half_u;
  q.half_v = half_v;
  q.reflectivity = refl;
  return q;
}

Vec3 quad_normal(const Quad& q) { return q.u.cross(q.v); }

// Four outward-facing walls of an axis-aligned box standing on the ground.
void add_box(std::vector<Quad>& quads, double x0, double x1, double y0, double y1, double h, double refl) {
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  const double hx = 0.5 * (x1 - x0), hy = 0.5 * (y1 - y0);
  quads.push_back(vertical_quad({x1, cy, h / 2}, {0, 1, 0}, hy, h / 2, refl));
  quads.push_back(vertical_quad({x0, cy, h / 2}, {0, -1, 0}, hy, h / 2, refl));
  quads.push_back(vertical_quad({cx, y1, h / 2}, {-1, 0, 0}, hx, h / 2, refl));
  quads.push_back(vertical_quad({cx, y0, h / 2}, {1, 0, 0}, hx, h / 2, refl));
}

// A flat patch mounted `offset` in front of a vertical face.
Quad patch_on(const Quad& face, double along, double z, double w, double h, double offset, double refl) {
  Quad p = face;
  p.center = face.center + along * face.u + (z - face.center.z()) * face.v + offset * quad_normal(face);
  p.half_u = w / 2;
  p.half_v = h / 2;
  p.reflectivity = refl;
  p.marker = -1;
  return p;
}

void add_marker(Scene& s, Quad q, double w, double h) {
  q.marker = static_cast<int>(s.markers.size());
  MarkerRecord m;
  m.id = q.marker;
  m.center = q.center;
  m.normal = quad_normal(q);
  m.width = w;
  m.height = h;
  m.reflectivity = q.reflectivity;
  s.markers.push_back(m);
  s.quads.push_back(q);
}

bool far_from_markers(const Scene& s, const Vec3& c, double min_dist) {
  for (const auto& m : s.markers) {
    if ((m.center - c).norm() < min_dist) return false;
  }
  return true;
}

void build_town(Scene& s, Rng& rng) {
  const SceneConfig& cfg = s.config;
  const double r = cfg.world_extent;
  const Polyline path = town_lap(r);
  const auto& bg = cfg.background_reflectivity;

  // Candidate buildings on a jittered grid, kept clear of the road.
  struct Box {
    double x0, x1, y0, y1, h;
  };
  std::vector<Box> boxes;
  const double cell = 11.0;
  const double clearance = 5.5;
  for (double gx = -2 * r - 20.0; gx < 2 * r + 20.0; gx += cell) {
    for (double gy = -r - 20.0; gy < r + 20.0; gy += cell) {
      const double w = rng.uniform(5.0, 9.0), d = rng.uniform(5.0, 9.0);
      const double x0 = gx + rng.uniform(0.0, cell - w), y0 = gy + rng.uniform(0.0, cell - d);
      const double h = rng.uniform(5.0, 15.0);
      const Box b{x0, x0 + w, y0, y0 + d, h};
      bool clear = path_distance({x0 + w / 2, y0 + d / 2}, path) < 18.0;
      for (std::size_t i = 0; i + 1 < path.size() && clear; ++i) {
        const double sx0 = std::min(path[i].x(), path[i + 1].x()), sx1 = std::max(path[i].x(), path[i + 1].x());
        const double sy0 = std::min(path[i].y(), path[i + 1].y()), sy1 = std::max(path[i].y(), path[i + 1].y());
        if (b.x0 - clearance <= sx1 && sx0 <= b.x1 + clearance && b.y0 - clearance <= sy1 && sy0 <= b.y1 + clearance) {
          clear = false;
        }
      }
      if (clear) boxes.push_back(b);
    }
  }
  std::shuffle(boxes.begin(), boxes.end(), rng.engine());
  if (boxes.size() > static_cast<std::size_t>(cfg.num_walls)) boxes.resize(static_cast<std::size_t>(cfg.num_walls));
  for (const Box& b : boxes) add_box(s.quads, b.x0, b.x1, b.y0, b.y1, b.h, surface_value(rng, bg));

  // Faces that look onto the road; markers and signs go there.
  std::vector<std::size_t> road_faces;
  for (std::size_t i = 0; i < s.quads.size(); ++i) {
    const Quad& q = s.quads[i];
    const Eigen::Vector2d c = q.center.head<2>();
    const Eigen::Vector2d to_road = closest_on_path(c, path) - c;
    if (to_road.norm() < 14.0 && to_road.dot(quad_normal(q).head<2>()) > 0.0 && q.half_u > 1.0) {
      road_faces.push_back(i);
    }
  }
  // Medium-reflectivity signs give relative-reflectivity edges.
  for (std::size_t fi : road_faces) {
    const Quad face = s.quads[fi];
    const int signs = rng.integer(1, 2);
    for (int k = 0; k < signs; ++k) {
      const double w = std::min(rng.uniform(1.0, 2.5), 2 * face.half_u);
      const double h = rng.uniform(0.8, 1.5);
      const double along = rng.uniform(-face.half_u + w / 2, face.half_u - w / 2);
      const double z = rng.uniform(1.5, std::min(4.0, 2 * face.half_v - h));
      s.quads.push_back(patch_on(face, along, z, w, h, 0.015, surface_value(rng, {60.0, 5.0})));
    }
  }

  // Poles along the road edge.
  const int num_poles = 40;
  for (int attempt = 0; attempt < 1000 && static_cast<int>(s.poles.size()) < num_poles; ++attempt) {
    const auto seg = static_cast<std::size_t>(rng.integer(0, static_cast<int>(path.size()) - 2));
    const Eigen::Vector2d p0 = path[seg], p1 = path[seg + 1];
    const Eigen::Vector2d dir = (p1 - p0).normalized();
    const Eigen::Vector2d left(-dir.y(), dir.x());
    const Eigen::Vector2d c = p0 + rng.uniform(0.1, 0.9) * (p1 - p0) + (rng.coin(0.5) ? 3.5 : -3.5) * left;
    if (path_distance(c, path) < 3.0) continue;
    bool spaced = true;
    for (const auto& pl : s.poles) spaced = spaced && (Eigen::Vector2d(pl.x, pl.y) - c).norm() > 4.0;
    if (!spaced) continue;
    Pole pl;
    pl.x = c.x();
    pl.y = c.y();
    pl.radius = 0.12;
    pl.z0 = 0.0;
    pl.z1 = rng.uniform(4.0, 6.0);
    pl.reflectivity = surface_value(rng, {70.0, 10.0});  // painted metal
    s.poles.push_back(pl);
  }

  std::vector<char> pole_used(s.poles.size(), 0);
  for (int attempt = 0; attempt < 10000 && static_cast<int>(s.markers.size()) < cfg.num_markers; ++attempt) {
    const double refl = surface_value(rng, cfg.marker_reflectivity);
    if (rng.coin(0.5) && !s.poles.empty()) {
      const auto pi = static_cast<std::size_t>(rng.integer(0, static_cast<int>(s.poles.size()) - 1));
      if (pole_used[pi]) continue;
      const Pole& pl = s.poles[pi];
      const Eigen::Vector2d c(pl.x, pl.y);
      const Eigen::Vector2d dir = (closest_on_path(c, path) - c).normalized();
      const double w = rng.uniform(0.3, 0.45), h = rng.uniform(0.5, 0.9);
      const double z = rng.uniform(1.5, std::min(3.0, pl.z1 - h));
      Quad q = vertical_quad({pl.x + dir.x() * (pl.radius + 0.03), pl.y + dir.y() * (pl.radius + 0.03), z},
                             {-dir.y(), dir.x(), 0.0}, w / 2, h / 2, refl);
      if (!far_from_markers(s, q.center, 1.5)) continue;
      pole_used[pi] = 1;
      add_marker(s, q, w, h);
    } else if (!road_faces.empty()) {
      const Quad face = s.quads[road_faces[static_cast<std::size_t>(rng.integer(0, static_cast<int>(road_faces.size()) - 1))]];
      const double w = rng.uniform(0.5, 1.0), h = rng.uniform(0.5, 1.0);
      if (face.half_u < w / 2 + 0.3) continue;
      const double along = rng.uniform(-face.half_u + w / 2 + 0.2, face.half_u - w / 2 - 0.2);
      const double z = rng.uniform(1.0, 3.0);
      const Quad q = patch_on(face, along, z, w, h, 0.03, refl);
      if (!far_from_markers(s, q.center, 1.5)) continue;
      add_marker(s, q, w, h);
    }
  }
}

void build_corridor(Scene& s, Rng& rng) {
  const SceneConfig& cfg = s.config;
  const double len = cfg.world_extent;
  const double half_w = 1.5, height = 3.0;
  const auto& bg = cfg.background_reflectivity;
  s.ceiling_z = height;
  s.ceiling_reflectivity = surface_value(rng, bg);

  s.quads.push_back(vertical_quad({len / 2, half_w, height / 2}, {1, 0, 0}, len / 2, height / 2, surface_value(rng, bg)));
  s.quads.push_back(vertical_quad({len / 2, -half_w, height / 2}, {-1, 0, 0}, len / 2, height / 2, surface_value(rng, bg)));
  s.quads.push_back(vertical_quad({0, 0, height / 2}, {0, 1, 0}, half_w, height / 2, surface_value(rng, bg)));
  s.quads.push_back(vertical_quad({len, 0, height / 2}, {0, -1, 0}, half_w, height / 2, surface_value(rng, bg)));

  // Identical bays: pilasters at every bay boundary, a door in every bay.
  const int bays = std::max(1, cfg.num_walls);
  const double bay = len / bays;
  const double pilaster_refl = surface_value(rng, bg);
  const double pilaster_depth = 0.3, pilaster_half = 0.2;
  for (int k = 1; k < bays; ++k) {
    const double x = k * bay;
    for (double side : {1.0, -1.0}) {
      const double face_y = side * (half_w - pilaster_depth);
      const double mid_y = side * (half_w - pilaster_depth / 2);
      s.quads.push_back(vertical_quad({x, face_y, height / 2}, {side, 0, 0}, pilaster_half, height / 2, pilaster_refl));
      s.quads.push_back(vertical_quad({x - pilaster_half, mid_y, height / 2}, {0, side, 0}, pilaster_depth / 2, height / 2,
                                      pilaster_refl));
      s.quads.push_back(vertical_quad({x + pilaster_half, mid_y, height / 2}, {0, -side, 0}, pilaster_depth / 2,
                                      height / 2, pilaster_refl));
    }
  }
  for (int k = 0; k < bays; ++k) {
    const double x = (k + 0.5) * bay;
    for (double side : {1.0, -1.0}) {
      s.quads.push_back(vertical_quad({x, side * (half_w - 0.01), 1.0}, {side, 0, 0}, 0.5, 1.0, 70.0));
    }
  }

  for (int attempt = 0; attempt < 10000 && static_cast<int>(s.markers.size()) < cfg.num_markers; ++attempt) {
    const double side = rng.coin(0.5) ? 1.0 : -1.0;
    const double x = rng.uniform(1.0, len - 1.0);
    const double w = rng.uniform(0.3, 0.6), h = rng.uniform(0.3, 0.6);
    const double z = rng.uniform(0.4, 2.4);
    // In front of a pilaster if one is there.
    const double nearest_pilaster = std::round(x / bay) * bay;
    const bool on_pilaster = std::abs(x - nearest_pilaster) < pilaster_half + w / 2 && nearest_pilaster > 0.0 &&
                             nearest_pilaster < len - 1e-9;
    const double wall_y = on_pilaster ? half_w - pilaster_depth : half_w;
    const Quad q = vertical_quad({x, side * (wall_y - 0.02), z}, {side, 0, 0}, w / 2, h / 2,
                                 surface_value(rng, cfg.marker_reflectivity));
    if (!far_from_markers(s, q.center, 1.0)) continue;
    add_marker(s, q, w, h);
  }
}

}  // namespace

const char* environment_name(Environment e) { return e == Environment::kIndoor ? "indoor" : "outdoor"; }

Environment parse_environment(const std::string& s) {
  if (s == "indoor") return Environment::kIndoor;
  if (s == "outdoor") return Environment::kOutdoor;
  throw std::invalid_argument("unknown environment '" + s + "' (expected indoor or outdoor)");
}

void SceneConfig::validate() const {
  if (num_markers < 0 || num_walls < 0) throw std::invalid_argument("scene counts must be non-negative");
  if (!(world_extent > 0.0)) throw std::invalid_argument("world_extent must be positive");
  if (!(dynamic_ratio >= 0.0 && dynamic_ratio < 1.0)) throw std::invalid_argument("dynamic_ratio must lie in [0, 1)");
  if (noise_sigma_xyz < 0.0 || noise_sigma_r < 0.0) throw std::invalid_argument("noise must be non-negative");
  if (marker_reflectivity.mean < 0.0 || background_reflectivity.mean < 0.0 || marker_reflectivity.spread < 0.0 ||
      background_reflectivity.spread < 0.0) {
    throw std::invalid_argument("reflectivity specs must be non-negative");
  }
}

void ScanModel::validate() const {
  if (rings < 1 || points_per_ring < 1) throw std::invalid_argument("scan model needs at least one ring and beam");
  if (rings > 65535) throw std::invalid_argument("too many rings");
  if (!(vertical_fov >= 0.0 && vertical_fov < 180.0)) throw std::invalid_argument("vertical_fov must lie in [0, 180)");
  if (!(max_range > 0.0)) throw std::invalid_argument("max_range must be positive");
}

Scene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  Scene s;
  s.config = cfg;
  Rng rng(splitmix64(cfg.seed));
  s.ground_reflectivity = surface_value(rng, cfg.background_reflectivity);
  if (cfg.layout == Layout::kTown) {
    build_town(s, rng);
  } else {
    build_corridor(s, rng);
  }
  return s;
}

std::string scene_manifest(const Scene& s) {
  std::ostringstream out;
  out.precision(17);
  out << "ground " << s.ground_reflectivity << '\n';
  if (s.ceiling_z) out << "ceiling " << *s.ceiling_z << ' ' << s.ceiling_reflectivity << '\n';
  for (const Quad& q : s.quads) {
    out << "quad " << q.center.transpose() << ' ' << q.u.transpose() << ' ' << q.v.transpose() << ' ' << q.half_u << ' '
        << q.half_v << ' ' << q.reflectivity << ' ' << q.marker << '\n';
  }
  for (const Pole& p : s.poles) {
    out << "pole " << p.x << ' ' << p.y << ' ' << p.radius << ' ' << p.z0 << ' ' << p.z1 << ' ' << p.reflectivity
        << '\n';
  }
  for (const MarkerRecord& m : s.markers) {
    out << "marker " << m.id << ' ' << m.center.transpose() << ' ' << m.normal.transpose() << ' ' << m.width << ' '
        << m.height << ' ' << m.reflectivity << '\n';
  }
  return out.str();
}

Trajectory make_trajectory(const SceneConfig& cfg, double spacing, double sensor_height) {
  if (!(spacing > 0.0)) throw std::invalid_argument("spacing must be positive");
  struct Leg {
    Polyline line;
    double offset;  // to the left of travel
  };
  std::vector<Leg> legs;
  if (cfg.layout == Layout::kTown) {
    legs.push_back({town_lap(cfg.world_extent), 0.0});
    legs.push_back({town_lap(cfg.world_extent), 0.7});
  } else {
    const double len = cfg.world_extent;
    legs.push_back({{{2.0, 0.0}, {len - 2.0, 0.0}}, 0.0});
    legs.push_back({{{len - 2.0, 0.0}, {2.0, 0.0}}, 0.3});
  }

  // Flatten to segments with nominal arc-length offsets.
  struct Seg {
    Eigen::Vector2d a, dir;
    double s0, len, offset;
  };
  std::vector<Seg> segs;
  double total = 0.0;
  for (const Leg& leg : legs) {
    for (std::size_t i = 0; i + 1 < leg.line.size(); ++i) {
      const Eigen::Vector2d d = leg.line[i + 1] - leg.line[i];
      const double l = d.norm();
      if (l <= 0.0) continue;
      segs.push_back({leg.line[i], d / l, total, l, leg.offset});
      total += l;
    }
  }

  Trajectory traj;
  std::size_t si = 0;
  for (std::size_t k = 0;; ++k) {
    const double s = static_cast<double>(k) * spacing;
    if (s >= total - 1e-9) break;
    while (si + 1 < segs.size() && s >= segs[si].s0 + segs[si].len) ++si;
    const Seg& g = segs[si];
    const Eigen::Vector2d left(-g.dir.y(), g.dir.x());
    const Eigen::Vector2d p = g.a + (s - g.s0) * g.dir + g.offset * left;
    traj.poses.push_back(RigidTransform::from_yaw(std::atan2(g.dir.y(), g.dir.x()), {p.x(), p.y(), sensor_height}));
    traj.arclen.push_back(s);
  }
  return traj;
}

namespace {

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  double reflectivity = 0.0;
  int marker = -1;
  bool clutter = false;
};

// Inclusive azimuth-column range [lo, hi] (may wrap) of a primitive as seen
// from the sensor, or full coverage.
struct ColumnSpan {
  bool full = false;
  int lo = 0, hi = 0;
};

ColumnSpan span_of_angles(double center, double lo_rel, double hi_rel, double yaw, int n) {
  ColumnSpan cs;
  if (hi_rel - lo_rel > kPi * 0.9) {
    cs.full = true;
    return cs;
  }
  const double scale = n / (2.0 * kPi);
  cs.lo = static_cast<int>(std::floor((center + lo_rel - yaw) * scale)) - 1;
  cs.hi = static_cast<int>(std::ceil((center + hi_rel - yaw) * scale)) + 1;
  if (cs.hi - cs.lo >= n) cs.full = true;
  return cs;
}

double wrap_pi(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

}  // namespace

PointCloud render_scan(const Scene& scene, const RigidTransform& pose, const ScanModel& model,
                       std::uint64_t scan_index, const RenderOptions& opt, ScanLabels* labels) {
  model.validate();
  const SceneConfig& cfg = scene.config;
  Rng rng(splitmix64(splitmix64(cfg.seed) ^ (0x9e3779b97f4a7c15ULL * (scan_index + 1))));
  const int rings = model.rings, n = model.points_per_ring;
  const Vec3 o = pose.translation;
  const Mat3& rot = pose.rotation;
  const double max_range = model.max_range;

  std::vector<double> elev(static_cast<std::size_t>(rings));
  for (int k = 0; k < rings; ++k) {
    elev[static_cast<std::size_t>(k)] =
        rings == 1 ? 0.0 : (-model.vertical_fov / 2 + k * model.vertical_fov / (rings - 1)) * kPi / 180.0;
  }
  std::vector<double> az_cos(static_cast<std::size_t>(n)), az_sin(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const double a = 2.0 * kPi * j / n;
    az_cos[static_cast<std::size_t>(j)] = std::cos(a);
    az_sin[static_cast<std::size_t>(j)] = std::sin(a);
  }

  // Per-column candidate primitives; only valid for yaw-only poses.
  const bool yaw_only = std::abs(rot(2, 2) - 1.0) < 1e-12;
  const double yaw = std::atan2(rot(1, 0), rot(0, 0));
  std::vector<std::vector<std::uint32_t>> col_quads(static_cast<std::size_t>(n)), col_poles(static_cast<std::size_t>(n));
  auto add_span = [&](std::vector<std::vector<std::uint32_t>>& cols, std::uint32_t id, const ColumnSpan& cs) {
    if (cs.full) {
      for (auto& c : cols) c.push_back(id);
      return;
    }
    for (int j = cs.lo; j <= cs.hi; ++j) cols[static_cast<std::size_t>(((j % n) + n) % n)].push_back(id);
  };
  for (std::uint32_t qi = 0; qi < scene.quads.size(); ++qi) {
    const Quad& q = scene.quads[qi];
    const Eigen::Vector2d c = (q.center - o).head<2>();
    const double reach = std::hypot(q.half_u, q.half_v);
    if (c.norm() - reach > max_range) continue;
    if (!yaw_only) {
      add_span(col_quads, qi, {true, 0, 0});
      continue;
    }
    const double center = std::atan2(c.y(), c.x());
    double lo = 0.0, hi = 0.0;
    bool near = false;
    for (double su : {-1.0, 1.0}) {
      for (double sv : {-1.0, 1.0}) {
        const Vec3 corner = q.center + su * q.half_u * q.u + sv * q.half_v * q.v - o;
        if (corner.head<2>().norm() < 0.05) near = true;
        const double rel = wrap_pi(std::atan2(corner.y(), corner.x()) - center);
        lo = std::min(lo, rel);
        hi = std::max(hi, rel);
      }
    }
    // A quad whose footprint passes next to the sensor can cover any azimuth.
    const Eigen::Vector2d e0 = (q.center - q.half_u * q.u - o).head<2>();
    const Eigen::Vector2d e1 = (q.center + q.half_u * q.u - o).head<2>();
    if (near || point_segment_distance(Eigen::Vector2d::Zero(), e0, e1) < 0.05) {
      add_span(col_quads, qi, {true, 0, 0});
    } else {
      add_span(col_quads, qi, span_of_angles(center, lo, hi, yaw, n));
    }
  }
  for (std::uint32_t pi = 0; pi < scene.poles.size(); ++pi) {
    const Pole& p = scene.poles[pi];
    const Eigen::Vector2d c(p.x - o.x(), p.y - o.y());
    const double d = c.norm();
    if (d - p.radius > max_range) continue;
    if (!yaw_only || d <= p.radius * 1.01) {
      add_span(col_poles, pi, {true, 0, 0});
      continue;
    }
    const double half = std::asin(std::min(1.0, p.radius / d));
    add_span(col_poles, pi, span_of_angles(std::atan2(c.y(), c.x()), -half, half, yaw, n));
  }

  std::vector<Hit> hits(static_cast<std::size_t>(rings) * static_cast<std::size_t>(n));
  for (int k = 0; k < rings; ++k) {
    const double ce = std::cos(elev[static_cast<std::size_t>(k)]), se = std::sin(elev[static_cast<std::size_t>(k)]);
    for (int j = 0; j < n; ++j) {
      const Vec3 ds(ce * az_cos[static_cast<std::size_t>(j)], ce * az_sin[static_cast<std::size_t>(j)], se);
      const Vec3 d = rot * ds;
      Hit h;
      h.t = max_range;
      bool any = false;
      if (d.z() < 0.0) {
        const double t = -o.z() / d.z();
        if (t > 0.0 && t < h.t) {
          h = {t, scene.ground_reflectivity, -1, false};
          any = true;
        }
      }
      if (scene.ceiling_z && d.z() > 0.0) {
        const double t = (*scene.ceiling_z - o.z()) / d.z();
        if (t > 0.0 && t < h.t) {
          h = {t, scene.ceiling_reflectivity, -1, false};
          any = true;
        }
      }
      for (std::uint32_t qi : col_quads[static_cast<std::size_t>(j)]) {
        const Quad& q = scene.quads[qi];
        const Vec3 nrm = quad_normal(q);
        const double denom = nrm.dot(d);
        if (std::abs(denom) < 1e-12) continue;
        const double t = nrm.dot(q.center - o) / denom;
        if (!(t > 1e-9 && t < h.t)) continue;
        const Vec3 rel = o + t * d - q.center;
        if (std::abs(rel.dot(q.u)) > q.half_u || std::abs(rel.dot(q.v)) > q.half_v) continue;
        h = {t, q.reflectivity, q.marker, false};
        any = true;
      }
      for (std::uint32_t pi : col_poles[static_cast<std::size_t>(j)]) {
        const Pole& p = scene.poles[pi];
        const double ox = o.x() - p.x, oy = o.y() - p.y;
        const double a2 = d.x() * d.x() + d.y() * d.y();
        if (a2 < 1e-18) continue;
        const double b = 2.0 * (ox * d.x() + oy * d.y());
        const double c = ox * ox + oy * oy - p.radius * p.radius;
        const double disc = b * b - 4.0 * a2 * c;
        if (disc < 0.0) continue;
        const double t = (-b - std::sqrt(disc)) / (2.0 * a2);
        if (!(t > 1e-9 && t < h.t)) continue;
        const double z = o.z() + t * d.z();
        if (z < p.z0 || z > p.z1) continue;
        h = {t, p.reflectivity, -1, false};
        any = true;
      }
      if (!any) h.t = std::numeric_limits<double>::infinity();
      hits[static_cast<std::size_t>(k) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] = h;
    }
  }

  // Dynamic clutter: upright blobs in random azimuth sectors, occluding
  // whatever lies behind them, until the target share of returns is replaced.
  if (opt.clutter && cfg.dynamic_ratio > 0.0) {
    std::size_t returns = 0;
    for (const Hit& h : hits) returns += std::isfinite(h.t) ? 1 : 0;
    const auto target = static_cast<std::size_t>(cfg.dynamic_ratio * static_cast<double>(returns));
    const bool indoor = scene.ceiling_z.has_value();
    std::size_t replaced = 0;
    for (int attempt = 0; attempt < 2000 && replaced < target; ++attempt) {
      const int c0 = rng.integer(0, n - 1);
      const int width = std::max(1, static_cast<int>(rng.uniform(8.0, 48.0) * n / 1024.0));
      const double range = indoor ? rng.uniform(2.0, 10.0) : rng.uniform(3.0, 15.0);
      const double top = rng.uniform(1.0, indoor ? 2.0 : 2.5);
      const double refl = surface_value(rng, cfg.background_reflectivity);
      for (int dj = 0; dj < width && replaced < target; ++dj) {
        const int j = (c0 + dj) % n;
        const double rho = range + 0.3 * std::sin(kPi * (dj + 0.5) / width);
        for (int k = 0; k < rings && replaced < target; ++k) {
          const double e = elev[static_cast<std::size_t>(k)];
          const double t = rho / std::cos(e);
          const double z = o.z() + t * std::sin(e);
          if (z < 0.0 || z > top || t >= max_range) continue;
          Hit& h = hits[static_cast<std::size_t>(k) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
          if (!(t < h.t) || h.clutter) continue;
          h = {t, refl, -1, true};
          ++replaced;
        }
      }
    }
  }

  std::vector<Point> points;
  std::vector<std::uint16_t> ring_ids;
  if (labels) {
    labels->marker.clear();
    labels->clutter.clear();
  }
  const double sxyz = opt.noise ? cfg.noise_sigma_xyz : 0.0;
  const double sr = opt.noise ? cfg.noise_sigma_r : 0.0;
  for (int k = 0; k < rings; ++k) {
    const double ce = std::cos(elev[static_cast<std::size_t>(k)]), se = std::sin(elev[static_cast<std::size_t>(k)]);
    for (int j = 0; j < n; ++j) {
      const Hit& h = hits[static_cast<std::size_t>(k) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
      if (!std::isfinite(h.t)) continue;
      const Vec3 ds(ce * az_cos[static_cast<std::size_t>(j)], ce * az_sin[static_cast<std::size_t>(j)], se);
      Point p;
      p.x = static_cast<float>(h.t * ds.x() + rng.normal(sxyz));
      p.y = static_cast<float>(h.t * ds.y() + rng.normal(sxyz));
      p.z = static_cast<float>(h.t * ds.z() + rng.normal(sxyz));
      p.r = static_cast<float>(std::max(0.0, h.reflectivity + rng.normal(sr)));
      points.push_back(p);
      ring_ids.push_back(static_cast<std::uint16_t>(k));
      if (labels) {
        labels->marker.push_back(h.marker);
        labels->clutter.push_back(h.clutter ? 1 : 0);
      }
    }
  }
  return PointCloud(std::move(points), std::move(ring_ids), static_cast<std::uint32_t>(rings),
                    static_cast<std::uint32_t>(scan_index));
}

std::vector<std::string> preset_names() { return {"town", "corridor", "corridor-nomarkers"}; }

Preset make_preset(const std::string& name) {
  Preset p;
  p.name = name;
  if (name == "town") {
    p.scene.layout = Layout::kTown;
    p.scene.num_markers = 30;
    p.scene.num_walls = 40;
    // Lobe radius giving a 250 m polygonal lap; two laps make 500 m.
    p.scene.world_extent = 125.0 / (2.0 * kLobeSegments * std::sin(kPi / kLobeSegments));
    p.scene.dynamic_ratio = 0.2;
    p.env = Environment::kOutdoor;
    p.spacing = 0.25;
    p.sensor_height = 1.8;
  } else if (name == "corridor" || name == "corridor-nomarkers") {
    p.scene.layout = Layout::kCorridor;
    p.scene.num_markers = name == "corridor" ? 20 : 0;
    p.scene.num_walls = 16;
    p.scene.world_extent = 96.0;
    p.scene.dynamic_ratio = 0.05;
    p.env = Environment::kIndoor;
    p.spacing = 0.1;
    p.sensor_height = 1.2;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return p;
}

std::filesystem::path benchmark_scan_path(const std::filesystem::path& dir, std::size_t frame) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06zu.rtrp", frame);
  return dir / "scans" / name;
}

void write_poses_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw ScanIoError("cannot write " + path.string());
  out.precision(17);
  out << "frame,x,y,z,qx,qy,qz,qw,arclen\n";
  for (std::size_t i = 0; i < traj.poses.size(); ++i) {
    const auto& t = traj.poses[i];
    const Eigen::Quaterniond q(t.rotation);
    out << i << ',' << t.translation.x() << ',' << t.translation.y() << ',' << t.translation.z() << ',' << q.x() << ','
        << q.y() << ',' << q.z() << ',' << q.w() << ',' << traj.arclen[i] << '\n';
  }
  if (!out) throw ScanIoError("write failed for " + path.string());
}

void write_markers_csv(const std::filesystem::path& path, const Scene& scene) {
  std::ofstream out(path);
  if (!out) throw ScanIoError("cannot write " + path.string());
  out.precision(17);
  out << "id,x,y,z,nx,ny,nz,width,height,reflectivity\n";
  for (const auto& m : scene.markers) {
    out << m.id << ',' << m.center.x() << ',' << m.center.y() << ',' << m.center.z() << ',' << m.normal.x() << ','
        << m.normal.y() << ',' << m.normal.z() << ',' << m.width << ',' << m.height << ',' << m.reflectivity << '\n';
  }
  if (!out) throw ScanIoError("write failed for " + path.string());
}

BenchmarkInfo make_benchmark(const Preset& preset, const std::filesystem::path& dir, unsigned workers) {
  const Scene scene = generate_scene(preset.scene);
  const Trajectory traj = make_trajectory(preset.scene, preset.spacing, preset.sensor_height);
  std::filesystem::create_directories(dir / "scans");

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= traj.poses.size()) return;
      try {
        save_scan(render_scan(scene, traj.poses[i], preset.model, i), benchmark_scan_path(dir, i), ScanFormat::kBinary);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = traj.poses.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < std::max(1u, workers); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  write_poses_csv(dir / "poses.csv", traj);
  write_markers_csv(dir / "markers.csv", scene);
  BenchmarkInfo info{preset.name, preset.env, preset.spacing, preset.scene.seed, traj.poses.size()};
  std::ofstream cfg(dir / "benchmark.cfg");
  cfg.precision(17);
  cfg << "preset=" << info.preset << "\nenv=" << environment_name(info.env) << "\nspacing=" << info.spacing
      << "\nseed=" << info.seed << "\nframes=" << info.frames << '\n';
  if (!cfg) throw ScanIoError("cannot write " + (dir / "benchmark.cfg").string());
  return info;
}

BenchmarkInfo read_benchmark_info(const std::filesystem::path& dir) {
  std::ifstream in(dir / "benchmark.cfg");
  if (!in) throw ScanIoError("no benchmark.cfg in " + dir.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  try {
    BenchmarkInfo info;
    info.preset = kv.at("preset");
    info.env = parse_environment(kv.at("env"));
    info.spacing = std::stod(kv.at("spacing"));
    info.seed = std::stoull(kv.at("seed"));
    info.frames = std::stoull(kv.at("frames"));
    return info;
  } catch (const std::exception& e) {
    throw ScanIoError("malformed benchmark.cfg in " + dir.string() + ": " + e.what());
  }
}

}  // namespace retrip
