#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "retrip/geometry.hpp"

namespace retrip {

// One LiDAR return in the sensor frame. Reflectivity is kept as a real number
// so rescaled or synthetic values are represented exactly.
struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double r = 0.0;

  Vec3 xyz() const { return {x, y, z}; }
  friend bool operator==(const Point&, const Point&) = default;
};

// Organized scan: every point belongs to one ring, and within a ring points
// keep azimuthal scan order (their relative order in `points`).
class PointCloud {
 public:
  PointCloud() = default;

  // Throws std::invalid_argument if sizes disagree, a ring id is out of
  // range, a coordinate is non-finite, or a reflectivity is negative.
  PointCloud(std::vector<Point> points, std::vector<std::uint16_t> rings,
             std::uint32_t ring_count, std::uint32_t frame_id = 0);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  std::span<const Point> points() const { return points_; }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  std::span<const std::uint16_t> rings() const { return rings_; }
  std::uint16_t ring_of(std::size_t i) const { return rings_[i]; }
  std::uint32_t ring_count() const { return ring_count_; }

  // Point indices of one ring in scan order.
  std::span<const std::uint32_t> ring_members(std::uint32_t ring) const {
    return {ring_order_.data() + ring_offsets_[ring],
            ring_offsets_[ring + 1] - ring_offsets_[ring]};
  }
  // Position of point i within its ring.
  std::uint32_t ring_position(std::size_t i) const { return ring_pos_[i]; }

  std::uint32_t frame_id() const { return frame_id_; }
  void set_frame_id(std::uint32_t id) { frame_id_ = id; }

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.ring_count_ == b.ring_count_ && a.points_ == b.points_ && a.rings_ == b.rings_;
  }

 private:
  std::vector<Point> points_;
  std::vector<std::uint16_t> rings_;
  std::uint32_t ring_count_ = 0;
  std::uint32_t frame_id_ = 0;
  std::vector<std::uint32_t> ring_offsets_{0};
  std::vector<std::uint32_t> ring_order_;
  std::vector<std::uint32_t> ring_pos_;
};

// Apply a rigid transform to every point, keeping reflectivity and rings.
PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t);

enum class ScanFormat { kBinary, kText };

// ".txt" selects the text format, anything else the binary format.
ScanFormat format_from_path(const std::filesystem::path& path);

class ScanParseError : public std::runtime_error {
 public:
  // `record` is the 0-based record index, or -1 for header errors. `offset`
  // is a byte offset (binary) or a 1-based line number (text).
  ScanParseError(const std::string& what, long record, std::size_t offset)
      : std::runtime_error(what), record_(record), offset_(offset) {}
  long record() const { return record_; }
  std::size_t offset() const { return offset_; }

 private:
  long record_;
  std::size_t offset_;
};

class ScanIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

PointCloud load_scan(const std::filesystem::path& path, ScanFormat format);
PointCloud load_scan(const std::filesystem::path& path);
void save_scan(const PointCloud& cloud, const std::filesystem::path& path, ScanFormat format);
void save_scan(const PointCloud& cloud, const std::filesystem::path& path);

// In-memory codecs used by the file functions.
std::vector<std::uint8_t> encode_binary(const PointCloud& cloud);
PointCloud decode_binary(std::span<const std::uint8_t> bytes);
std::string encode_text(const PointCloud& cloud);
PointCloud decode_text(const std::string& text);

struct ReflectivityStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  std::size_t count = 0;
};

// Mean and population standard deviation of reflectivity. Throws
// std::domain_error on an empty cloud.
ReflectivityStats reflectivity_stats(const PointCloud& cloud);

}  // namespace retrip
