#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "retrip/descriptor.hpp"
#include "retrip/geometry.hpp"

namespace retrip {

struct MatchConfig {
  double side_tol = 0.2;        // max per-side absolute difference, meters
  double size_ratio_tol = 3.0;  // max instance-size ratio per canonical vertex
  std::size_t num_candidates = 10;
  bool require_label_match = true;
  // Stored frames f with |query - f| <= exclusion are skipped. Disabled when
  // empty, in which case even the query's own frame may match.
  std::optional<std::uint32_t> exclusion = 100;

  void validate() const;

  // Turns off label matching and instance-size comparison together.
  void disable_instance_matching() {
    require_label_match = false;
    size_ratio_tol = std::numeric_limits<double>::infinity();
  }
};

// True when stored descriptor `d` passes the side, label and size tests
// against query `q`. Frame exclusion is not part of this predicate.
bool descriptors_match(const Descriptor& q, const Descriptor& d, const MatchConfig& cfg);

struct CandidateScore {
  std::uint32_t frame_id = 0;
  std::uint32_t votes = 0;
  std::vector<std::pair<Descriptor, Descriptor>> matched_pairs;  // (query, stored)
};

struct FrameRecord {
  std::uint32_t frame_id = 0;
  KeyInstanceSet key_set;
  std::vector<Plane> planes;
  std::uint32_t descriptor_count = 0;
};

class DbFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Hash table of triangle descriptors keyed on quantized sorted sides, plus the
// per-frame key-instance sets and planes needed for verification. Queries are
// const and may run concurrently; insert_frame must not overlap with queries.
class DescriptorDB {
 public:
  explicit DescriptorDB(double resolution = 0.2);

  double resolution() const { return resolution_; }

  // Throws std::logic_error unless key_set.frame_id exceeds every stored id,
  // or if a descriptor does not belong to key_set.
  void insert_frame(std::span<const Descriptor> descriptors, KeyInstanceSet key_set,
                    std::vector<Plane> planes);

  // Stored descriptors matching q, probing the buckets within
  // ceil(side_tol / resolution) of q's key, in insertion order.
  std::vector<Descriptor> match_descriptor(const Descriptor& q, const MatchConfig& cfg) const;

  // Frames ranked by votes (ties: more recent first), at most num_candidates.
  std::vector<CandidateScore> retrieve_candidates(std::span<const Descriptor> query,
                                                  const MatchConfig& cfg) const;

  const FrameRecord* frame(std::uint32_t frame_id) const;
  std::span<const FrameRecord> frames() const { return frames_; }
  std::size_t descriptor_count() const { return entries_.size(); }
  std::size_t bucket_count() const { return buckets_.size(); }
  std::size_t bucket_size(const HashKey& key) const;

  // Every stored descriptor, in insertion order.
  std::vector<Descriptor> all_descriptors() const;

  void save(const std::filesystem::path& path) const;
  static DescriptorDB load(const std::filesystem::path& path);
  std::vector<std::uint8_t> serialize() const;
  static DescriptorDB deserialize(std::span<const std::uint8_t> bytes);

  friend bool operator==(const DescriptorDB& a, const DescriptorDB& b);

 private:
  struct Entry {
    std::array<double, 3> sides;
    std::uint32_t frame_index;  // position in frames_
    std::array<std::uint8_t, 3> slots;
  };
  // Sides stored column-wise so a bucket can be scanned with one kernel call;
  // ids are entry indices in insertion order.
  struct Bucket {
    std::vector<double> s0, s1, s2;
    std::vector<std::uint32_t> ids;
  };

  std::size_t frame_index(std::uint32_t frame_id) const;
  bool excluded(std::uint32_t stored_frame, std::uint32_t query_frame, const MatchConfig& cfg) const;
  bool entry_matches(const Entry& e, const Descriptor& q, const MatchConfig& cfg) const;
  void collect_matches(const Descriptor& q, const MatchConfig& cfg, std::vector<std::uint32_t>& out,
                       std::vector<std::uint32_t>& scratch) const;
  Descriptor materialize(const Entry& e) const;

  double resolution_;
  std::vector<FrameRecord> frames_;
  std::vector<Entry> entries_;
  std::unordered_map<HashKey, Bucket, HashKeyHash> buckets_;
};

}  // namespace retrip
