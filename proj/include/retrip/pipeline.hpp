#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "retrip/descriptor.hpp"
#include "retrip/instances.hpp"
#include "retrip/keypoints.hpp"
#include "retrip/retrieval.hpp"
#include "retrip/synth.hpp"
#include "retrip/verification.hpp"

namespace retrip {

struct PipelineConfig {
  Environment env = Environment::kOutdoor;
  KeypointConfig keypoints;
  ClusterConfig cluster;
  DescriptorConfig descriptor;
  MatchConfig match;
  VerifyConfig verify;
  double gt_threshold = 20.0;  // revisit distance for ground truth, meters

  // Indoor: z_a 3.5, revisit radius 4 m. Outdoor: z_a 4.5, radius 20 m.
  static PipelineConfig for_environment(Environment env);
  void set_environment(Environment env);
  void validate() const;
};

// Everything a frame contributes to the database and to its own query.
struct FrameFeatures {
  std::uint32_t frame_id = 0;
  KeyInstanceSet key_set;
  std::vector<Descriptor> descriptors;
  std::vector<Plane> planes;
  double descriptor_ms = 0.0;  // keypoints through descriptors and planes
};

// An empty cloud yields empty features.
FrameFeatures extract_features(const PointCloud& cloud, const PipelineConfig& cfg);

struct QueryOutcome {
  std::optional<std::uint32_t> predicted;  // best accepted candidate
  double score = 0.0;                      // its coincidence
  std::size_t candidates = 0;
  VerifyResult best;  // best verification over all candidates, accepted or not
  std::uint32_t best_frame = 0;
  double retrieve_ms = 0.0;
  double verify_ms = 0.0;
};

// Retrieves and verifies candidates for `f`. Among accepted candidates the
// highest coincidence wins; ties keep the better-ranked candidate.
QueryOutcome query_frame(const DescriptorDB& db, const FrameFeatures& f, const PipelineConfig& cfg);

void insert_features(DescriptorDB& db, const FrameFeatures& f);

}  // namespace retrip
