#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "retrip/pipeline.hpp"

namespace retrip {

struct PoseRecord {
  std::uint32_t frame = 0;
  RigidTransform pose;
  double arclen = 0.0;
};

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads `frame,x,y,z,qx,qy,qz,qw,arclen`. Throws InputError on malformed rows.
std::vector<PoseRecord> read_poses_csv(const std::filesystem::path& path);

struct GroundTruth {
  std::vector<std::uint32_t> frames;                 // query frame ids, ascending
  std::vector<std::vector<std::uint32_t>> revisits;  // per query, ascending
  Environment env = Environment::kOutdoor;
  double threshold = 0.0;
  std::optional<std::uint32_t> exclusion;

  // Revisit set of a frame id, empty for unknown ids.
  std::span<const std::uint32_t> revisits_of(std::uint32_t frame) const;
  bool is_revisit(std::uint32_t query, std::uint32_t candidate) const;
  std::size_t positives() const;  // queries with at least one revisit
};

double gt_threshold_for(Environment env);

// j is a revisit of i iff |p_i - p_j| <= threshold, j < i and i - j > exclusion.
// Throws InputError unless frame ids strictly increase.
GroundTruth build_ground_truth(std::span<const PoseRecord> poses, double threshold,
                               std::optional<std::uint32_t> exclusion, Environment env);
GroundTruth build_ground_truth(std::span<const PoseRecord> poses, Environment env,
                               std::optional<std::uint32_t> exclusion);

struct DetectionRecord {
  std::uint32_t query = 0;
  std::optional<std::uint32_t> predicted;
  std::optional<double> score;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct FrameTiming {
  std::uint32_t frame = 0;
  double descriptor_ms = 0.0;
  double retrieve_ms = 0.0;
  double verify_ms = 0.0;

  double search_ms() const { return retrieve_ms + verify_ms; }
  double total_ms() const { return descriptor_ms + search_ms(); }
};

struct SequenceResult {
  std::vector<DetectionRecord> records;
  std::vector<FrameTiming> timings;
};

// Produces the scan of frame i; its frame id is forced to i.
using ScanSource = std::function<PointCloud(std::size_t)>;

// Feature extraction for frames [0, count) on `workers` threads. The result
// is independent of the worker count.
std::vector<FrameFeatures> extract_all(const ScanSource& source, std::size_t count, const PipelineConfig& cfg,
                                       unsigned workers);

// Sequential query-then-insert over precomputed features.
SequenceResult score_features(std::span<const FrameFeatures> features, const PipelineConfig& cfg);

// Streams frames through extraction (parallel, in batches) and the sequential
// retrieve/verify/insert loop. A frame whose scan or extraction fails is
// recorded as a non-detection and contributes nothing to the database.
SequenceResult score_sequence(const ScanSource& source, std::size_t count, const PipelineConfig& cfg,
                              unsigned workers);

struct PRPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Sweeps every distinct score, highest first. The first point is the anchor
// (threshold +inf, precision 1, recall 0). Throws std::domain_error when the
// ground truth has no positive query.
std::vector<PRPoint> pr_curve(std::span<const DetectionRecord> records, const GroundTruth& gt);
double auc(std::span<const PRPoint> curve);                // trapezoids over recall
double average_precision(std::span<const PRPoint> curve);  // sum of dR * P
double max_f1(std::span<const PRPoint> curve);

struct TimingSummary {
  double descriptor_ms = 0.0;
  double search_ms = 0.0;
  double total_ms = 0.0;
  double retrieve_ms = 0.0;
  double verify_ms = 0.0;
};
TimingSummary mean_timings(std::span<const FrameTiming> timings);

// Nearest-rank percentile, p in [0, 100]. Throws std::domain_error on empty input.
double percentile(std::vector<double> values, double p);

void write_records_csv(const std::filesystem::path& path, std::span<const DetectionRecord> records);
std::vector<DetectionRecord> read_records_csv(const std::filesystem::path& path);
void write_pr_csv(const std::filesystem::path& path, std::span<const PRPoint> curve);
void write_timings_csv(const std::filesystem::path& path, std::span<const FrameTiming> timings);

struct EvaluationSummary {
  double auc = 0.0;
  double max_f1 = 0.0;
  double average_precision = 0.0;
  std::size_t queries = 0;
  std::size_t positives = 0;
  std::size_t predictions = 0;
  TimingSummary timing;
};
EvaluationSummary summarize(std::span<const DetectionRecord> records, std::span<const FrameTiming> timings,
                            const GroundTruth& gt);
void write_summary_csv(const std::filesystem::path& path, const EvaluationSummary& s);

}  // namespace retrip
