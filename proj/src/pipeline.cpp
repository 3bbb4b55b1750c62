#include "retrip/pipeline.hpp"

#include <chrono>

namespace retrip {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PipelineConfig PipelineConfig::for_environment(Environment env) {
  PipelineConfig cfg;
  cfg.set_environment(env);
  return cfg;
}

void PipelineConfig::set_environment(Environment e) {
  env = e;
  keypoints.z_a = e == Environment::kIndoor ? 3.5 : 4.5;
  gt_threshold = e == Environment::kIndoor ? 4.0 : 20.0;
}

void PipelineConfig::validate() const {
  keypoints.validate();
  cluster.validate();
  descriptor.validate();
  match.validate();
  verify.validate();
  if (!(gt_threshold > 0.0)) throw std::invalid_argument("gt_threshold must be positive");
}

FrameFeatures extract_features(const PointCloud& cloud, const PipelineConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  FrameFeatures f;
  f.frame_id = cloud.frame_id();
  f.key_set.frame_id = f.frame_id;
  if (cloud.empty()) return f;
  const ReflectivityStats stats = reflectivity_stats(cloud);
  const KeypointPartition part = extract_keypoints(cloud, stats, cfg.keypoints);
  const auto ari = make_instances(cloud, euclidean_cluster(cloud, part.arp, cfg.cluster, Label::kArp));
  const auto rri = make_instances(cloud, euclidean_cluster(cloud, part.rrp, cfg.cluster, Label::kRrp));
  f.key_set = build_key_instance_set(ari, rri, cfg.cluster.k, f.frame_id);
  f.descriptors = build_descriptors(f.key_set, cfg.descriptor);
  f.planes = extract_planes(cloud, stats, cfg.verify);
  f.descriptor_ms = ms_since(t0);
  return f;
}

QueryOutcome query_frame(const DescriptorDB& db, const FrameFeatures& f, const PipelineConfig& cfg) {
  QueryOutcome out;
  auto t0 = std::chrono::steady_clock::now();
  const auto candidates = db.retrieve_candidates(f.descriptors, cfg.match);
  out.retrieve_ms = ms_since(t0);
  out.candidates = candidates.size();

  t0 = std::chrono::steady_clock::now();
  bool have_best = false;
  for (const CandidateScore& c : candidates) {
    const VerifyResult v = verify_loop(db, c, f.planes, cfg.verify);
    if (!have_best || v.coincidence > out.best.coincidence) {
      out.best = v;
      out.best_frame = c.frame_id;
      have_best = true;
    }
    if (v.accepted && (!out.predicted || v.coincidence > out.score)) {
      out.predicted = c.frame_id;
      out.score = v.coincidence;
    }
  }
  out.verify_ms = ms_since(t0);
  return out;
}

void insert_features(DescriptorDB& db, const FrameFeatures& f) { db.insert_frame(f.descriptors, f.key_set, f.planes); }

}  // namespace retrip
