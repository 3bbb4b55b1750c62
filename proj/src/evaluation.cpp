#include "retrip/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace retrip {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw InputError(where + ": bad number '" + s + "'");
  }
  return v;
}

std::uint32_t parse_u32(const std::string& s, const std::string& where) {
  std::uint32_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw InputError(where + ": bad integer '" + s + "'");
  return v;
}

// Runs fn(i) for i in [0, count) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
  };
  const unsigned extra = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), count)) - (count ? 1 : 0);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < extra; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

}  // namespace

std::vector<PoseRecord> read_poses_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": missing header");
  std::vector<PoseRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = split_csv(line);
    if (f.size() != 9) throw InputError(where + ": expected 9 fields");
    PoseRecord p;
    p.frame = parse_u32(f[0], where);
    const Vec3 t(parse_double(f[1], where), parse_double(f[2], where), parse_double(f[3], where));
    Eigen::Quaterniond q(parse_double(f[7], where), parse_double(f[4], where), parse_double(f[5], where),
                         parse_double(f[6], where));
    if (!(q.norm() > 0.0)) throw InputError(where + ": zero quaternion");
    q.normalize();
    p.pose.rotation = q.toRotationMatrix();
    p.pose.translation = t;
    p.arclen = parse_double(f[8], where);
    out.push_back(p);
  }
  return out;
}

double gt_threshold_for(Environment env) { return env == Environment::kIndoor ? 4.0 : 20.0; }

std::span<const std::uint32_t> GroundTruth::revisits_of(std::uint32_t frame) const {
  const auto it = std::lower_bound(frames.begin(), frames.end(), frame);
  if (it == frames.end() || *it != frame) return {};
  return revisits[static_cast<std::size_t>(it - frames.begin())];
}

bool GroundTruth::is_revisit(std::uint32_t query, std::uint32_t candidate) const {
  const auto r = revisits_of(query);
  return std::binary_search(r.begin(), r.end(), candidate);
}

std::size_t GroundTruth::positives() const {
  std::size_t n = 0;
  for (const auto& r : revisits) n += r.empty() ? 0 : 1;
  return n;
}

GroundTruth build_ground_truth(std::span<const PoseRecord> poses, double threshold,
                               std::optional<std::uint32_t> exclusion, Environment env) {
  if (!(threshold > 0.0)) throw std::invalid_argument("ground-truth threshold must be positive");
  GroundTruth gt;
  gt.env = env;
  gt.threshold = threshold;
  gt.exclusion = exclusion;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (i > 0 && poses[i].frame <= poses[i - 1].frame) {
      throw InputError("pose frame ids must strictly increase (frame " + std::to_string(poses[i].frame) + ")");
    }
    gt.frames.push_back(poses[i].frame);
  }
  gt.revisits.resize(poses.size());

  struct CellHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& c) const noexcept {
      std::uint64_t h = 1469598103934665603ull;
      for (auto v : c) {
        h ^= static_cast<std::uint64_t>(v);
        h *= 1099511628211ull;
      }
      return static_cast<std::size_t>(h);
    }
  };
  auto cell_of = [&](const Vec3& p) {
    return std::array<std::int64_t, 3>{static_cast<std::int64_t>(std::floor(p.x() / threshold)),
                                       static_cast<std::int64_t>(std::floor(p.y() / threshold)),
                                       static_cast<std::int64_t>(std::floor(p.z() / threshold))};
  };
  std::unordered_map<std::array<std::int64_t, 3>, std::vector<std::uint32_t>, CellHash> grid;
  for (std::uint32_t i = 0; i < poses.size(); ++i) grid[cell_of(poses[i].pose.translation)].push_back(i);

  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Vec3& pi = poses[i].pose.translation;
    const auto c = cell_of(pi);
    auto& out = gt.revisits[i];
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == grid.end()) continue;
          for (std::uint32_t j : it->second) {
            if (j >= i) continue;
            const std::uint32_t gap = poses[i].frame - poses[j].frame;
            if (exclusion && gap <= *exclusion) continue;
            if ((pi - poses[j].pose.translation).norm() <= threshold) out.push_back(poses[j].frame);
          }
        }
      }
    }
    std::sort(out.begin(), out.end());
  }
  return gt;
}

GroundTruth build_ground_truth(std::span<const PoseRecord> poses, Environment env,
                               std::optional<std::uint32_t> exclusion) {
  return build_ground_truth(poses, gt_threshold_for(env), exclusion, env);
}

std::vector<FrameFeatures> extract_all(const ScanSource& source, std::size_t count, const PipelineConfig& cfg,
                                       unsigned workers) {
  std::vector<FrameFeatures> out(count);
  parallel_for(count, workers, [&](std::size_t i) {
    PointCloud cloud = source(i);
    cloud.set_frame_id(static_cast<std::uint32_t>(i));
    out[i] = extract_features(cloud, cfg);
  });
  return out;
}

namespace {

// The best verified candidate is recorded whether or not it cleared the
// acceptance threshold; the PR sweep does the thresholding.
DetectionRecord detection_record(std::uint32_t id, const QueryOutcome& q) {
  if (q.candidates == 0) return {id, std::nullopt, std::nullopt};
  return {id, q.best_frame, q.best.coincidence};
}

}  // namespace

SequenceResult score_features(std::span<const FrameFeatures> features, const PipelineConfig& cfg) {
  cfg.validate();
  SequenceResult res;
  DescriptorDB db(cfg.descriptor.resolution);
  for (const FrameFeatures& f : features) {
    const QueryOutcome q = query_frame(db, f, cfg);
    res.records.push_back(detection_record(f.frame_id, q));
    res.timings.push_back({f.frame_id, f.descriptor_ms, q.retrieve_ms, q.verify_ms});
    insert_features(db, f);
  }
  return res;
}

SequenceResult score_sequence(const ScanSource& source, std::size_t count, const PipelineConfig& cfg,
                              unsigned workers) {
  cfg.validate();
  SequenceResult res;
  DescriptorDB db(cfg.descriptor.resolution);
  const std::size_t batch = std::max(1u, workers) * 8u;
  std::vector<std::optional<FrameFeatures>> feats;
  for (std::size_t begin = 0; begin < count; begin += batch) {
    const std::size_t n = std::min(batch, count - begin);
    feats.assign(n, std::nullopt);
    parallel_for(n, workers, [&](std::size_t k) {
      try {
        PointCloud cloud = source(begin + k);
        cloud.set_frame_id(static_cast<std::uint32_t>(begin + k));
        feats[k] = extract_features(cloud, cfg);
      } catch (const std::exception&) {
        feats[k].reset();
      }
    });
    for (std::size_t k = 0; k < n; ++k) {
      const auto id = static_cast<std::uint32_t>(begin + k);
      if (!feats[k]) {
        res.records.push_back({id, std::nullopt, std::nullopt});
        res.timings.push_back({id, 0.0, 0.0, 0.0});
        continue;
      }
      const FrameFeatures& f = *feats[k];
      const QueryOutcome q = query_frame(db, f, cfg);
      res.records.push_back(detection_record(id, q));
      res.timings.push_back({id, f.descriptor_ms, q.retrieve_ms, q.verify_ms});
      insert_features(db, f);
    }
  }
  return res;
}

std::vector<PRPoint> pr_curve(std::span<const DetectionRecord> records, const GroundTruth& gt) {
  std::size_t positives = 0;
  for (const auto& r : records) positives += gt.revisits_of(r.query).empty() ? 0 : 1;
  if (positives == 0) throw std::domain_error("recall is undefined: no query has a true revisit");

  struct Scored {
    double score;
    bool tp;
  };
  std::vector<Scored> preds;
  for (const auto& r : records) {
    if (r.predicted && r.score) preds.push_back({*r.score, gt.is_revisit(r.query, *r.predicted)});
  }
  std::sort(preds.begin(), preds.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });

  std::vector<PRPoint> curve;
  curve.push_back({std::numeric_limits<double>::infinity(), 1.0, 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < preds.size();) {
    const double thr = preds[i].score;
    while (i < preds.size() && preds[i].score == thr) {
      (preds[i].tp ? tp : fp) += 1;
      ++i;
    }
    PRPoint p;
    p.threshold = thr;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = static_cast<double>(tp) / static_cast<double>(positives);
    p.f1 = p.precision + p.recall > 0.0 ? 2.0 * p.precision * p.recall / (p.precision + p.recall) : 0.0;
    curve.push_back(p);
  }
  return curve;
}

double auc(std::span<const PRPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].recall - curve[i - 1].recall) * 0.5 * (curve[i].precision + curve[i - 1].precision);
  }
  return area;
}

double average_precision(std::span<const PRPoint> curve) {
  double ap = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) ap += (curve[i].recall - curve[i - 1].recall) * curve[i].precision;
  return ap;
}

double max_f1(std::span<const PRPoint> curve) {
  double best = 0.0;
  for (const auto& p : curve) best = std::max(best, p.f1);
  return best;
}

TimingSummary mean_timings(std::span<const FrameTiming> timings) {
  TimingSummary s;
  if (timings.empty()) return s;
  for (const auto& t : timings) {
    s.descriptor_ms += t.descriptor_ms;
    s.retrieve_ms += t.retrieve_ms;
    s.verify_ms += t.verify_ms;
  }
  const double n = static_cast<double>(timings.size());
  s.descriptor_ms /= n;
  s.retrieve_ms /= n;
  s.verify_ms /= n;
  s.search_ms = s.retrieve_ms + s.verify_ms;
  s.total_ms = s.descriptor_ms + s.search_ms;
  return s;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::domain_error("percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

void write_records_csv(const std::filesystem::path& path, std::span<const DetectionRecord> records) {
  std::ofstream out(path);
  if (!out) throw ScanIoError("cannot write " + path.string());
  out << "query,predicted,score\n";
  for (const auto& r : records) {
    out << r.query << ',';
    if (r.predicted) out << *r.predicted;
    out << ',';
    if (r.score) out << fmt(*r.score);
    out << '\n';
  }
  if (!out) throw ScanIoError("write failed for " + path.string());
}

std::vector<DetectionRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<DetectionRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto f = split_csv(line);
    if (f.size() != 3) throw InputError(where + ": expected 3 fields");
    DetectionRecord r;
    r.query = parse_u32(f[0], where);
    if (!f[1].empty()) r.predicted = parse_u32(f[1], where);
    if (!f[2].empty()) r.score = parse_double(f[2], where);
    if (r.predicted.has_value() != r.score.has_value()) throw InputError(where + ": score without prediction");
    out.push_back(r);
  }
  return out;
}

void write_pr_csv(const std::filesystem::path& path, std::span<const PRPoint> curve) {
  std::ofstream out(path);
  if (!out) throw ScanIoError("cannot write " + path.string());
  out << "threshold,precision,recall,f1\n";
  for (const auto& p : curve) {
    out << (std::isinf(p.threshold) ? std::string("inf") : fmt(p.threshold)) << ',' << fmt(p.precision) << ','
        << fmt(p.recall) << ',' << fmt(p.f1) << '\n';
  }
  if (!out) throw ScanIoError("write failed for " + path.string());
}

void write_timings_csv(const std::filesystem::path& path, std::span<const FrameTiming> timings) {
  std::ofstream out(path);
  if (!out) throw ScanIoError("cannot write " + path.string());
  out << "frame,descriptor_ms,retrieve_ms,verify_ms,search_ms,total_ms\n";
  for (const auto& t : timings) {
    out << t.frame << ',' << fmt(t.descriptor_ms) << ',' << fmt(t.retrieve_ms) << ',' << fmt(t.verify_ms) << ','
        << fmt(t.search_ms()) << ',' << fmt(t.total_ms()) << '\n';
  }
  if (!out) throw ScanIoError("write failed for " + path.string());
}

EvaluationSummary summarize(std::span<const DetectionRecord> records, std::span<const FrameTiming> timings,
                            const GroundTruth& gt) {
  EvaluationSummary s;
  const auto curve = pr_curve(records, gt);
  s.auc = auc(curve);
  s.max_f1 = max_f1(curve);
  s.average_precision = average_precision(curve);
  s.queries = records.size();
  for (const auto& r : records) {
    s.positives += gt.revisits_of(r.query).empty() ? 0 : 1;
    s.predictions += r.predicted ? 1 : 0;
  }
  s.timing = mean_timings(timings);
  return s;
}

void write_summary_csv(const std::filesystem::path& path, const EvaluationSummary& s) {
  std::ofstream out(path);
  if (!out) throw ScanIoError("cannot write " + path.string());
  out << "metric,value\n"
      << "auc," << fmt(s.auc) << '\n'
      << "max_f1," << fmt(s.max_f1) << '\n'
      << "average_precision," << fmt(s.average_precision) << '\n'
      << "queries," << s.queries << '\n'
      << "positives," << s.positives << '\n'
      << "predictions," << s.predictions << '\n'
      << "descriptor_ms_mean," << fmt(s.timing.descriptor_ms) << '\n'
      << "search_ms_mean," << fmt(s.timing.search_ms) << '\n'
      << "total_ms_mean," << fmt(s.timing.total_ms) << '\n'
      << "retrieve_ms_mean," << fmt(s.timing.retrieve_ms) << '\n'
      << "verify_ms_mean," << fmt(s.timing.verify_ms) << '\n'
      << "pr_integration,trapezoid over achieved recall from anchor (0 recall 1 precision)\n";
  if (!out) throw ScanIoError("write failed for " + path.string());
}

}  // namespace retrip
