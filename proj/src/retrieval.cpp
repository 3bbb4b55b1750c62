#include "retrip/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "retrip/kernels.hpp"

namespace retrip {

namespace {

double size_ratio(std::uint32_t a, std::uint32_t b) {
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace

void MatchConfig::validate() const {
  if (!(side_tol > 0.0)) throw std::invalid_argument("side_tol must be positive");
  if (!(size_ratio_tol >= 1.0)) throw std::invalid_argument("size_ratio_tol must be at least 1");
  if (num_candidates < 1) throw std::invalid_argument("num_candidates must be at least 1");
}

bool descriptors_match(const Descriptor& q, const Descriptor& d, const MatchConfig& cfg) {
  for (int i = 0; i < 3; ++i) {
    if (!(std::abs(q.sides[i] - d.sides[i]) <= cfg.side_tol)) return false;
  }
  for (int j = 0; j < 3; ++j) {
    const Instance& a = q.vertices[j].instance;
    const Instance& b = d.vertices[j].instance;
    if (cfg.require_label_match && a.label != b.label) return false;
    if (size_ratio(a.size, b.size) > cfg.size_ratio_tol) return false;
  }
  return true;
}

DescriptorDB::DescriptorDB(double resolution) : resolution_(resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be positive");
}

void DescriptorDB::insert_frame(std::span<const Descriptor> descriptors, KeyInstanceSet key_set,
                                std::vector<Plane> planes) {
  const std::uint32_t id = key_set.frame_id;
  if (!frames_.empty() && id <= frames_.back().frame_id) {
    throw std::logic_error("frame " + std::to_string(id) + " inserted after frame " +
                           std::to_string(frames_.back().frame_id));
  }
  if (key_set.instances.size() > 256) throw std::logic_error("key-instance set larger than 256");
  for (const Descriptor& d : descriptors) {
    if (d.frame != id) throw std::logic_error("descriptor frame differs from key-set frame");
    for (const auto& v : d.vertices) {
      if (v.slot >= key_set.instances.size()) throw std::logic_error("descriptor vertex outside key set");
    }
  }
  const auto frame_index = static_cast<std::uint32_t>(frames_.size());
  frames_.push_back({id, std::move(key_set), std::move(planes), static_cast<std::uint32_t>(descriptors.size())});
  for (const Descriptor& d : descriptors) {
    const auto e = static_cast<std::uint32_t>(entries_.size());
    entries_.push_back({d.sides, frame_index,
                        {static_cast<std::uint8_t>(d.vertices[0].slot), static_cast<std::uint8_t>(d.vertices[1].slot),
                         static_cast<std::uint8_t>(d.vertices[2].slot)}});
    Bucket& b = buckets_[hash_key(d.sides, resolution_)];
    b.s0.push_back(d.sides[0]);
    b.s1.push_back(d.sides[1]);
    b.s2.push_back(d.sides[2]);
    b.ids.push_back(e);
  }
}

const FrameRecord* DescriptorDB::frame(std::uint32_t frame_id) const {
  const std::size_t i = frame_index(frame_id);
  return i < frames_.size() ? &frames_[i] : nullptr;
}

std::size_t DescriptorDB::frame_index(std::uint32_t frame_id) const {
  const auto it = std::lower_bound(frames_.begin(), frames_.end(), frame_id,
                                   [](const FrameRecord& f, std::uint32_t id) { return f.frame_id < id; });
  if (it == frames_.end() || it->frame_id != frame_id) return frames_.size();
  return static_cast<std::size_t>(it - frames_.begin());
}

std::size_t DescriptorDB::bucket_size(const HashKey& key) const {
  const auto it = buckets_.find(key);
  return it == buckets_.end() ? 0 : it->second.ids.size();
}

bool DescriptorDB::excluded(std::uint32_t stored_frame, std::uint32_t query_frame, const MatchConfig& cfg) const {
  if (!cfg.exclusion) return false;
  const std::uint32_t gap = stored_frame > query_frame ? stored_frame - query_frame : query_frame - stored_frame;
  return gap <= *cfg.exclusion;
}

// Side lengths are checked by the caller.
bool DescriptorDB::entry_matches(const Entry& e, const Descriptor& q, const MatchConfig& cfg) const {
  const auto& instances = frames_[e.frame_index].key_set.instances;
  for (int j = 0; j < 3; ++j) {
    const Instance& a = q.vertices[j].instance;
    const Instance& b = instances[e.slots[j]];
    if (cfg.require_label_match && a.label != b.label) return false;
    if (size_ratio(a.size, b.size) > cfg.size_ratio_tol) return false;
  }
  return true;
}

void DescriptorDB::collect_matches(const Descriptor& q, const MatchConfig& cfg, std::vector<std::uint32_t>& out,
                                   std::vector<std::uint32_t>& scratch) const {
  const auto& k = kernels::active_kernels();
  const HashKey center = hash_key(q.sides, resolution_);
  const auto reach = static_cast<std::int32_t>(std::ceil(cfg.side_tol / resolution_));
  const std::size_t first = out.size();
  HashKey probe;
  for (std::int32_t a = -reach; a <= reach; ++a) {
    probe.bins[0] = center.bins[0] + a;
    for (std::int32_t b = -reach; b <= reach; ++b) {
      probe.bins[1] = center.bins[1] + b;
      // Sorted sides give non-decreasing keys; skip impossible buckets.
      if (probe.bins[1] < probe.bins[0]) continue;
      for (std::int32_t c = -reach; c <= reach; ++c) {
        probe.bins[2] = center.bins[2] + c;
        if (probe.bins[2] < probe.bins[1]) continue;
        const auto it = buckets_.find(probe);
        if (it == buckets_.end()) continue;
        const Bucket& bucket = it->second;
        if (scratch.size() < bucket.ids.size()) scratch.resize(bucket.ids.size());
        const std::size_t hits = k.within_box({bucket.s0, bucket.s1, bucket.s2}, q.sides[0], q.sides[1], q.sides[2],
                                              cfg.side_tol, scratch.data());
        for (std::size_t h = 0; h < hits; ++h) {
          const std::uint32_t e = bucket.ids[scratch[h]];
          const Entry& entry = entries_[e];
          if (excluded(frames_[entry.frame_index].frame_id, q.frame, cfg)) continue;
          if (entry_matches(entry, q, cfg)) out.push_back(e);
        }
      }
    }
  }
  std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end());
}

Descriptor DescriptorDB::materialize(const Entry& e) const {
  const FrameRecord& f = frames_[e.frame_index];
  Descriptor d;
  for (int j = 0; j < 3; ++j) d.vertices[j] = {f.key_set.instances[e.slots[j]], e.slots[j]};
  d.sides = e.sides;
  d.centroid = (d.vertices[0].instance.centroid + d.vertices[1].instance.centroid +
                d.vertices[2].instance.centroid) /
               3.0;
  d.frame = f.frame_id;
  return d;
}

std::vector<Descriptor> DescriptorDB::match_descriptor(const Descriptor& q, const MatchConfig& cfg) const {
  cfg.validate();
  std::vector<std::uint32_t> ids, scratch;
  collect_matches(q, cfg, ids, scratch);
  std::vector<Descriptor> out;
  out.reserve(ids.size());
  for (auto e : ids) out.push_back(materialize(entries_[e]));
  return out;
}

std::vector<CandidateScore> DescriptorDB::retrieve_candidates(std::span<const Descriptor> query,
                                                              const MatchConfig& cfg) const {
  cfg.validate();
  std::vector<std::uint32_t> votes(frames_.size(), 0);
  // (query index, entry id) for every matched pair. Reused across calls: a
  // busy query matches ~1e5 entries and fresh buffers cost page faults.
  thread_local std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  thread_local std::vector<std::uint32_t> ids, scratch;
  pairs.clear();
  for (std::size_t qi = 0; qi < query.size(); ++qi) {
    ids.clear();
    collect_matches(query[qi], cfg, ids, scratch);
    for (auto e : ids) {
      ++votes[entries_[e].frame_index];
      pairs.emplace_back(static_cast<std::uint32_t>(qi), e);
    }
  }

  std::vector<std::uint32_t> ranked;
  for (std::uint32_t f = 0; f < votes.size(); ++f) {
    if (votes[f] > 0) ranked.push_back(f);
  }
  // Frame indices increase with frame id, so a larger index is more recent.
  const std::size_t keep = std::min(cfg.num_candidates, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (votes[a] != votes[b]) return votes[a] > votes[b];
                      return a > b;
                    });
  ranked.resize(keep);

  std::vector<CandidateScore> out(keep);
  std::vector<std::int32_t> slot_of(frames_.size(), -1);
  for (std::size_t i = 0; i < keep; ++i) {
    out[i].frame_id = frames_[ranked[i]].frame_id;
    out[i].votes = votes[ranked[i]];
    out[i].matched_pairs.reserve(votes[ranked[i]]);
    slot_of[ranked[i]] = static_cast<std::int32_t>(i);
  }
  for (const auto& [qi, e] : pairs) {
    const std::int32_t s = slot_of[entries_[e].frame_index];
    if (s >= 0) out[static_cast<std::size_t>(s)].matched_pairs.emplace_back(query[qi], materialize(entries_[e]));
  }
  return out;
}

std::vector<Descriptor> DescriptorDB::all_descriptors() const {
  std::vector<Descriptor> out;
  out.reserve(entries_.size());
  for (const Entry& e : entries_) out.push_back(materialize(e));
  return out;
}

}  // namespace retrip
