#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <optional>
#include <thread>

#include "retrip/config.hpp"
#include "retrip/evaluation.hpp"
#include "retrip/pipeline.hpp"
#include "retrip/synth.hpp"

namespace retrip::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Globals {
  std::uint64_t seed = 1;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::string config;
  bool print_config = false;
  CLI::Option* seed_opt = nullptr;
};

// Every pipeline key as a --key flag on one subcommand.
struct PipelineFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* sub) {
    for (const auto& key : pipeline_keys()) {
      opts[key] = sub->add_option("--" + key, values[key], "pipeline setting (see --print-config)")
                      ->multi_option_policy(CLI::MultiOptionPolicy::Throw)
                      ->group("Pipeline settings");
    }
  }
  std::optional<std::string> get(const std::string& key) const {
    const auto it = opts.find(key);
    if (it == opts.end() || it->second->count() == 0) return std::nullopt;
    return values.at(key);
  }
};

// defaults < environment preset < config file < flags
PipelineConfig resolve_config(const Globals& g, const PipelineFlags* flags, std::optional<Environment> fallback_env) {
  try {
    std::vector<Setting> file;
    if (!g.config.empty()) file = read_config_file(g.config);
    std::optional<std::string> env_text;
    for (const auto& [k, v] : file) {
      if (k == "env") env_text = v;
    }
    if (flags) {
      if (auto e = flags->get("env")) env_text = *e;
    }
    const Environment env = env_text ? parse_environment(*env_text) : fallback_env.value_or(Environment::kOutdoor);
    PipelineConfig cfg = PipelineConfig::for_environment(env);
    for (const auto& [k, v] : file) {
      if (k != "env") apply_setting(cfg, k, v);
    }
    if (flags) {
      for (const auto& key : pipeline_keys()) {
        if (key == "env") continue;
        if (auto v = flags->get(key)) apply_setting(cfg, key, *v);
      }
    }
    cfg.validate();
    return cfg;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// Writes to `path`, or to `out` when path is empty.
template <typename Fn>
void emit(const std::string& path, std::ostream& out, Fn&& fn) {
  if (path.empty()) {
    fn(out);
    return;
  }
  std::ofstream f(path);
  if (!f) throw ScanIoError("cannot write " + path);
  fn(f);
  if (!f) throw ScanIoError("write failed for " + path);
}

PointCloud load_frame(const std::string& path, std::uint32_t frame) {
  PointCloud c = load_scan(path);
  c.set_frame_id(frame);
  return c;
}

// Frame id for a scan queried against `db`: explicit, or one past the newest
// stored frame with temporal exclusion disabled.
std::uint32_t query_frame_id(const DescriptorDB& db, std::optional<std::uint32_t> frame, PipelineConfig& cfg) {
  if (frame) return *frame;
  cfg.match.exclusion.reset();
  return db.frames().empty() ? 0 : db.frames().back().frame_id + 1;
}

int cmd_synth(const Globals& g, const std::string& preset_name, const std::string& out_dir,
              std::optional<int> markers, std::optional<double> dynamic_ratio, std::optional<double> spacing,
              std::ostream& out) {
  Preset p;
  try {
    p = make_preset(preset_name);
    p.scene.seed = g.seed;
    if (markers) p.scene.num_markers = *markers;
    if (dynamic_ratio) p.scene.dynamic_ratio = *dynamic_ratio;
    if (spacing) p.spacing = *spacing;
    p.scene.validate();
    if (!(p.spacing > 0.0)) throw std::invalid_argument("spacing must be positive");
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const BenchmarkInfo info = make_benchmark(p, out_dir, g.workers);
  out << "wrote " << info.frames << " scans to " << out_dir << " (preset " << info.preset << ", "
      << environment_name(info.env) << ", spacing " << fmt(info.spacing) << " m)\n";
  return 0;
}

int cmd_keypoints(const PipelineConfig& cfg, const std::string& in, const std::string& path, std::ostream& out) {
  const PointCloud cloud = load_scan(in);
  const auto classes = extract_keypoints(cloud, cfg.keypoints).classes(cloud.size());
  emit(path, out, [&](std::ostream& o) {
    o << "index,class\n";
    for (std::size_t i = 0; i < classes.size(); ++i) o << i << ',' << point_class_name(classes[i]) << '\n';
  });
  return 0;
}

int cmd_instances(const PipelineConfig& cfg, const std::string& in, const std::string& path, std::ostream& out) {
  const FrameFeatures f = extract_features(load_scan(in), cfg);
  emit(path, out, [&](std::ostream& o) {
    o << "label,size,cx,cy,cz\n";
    for (const Instance& i : f.key_set.instances) {
      o << label_value(i.label) << ',' << i.size << ',' << fmt(i.centroid.x()) << ',' << fmt(i.centroid.y()) << ','
        << fmt(i.centroid.z()) << '\n';
    }
  });
  return 0;
}

int cmd_describe(const PipelineConfig& cfg, const std::string& in, const std::string& path, std::ostream& out) {
  const FrameFeatures f = extract_features(load_scan(in), cfg);
  emit(path, out, [&](std::ostream& o) {
    o << "t,l12,l23,l13,qx,qy,qz,lab1,lab2,lab3,size1,size2,size3\n";
    for (const Descriptor& d : f.descriptors) {
      o << d.frame << ',' << fmt(d.sides[0]) << ',' << fmt(d.sides[1]) << ',' << fmt(d.sides[2]) << ','
        << fmt(d.centroid.x()) << ',' << fmt(d.centroid.y()) << ',' << fmt(d.centroid.z());
      for (const auto& v : d.vertices) o << ',' << label_value(v.instance.label);
      for (const auto& v : d.vertices) o << ',' << v.instance.size;
      o << '\n';
    }
  });
  return 0;
}

std::size_t benchmark_frames(const std::filesystem::path& dir) { return read_benchmark_info(dir).frames; }

int cmd_build_db(const Globals& g, const PipelineConfig& cfg, const std::string& bench,
                 const std::vector<std::string>& scans, const std::string& db_path, std::ostream& out) {
  if (bench.empty() == scans.empty()) throw UsageError("build-db needs exactly one of --benchmark or --in");
  const std::size_t count = bench.empty() ? scans.size() : benchmark_frames(bench);
  const ScanSource source = [&](std::size_t i) {
    return load_scan(bench.empty() ? std::filesystem::path(scans[i]) : benchmark_scan_path(bench, i));
  };
  const auto features = extract_all(source, count, cfg, g.workers);
  DescriptorDB db(cfg.descriptor.resolution);
  for (const auto& f : features) insert_features(db, f);
  db.save(db_path);
  out << "stored " << db.frames().size() << " frames, " << db.descriptor_count() << " descriptors in " << db_path
      << '\n';
  return 0;
}

int cmd_query(PipelineConfig cfg, const std::string& db_path, const std::string& scan,
              std::optional<std::uint32_t> frame, std::ostream& out) {
  const DescriptorDB db = DescriptorDB::load(db_path);
  const std::uint32_t id = query_frame_id(db, frame, cfg);
  const FrameFeatures f = extract_features(load_frame(scan, id), cfg);
  const auto candidates = db.retrieve_candidates(f.descriptors, cfg.match);
  out << "rank,frame,votes\n";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out << i + 1 << ',' << candidates[i].frame_id << ',' << candidates[i].votes << '\n';
  }
  return 0;
}

int cmd_verify(PipelineConfig cfg, const std::string& db_path, const std::string& scan,
               std::optional<std::uint32_t> frame, std::optional<std::uint32_t> candidate, std::ostream& out) {
  const DescriptorDB db = DescriptorDB::load(db_path);
  const std::uint32_t id = query_frame_id(db, frame, cfg);
  const FrameFeatures f = extract_features(load_frame(scan, id), cfg);
  auto candidates = db.retrieve_candidates(f.descriptors, cfg.match);
  if (candidate) {
    MatchConfig all = cfg.match;
    all.num_candidates = std::max<std::size_t>(db.frames().size(), 1);
    candidates = db.retrieve_candidates(f.descriptors, all);
    std::erase_if(candidates, [&](const CandidateScore& c) { return c.frame_id != *candidate; });
  }
  std::optional<std::uint32_t> best_frame;
  VerifyResult best;
  for (const auto& c : candidates) {
    const VerifyResult v = verify_loop(db, c, f.planes, cfg.verify);
    if (!best_frame || (v.accepted && !best.accepted) ||
        (v.accepted == best.accepted && v.coincidence > best.coincidence)) {
      best = v;
      best_frame = c.frame_id;
    }
  }
  out << "frame,accepted,coincidence,matched_planes,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n";
  if (best_frame) out << *best_frame;
  out << ',' << (best.accepted ? "true" : "false") << ',' << fmt(best.coincidence) << ',' << best.matched_plane_pairs;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << ',' << fmt(best.transform.rotation(r, c));
  }
  for (int k = 0; k < 3; ++k) out << ',' << fmt(best.transform.translation[k]);
  out << '\n';
  return 0;
}

int cmd_evaluate(const Globals& g, const PipelineConfig& cfg, const std::string& bench, std::string out_dir,
                 const std::string& save_db, std::ostream& out) {
  if (out_dir.empty()) out_dir = (std::filesystem::path(bench) / "metrics").string();
  const auto poses = read_poses_csv(std::filesystem::path(bench) / "poses.csv");
  const GroundTruth gt = build_ground_truth(poses, cfg.gt_threshold, cfg.match.exclusion, cfg.env);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (poses[i].frame != i) throw InputError("poses.csv frames must be numbered 0..n-1");
  }
  const ScanSource source = [&](std::size_t i) { return load_scan(benchmark_scan_path(bench, i)); };
  const SequenceResult res = score_sequence(source, poses.size(), cfg, g.workers);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  write_records_csv(dir / "records.csv", res.records);
  const auto curve = pr_curve(res.records, gt);
  write_pr_csv(dir / "pr_curve.csv", curve);
  write_timings_csv(dir / "timings.csv", res.timings);
  const EvaluationSummary s = summarize(res.records, res.timings, gt);
  write_summary_csv(dir / "summary.csv", s);
  {
    std::ofstream c(dir / "config.txt");
    c << format_config(cfg);
  }
  if (!save_db.empty()) {
    // Rebuild the final database from the stored scans.
    DescriptorDB db(cfg.descriptor.resolution);
    for (const auto& f : extract_all(source, poses.size(), cfg, g.workers)) insert_features(db, f);
    db.save(save_db);
  }
  out << "auc " << fmt(s.auc) << ", max_f1 " << fmt(s.max_f1) << ", average_precision " << fmt(s.average_precision)
      << ", " << s.predictions << " detections over " << s.queries << " queries (" << s.positives
      << " with revisits); results in " << out_dir << '\n';
  return 0;
}

int cmd_bench(PipelineConfig cfg, const std::string& scan, const std::string& db_path, int iters,
              std::optional<std::uint32_t> frame, std::ostream& out) {
  if (iters < 1) throw UsageError("--iters must be at least 1");
  DescriptorDB db(cfg.descriptor.resolution);
  std::uint32_t id = 0;
  if (!db_path.empty()) {
    db = DescriptorDB::load(db_path);
    id = query_frame_id(db, frame, cfg);
  } else {
    // Without a database the scan is searched against itself.
    cfg.match.exclusion.reset();
    insert_features(db, extract_features(load_frame(scan, 0), cfg));
  }
  const PointCloud cloud = load_frame(scan, id);
  std::vector<double> desc, search, total;
  for (int i = 0; i < iters; ++i) {
    const FrameFeatures f = extract_features(cloud, cfg);
    const QueryOutcome q = query_frame(db, f, cfg);
    desc.push_back(f.descriptor_ms);
    search.push_back(q.retrieve_ms + q.verify_ms);
    total.push_back(f.descriptor_ms + q.retrieve_ms + q.verify_ms);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  char line[128];
  out << "timing over " << iters << " iterations (ms), database of " << db.frames().size() << " frames\n";
  std::snprintf(line, sizeof(line), "%-6s %12s %12s %12s\n", "", "Descriptor", "Search", "Total");
  out << line;
  for (double p : {50.0, 90.0, 99.0}) {
    char name[16];
    std::snprintf(name, sizeof(name), "p%g", p);
    std::snprintf(line, sizeof(line), "%-6s %12.3f %12.3f %12.3f\n", name, percentile(desc, p), percentile(search, p),
                  percentile(total, p));
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-6s %12.3f %12.3f %12.3f\n", "mean", mean(desc), mean(search), mean(total));
  out << line;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"retrip"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reflectivity-augmented triangle descriptors for LiDAR place recognition", "retrip"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "random seed for synthetic data")
                   ->multi_option_policy(CLI::MultiOptionPolicy::Throw);
  app.add_option("--workers", g.workers, "worker threads for per-frame stages")
      ->check(CLI::PositiveNumber)
      ->multi_option_policy(CLI::MultiOptionPolicy::Throw);
  app.add_option("--config", g.config, "flat key = value settings file")
      ->multi_option_policy(CLI::MultiOptionPolicy::Throw);
  app.add_flag("--print-config", g.print_config, "print the effective pipeline settings and exit");

  std::map<std::string, PipelineFlags> flags;
  auto pipeline_cmd = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    flags[name].attach(sub);
    return sub;
  };
  auto single = [](CLI::Option* o) { return o->multi_option_policy(CLI::MultiOptionPolicy::Throw); };

  // synth
  std::string preset = "town", out_dir;
  std::optional<int> markers;
  std::optional<double> dynamic_ratio, spacing;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic benchmark");
  single(synth->add_option("--preset", preset, "town, corridor or corridor-nomarkers"));
  single(synth->add_option("--out", out_dir, "output directory")->required());
  single(synth->add_option("--markers", markers, "override the preset's marker count"));
  single(synth->add_option("--dynamic-ratio", dynamic_ratio, "override the clutter share"));
  single(synth->add_option("--spacing", spacing, "override the scan spacing, meters"));

  std::string in, out_path;
  CLI::App* keypoints = pipeline_cmd("keypoints", "classify the points of a scan");
  single(keypoints->add_option("--in", in, "scan file")->required());
  single(keypoints->add_option("--out", out_path, "CSV output (default stdout)"));
  CLI::App* instances = pipeline_cmd("instances", "list the key instances of a scan");
  single(instances->add_option("--in", in, "scan file")->required());
  single(instances->add_option("--out", out_path, "CSV output (default stdout)"));
  CLI::App* describe = pipeline_cmd("describe", "list the triangle descriptors of a scan");
  single(describe->add_option("--in", in, "scan file")->required());
  single(describe->add_option("--out", out_path, "CSV output (default stdout)"));

  std::string bench_dir, db_path;
  std::vector<std::string> scans;
  CLI::App* build_db = pipeline_cmd("build-db", "build a descriptor database from scans");
  single(build_db->add_option("--benchmark", bench_dir, "benchmark directory"));
  build_db->add_option("--in", scans, "scan files in frame order");
  single(build_db->add_option("--out", db_path, "database file")->required());

  std::string scan;
  std::optional<std::uint32_t> frame, candidate;
  CLI::App* query = pipeline_cmd("query", "rank loop candidates for a scan");
  single(query->add_option("--db", db_path, "database file")->required());
  single(query->add_option("--scan", scan, "scan file")->required());
  single(query->add_option("--frame", frame, "frame id of the scan (enables temporal exclusion)"));
  CLI::App* verify = pipeline_cmd("verify", "retrieve and geometrically verify loop candidates");
  single(verify->add_option("--db", db_path, "database file")->required());
  single(verify->add_option("--scan", scan, "scan file")->required());
  single(verify->add_option("--frame", frame, "frame id of the scan (enables temporal exclusion)"));
  single(verify->add_option("--candidate", candidate, "verify only this stored frame"));

  std::string save_db;
  CLI::App* evaluate = pipeline_cmd("evaluate", "score a benchmark and write metrics");
  single(evaluate->add_option("--benchmark", bench_dir, "benchmark directory")->required());
  single(evaluate->add_option("--out", out_dir, "metrics directory (default <benchmark>/metrics)"));
  single(evaluate->add_option("--save-db", save_db, "also write the final database"));

  int iters = 50;
  CLI::App* bench = pipeline_cmd("bench", "time the per-frame pipeline stages");
  single(bench->add_option("--scan", scan, "scan file")->required());
  single(bench->add_option("--db", db_path, "database to search (default: the scan itself)"));
  single(bench->add_option("--iters", iters, "iterations"));
  single(bench->add_option("--frame", frame, "frame id of the scan"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    const auto subs = app.get_subcommands();
    CLI::App* sub = subs.empty() ? nullptr : subs.front();
    const PipelineFlags* pf = sub && flags.count(sub->get_name()) ? &flags.at(sub->get_name()) : nullptr;
    std::optional<Environment> fallback;
    if (sub == evaluate) {
      try {
        fallback = read_benchmark_info(bench_dir).env;
      } catch (const ScanIoError&) {
      }
    }
    if (g.print_config) {
      out << format_config(resolve_config(g, pf, fallback));
      return 0;
    }
    if (!sub) throw UsageError("a subcommand is required");
    if (sub == synth) return cmd_synth(g, preset, out_dir, markers, dynamic_ratio, spacing, out);
    const PipelineConfig cfg = resolve_config(g, pf, fallback);
    if (sub == keypoints) return cmd_keypoints(cfg, in, out_path, out);
    if (sub == instances) return cmd_instances(cfg, in, out_path, out);
    if (sub == describe) return cmd_describe(cfg, in, out_path, out);
    if (sub == build_db) return cmd_build_db(g, cfg, bench_dir, scans, db_path, out);
    if (sub == query) return cmd_query(cfg, db_path, scan, frame, out);
    if (sub == verify) return cmd_verify(cfg, db_path, scan, frame, candidate, out);
    if (sub == evaluate) return cmd_evaluate(g, cfg, bench_dir, out_dir, save_db, out);
    if (sub == bench) return cmd_bench(cfg, scan, db_path, iters, frame, out);
    throw UsageError("unhandled subcommand");
  } catch (const UsageError& e) {
    err << "error: usage: " << e.what() << '\n' << app.help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace retrip::cli
