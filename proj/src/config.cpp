#include "retrip/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace retrip {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

struct Field {
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename Member>
Field real(Member m) {
  return {[m](PipelineConfig& c, const std::string& k, const std::string& v) { m(c) = to_double(k, v); },
          [m](const PipelineConfig& c) { return fmt(m(const_cast<PipelineConfig&>(c))); }};
}

template <typename Int, typename Member>
Field integer(Member m) {
  return {[m](PipelineConfig& c, const std::string& k, const std::string& v) { m(c) = to_int<Int>(k, v); },
          [m](const PipelineConfig& c) { return std::to_string(m(const_cast<PipelineConfig&>(c))); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("env", Field{[](PipelineConfig& c, const std::string&, const std::string& v) {
                                  c.set_environment(parse_environment(v));
                                },
                                [](const PipelineConfig& c) { return std::string(environment_name(c.env)); }});
    t.emplace_back("z-a", real([](PipelineConfig& c) -> double& { return c.keypoints.z_a; }));
    t.emplace_back("delta-r", real([](PipelineConfig& c) -> double& { return c.keypoints.delta_r; }));
    t.emplace_back("window", integer<int>([](PipelineConfig& c) -> int& { return c.keypoints.window; }));
    t.emplace_back("sigma-floor", Field{[](PipelineConfig& c, const std::string& k, const std::string& v) {
                                          c.keypoints.sigma_floor = c.verify.sigma_floor = to_double(k, v);
                                        },
                                        [](const PipelineConfig& c) { return fmt(c.keypoints.sigma_floor); }});
    t.emplace_back("radius", real([](PipelineConfig& c) -> double& { return c.cluster.radius; }));
    t.emplace_back("min-cluster",
                   integer<std::size_t>([](PipelineConfig& c) -> std::size_t& { return c.cluster.min_cluster_size; }));
    t.emplace_back("max-cluster",
                   integer<std::size_t>([](PipelineConfig& c) -> std::size_t& { return c.cluster.max_cluster_size; }));
    t.emplace_back("k", integer<std::size_t>([](PipelineConfig& c) -> std::size_t& { return c.cluster.k; }));
    t.emplace_back("side-min", real([](PipelineConfig& c) -> double& { return c.descriptor.side_min; }));
    t.emplace_back("side-max", real([](PipelineConfig& c) -> double& { return c.descriptor.side_max; }));
    t.emplace_back("resolution", real([](PipelineConfig& c) -> double& { return c.descriptor.resolution; }));
    t.emplace_back("degenerate-eps", real([](PipelineConfig& c) -> double& { return c.descriptor.degenerate_eps; }));
    t.emplace_back("side-tol", real([](PipelineConfig& c) -> double& { return c.match.side_tol; }));
    t.emplace_back("size-ratio-tol", real([](PipelineConfig& c) -> double& { return c.match.size_ratio_tol; }));
    t.emplace_back("candidates",
                   integer<std::size_t>([](PipelineConfig& c) -> std::size_t& { return c.match.num_candidates; }));
    t.emplace_back("label-match", Field{[](PipelineConfig& c, const std::string& k, const std::string& v) {
                                          c.match.require_label_match = to_bool(k, v);
                                        },
                                        [](const PipelineConfig& c) {
                                          return std::string(c.match.require_label_match ? "true" : "false");
                                        }});
    t.emplace_back("exclusion", Field{[](PipelineConfig& c, const std::string& k, const std::string& v) {
                                        if (v == "none") {
                                          c.match.exclusion.reset();
                                        } else {
                                          c.match.exclusion = to_int<std::uint32_t>(k, v);
                                        }
                                      },
                                      [](const PipelineConfig& c) {
                                        return c.match.exclusion ? std::to_string(*c.match.exclusion)
                                                                 : std::string("none");
                                      }});
    t.emplace_back("voxel-size", real([](PipelineConfig& c) -> double& { return c.verify.voxel_size; }));
    t.emplace_back("planarity-ratio", real([](PipelineConfig& c) -> double& { return c.verify.planarity_ratio; }));
    t.emplace_back("min-voxel-points",
                   integer<std::size_t>([](PipelineConfig& c) -> std::size_t& { return c.verify.min_voxel_points; }));
    t.emplace_back("z-l", real([](PipelineConfig& c) -> double& { return c.verify.z_l; }));
    t.emplace_back("sigma-n", real([](PipelineConfig& c) -> double& { return c.verify.sigma_n; }));
    t.emplace_back("sigma-d", real([](PipelineConfig& c) -> double& { return c.verify.sigma_d; }));
    t.emplace_back("sigma-lambda", integer<int>([](PipelineConfig& c) -> int& { return c.verify.sigma_lambda; }));
    t.emplace_back("accept-threshold", real([](PipelineConfig& c) -> double& { return c.verify.accept_threshold; }));
    t.emplace_back("consensus-dist", real([](PipelineConfig& c) -> double& { return c.verify.consensus_dist; }));
    t.emplace_back("max-hypotheses",
                   integer<std::size_t>([](PipelineConfig& c) -> std::size_t& { return c.verify.max_hypotheses; }));
    t.emplace_back("gt-threshold", real([](PipelineConfig& c) -> double& { return c.gt_threshold; }));
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw std::invalid_argument("unknown setting '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& pipeline_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  field(key).set(cfg, key, trim(value));
}

std::string get_setting(const PipelineConfig& cfg, const std::string& key) { return field(key).get(cfg); }

std::vector<Setting> parse_config_text(const std::string& text) {
  std::vector<Setting> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    if (!seen.insert(key).second) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": '" + key + "' set twice");
    }
    out.emplace_back(key, value);
  }
  return out;
}

std::vector<Setting> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace retrip
