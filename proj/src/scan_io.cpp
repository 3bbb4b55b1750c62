#include "retrip/scan_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "retrip/kernels.hpp"

namespace retrip {

namespace {

constexpr char kMagic[4] = {'R', 'T', 'R', 'P'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kRecordBytes = 4 * sizeof(float) + sizeof(std::uint16_t);

static_assert(std::endian::native == std::endian::little,
              "binary scan codec assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

std::string record_error(const char* what, long record, std::size_t offset, const char* unit) {
  std::ostringstream os;
  os << what << " at record " << record << " (" << unit << " " << offset << ")";
  return os.str();
}

}  // namespace

PointCloud::PointCloud(std::vector<Point> points, std::vector<std::uint16_t> rings,
                       std::uint32_t ring_count, std::uint32_t frame_id)
    : points_(std::move(points)), rings_(std::move(rings)), ring_count_(ring_count),
      frame_id_(frame_id) {
  if (points_.size() != rings_.size()) {
    throw std::invalid_argument("point and ring arrays differ in length");
  }
  if (!points_.empty() && ring_count_ == 0) {
    throw std::invalid_argument("non-empty cloud without rings");
  }
  std::vector<std::uint32_t> counts(ring_count_ + 1, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const Point& p = points_[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.r)) {
      throw std::invalid_argument("non-finite point " + std::to_string(i));
    }
    if (p.r < 0.0) throw std::invalid_argument("negative reflectivity at point " + std::to_string(i));
    if (rings_[i] >= ring_count_) {
      throw std::invalid_argument("ring id out of range at point " + std::to_string(i));
    }
    ++counts[rings_[i] + 1];
  }
  ring_offsets_.assign(ring_count_ + 1, 0);
  for (std::uint32_t r = 0; r < ring_count_; ++r) ring_offsets_[r + 1] = ring_offsets_[r] + counts[r + 1];
  ring_order_.resize(points_.size());
  ring_pos_.resize(points_.size());
  std::vector<std::uint32_t> cursor(ring_offsets_.begin(), ring_offsets_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const std::uint32_t slot = cursor[rings_[i]]++;
    ring_order_[slot] = static_cast<std::uint32_t>(i);
    ring_pos_[i] = slot - ring_offsets_[rings_[i]];
  }
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t) {
  std::vector<Point> pts;
  pts.reserve(cloud.size());
  for (const Point& p : cloud.points()) {
    const Vec3 q = t.apply(p.xyz());
    pts.push_back({q.x(), q.y(), q.z(), p.r});
  }
  return PointCloud(std::move(pts), {cloud.rings().begin(), cloud.rings().end()}, cloud.ring_count(),
                    cloud.frame_id());
}

ScanFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".txt" ? ScanFormat::kText : ScanFormat::kBinary;
}

std::vector<std::uint8_t> encode_binary(const PointCloud& cloud) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + cloud.size() * kRecordBytes);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.size()));
  put<std::uint32_t>(out, cloud.ring_count());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud[i];
    put<float>(out, static_cast<float>(p.x));
    put<float>(out, static_cast<float>(p.y));
    put<float>(out, static_cast<float>(p.z));
    put<float>(out, static_cast<float>(p.r));
    put<std::uint16_t>(out, cloud.ring_of(i));
  }
  return out;
}

PointCloud decode_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw ScanParseError("truncated header", -1, bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ScanParseError("bad magic", -1, 0);
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kVersion) {
    throw ScanParseError("unsupported version " + std::to_string(version), -1, 4);
  }
  const auto count = get<std::uint32_t>(bytes, 8);
  const auto ring_count = get<std::uint32_t>(bytes, 12);
  if (ring_count > 65536u) throw ScanParseError("ring count exceeds u16 range", -1, 12);
  if (count > 0 && ring_count == 0) throw ScanParseError("points without rings", -1, 12);

  std::vector<Point> points;
  std::vector<std::uint16_t> rings;
  points.reserve(count);
  rings.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t off = kHeaderBytes + std::size_t{i} * kRecordBytes;
    if (off + kRecordBytes > bytes.size()) {
      throw ScanParseError(record_error("truncated record", i, off, "byte"), i, off);
    }
    Point p{get<float>(bytes, off), get<float>(bytes, off + 4), get<float>(bytes, off + 8),
            get<float>(bytes, off + 12)};
    const auto ring = get<std::uint16_t>(bytes, off + 16);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.r)) {
      throw ScanParseError(record_error("non-finite value", i, off, "byte"), i, off);
    }
    if (p.r < 0.0) throw ScanParseError(record_error("negative reflectivity", i, off, "byte"), i, off);
    if (ring >= ring_count) throw ScanParseError(record_error("ring id out of range", i, off, "byte"), i, off);
    points.push_back(p);
    rings.push_back(ring);
  }
  const std::size_t expected = kHeaderBytes + std::size_t{count} * kRecordBytes;
  if (bytes.size() != expected) throw ScanParseError("trailing bytes after last record", count, expected);
  return PointCloud(std::move(points), std::move(rings), ring_count);
}

std::string encode_text(const PointCloud& cloud) {
  std::ostringstream os;
  os.precision(17);
  os << "rtrp v1 " << cloud.size() << ' ' << cloud.ring_count() << '\n';
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud[i];
    os << p.x << ' ' << p.y << ' ' << p.z << ' ' << p.r << ' ' << cloud.ring_of(i) << '\n';
  }
  return os.str();
}

PointCloud decode_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ScanParseError("missing header line", -1, 1);
  std::istringstream header(line);
  std::string magic, version;
  long long count = -1, ring_count = -1;
  std::string extra;
  if (!(header >> magic >> version >> count >> ring_count) || magic != "rtrp" || version != "v1" ||
      count < 0 || ring_count < 0 || ring_count > 65536 || (header >> extra)) {
    throw ScanParseError("malformed header '" + line + "'", -1, 1);
  }
  if (count > 0 && ring_count == 0) throw ScanParseError("points without rings", -1, 1);

  std::vector<Point> points;
  std::vector<std::uint16_t> rings;
  points.reserve(static_cast<std::size_t>(count));
  rings.reserve(static_cast<std::size_t>(count));
  std::size_t line_no = 1;
  long record = 0;
  while (record < count) {
    if (!std::getline(is, line)) {
      throw ScanParseError(record_error("truncated file", record, line_no + 1, "line"), record, line_no + 1);
    }
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    Point p;
    long long ring = -1;
    std::string tok[5];
    if (!(fields >> tok[0] >> tok[1] >> tok[2] >> tok[3] >> tok[4]) || (fields >> extra)) {
      throw ScanParseError(record_error("malformed record", record, line_no, "line"), record, line_no);
    }
    double* dst[4] = {&p.x, &p.y, &p.z, &p.r};
    for (int k = 0; k < 4; ++k) {
      const auto& s = tok[k];
      const auto res = std::from_chars(s.data(), s.data() + s.size(), *dst[k]);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ScanParseError(record_error("unparsable number", record, line_no, "line"), record, line_no);
      }
    }
    {
      const auto res = std::from_chars(tok[4].data(), tok[4].data() + tok[4].size(), ring);
      if (res.ec != std::errc() || res.ptr != tok[4].data() + tok[4].size()) {
        throw ScanParseError(record_error("unparsable ring id", record, line_no, "line"), record, line_no);
      }
    }
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.r)) {
      throw ScanParseError(record_error("non-finite value", record, line_no, "line"), record, line_no);
    }
    if (p.r < 0.0) {
      throw ScanParseError(record_error("negative reflectivity", record, line_no, "line"), record, line_no);
    }
    if (ring < 0 || ring >= ring_count) {
      throw ScanParseError(record_error("ring id out of range", record, line_no, "line"), record, line_no);
    }
    points.push_back(p);
    rings.push_back(static_cast<std::uint16_t>(ring));
    ++record;
  }
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      throw ScanParseError("more records than declared", count, line_no);
    }
  }
  return PointCloud(std::move(points), std::move(rings), static_cast<std::uint32_t>(ring_count));
}

PointCloud load_scan(const std::filesystem::path& path, ScanFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScanIoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (format == ScanFormat::kText) return decode_text(data);
  return decode_binary({reinterpret_cast<const std::uint8_t*>(data.data()), data.size()});
}

PointCloud load_scan(const std::filesystem::path& path) { return load_scan(path, format_from_path(path)); }

void save_scan(const PointCloud& cloud, const std::filesystem::path& path, ScanFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ScanIoError("cannot write " + path.string());
  if (format == ScanFormat::kText) {
    out << encode_text(cloud);
  } else {
    const auto bytes = encode_binary(cloud);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw ScanIoError("write failed for " + path.string());
}

void save_scan(const PointCloud& cloud, const std::filesystem::path& path) {
  save_scan(cloud, path, format_from_path(path));
}

ReflectivityStats reflectivity_stats(const PointCloud& cloud) {
  if (cloud.empty()) throw std::domain_error("reflectivity statistics of an empty cloud");
  std::vector<double> r(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) r[i] = cloud[i].r;
  const auto& k = kernels::active_kernels();
  const double n = static_cast<double>(r.size());
  const double mean = k.sum(r) / n;
  const double var = k.sum_sq_dev(r, mean) / n;
  return {mean, std::sqrt(var), r.size()};
}

}  // namespace retrip
