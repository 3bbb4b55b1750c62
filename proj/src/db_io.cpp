// Binary layout of a descriptor database (all little-endian), version 1:
//
//   char[4]  magic "RTDB"
//   u32      version
//   f64      resolution
//   u32      frame_count
//   frame_count x {
//     u32 frame_id, u32 descriptor_count,
//     u32 instance_count, instance_count x {f64 cx, f64 cy, f64 cz, u8 label, u32 size, u32 first_member},
//     u32 plane_count, plane_count x {f64 center[3], f64 normal[3], i32 layer, u32 support}
//   }
//   u64      entry_count
//   entry_count x {i32 key[3], f64 sides[3], u32 frame_index, u8 slots[3]}
//
// Entries are written in insertion order and buckets are rebuilt on load, so
// serialize(deserialize(bytes)) == bytes.

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "retrip/retrieval.hpp"

namespace retrip {

namespace {

constexpr char kMagic[4] = {'R', 'T', 'D', 'B'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "database codec assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw DbFormatError("database truncated at byte " + std::to_string(pos_));
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> DescriptorDB::serialize() const {
  Writer w;
  for (char c : kMagic) w.put<char>(c);
  w.put<std::uint32_t>(kVersion);
  w.put<double>(resolution_);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(frames_.size()));
  for (const FrameRecord& f : frames_) {
    w.put<std::uint32_t>(f.frame_id);
    w.put<std::uint32_t>(f.descriptor_count);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(f.key_set.instances.size()));
    for (const Instance& i : f.key_set.instances) {
      w.put<double>(i.centroid.x());
      w.put<double>(i.centroid.y());
      w.put<double>(i.centroid.z());
      w.put<std::uint8_t>(static_cast<std::uint8_t>(i.label));
      w.put<std::uint32_t>(i.size);
      w.put<std::uint32_t>(i.first_member);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(f.planes.size()));
    for (const Plane& p : f.planes) {
      for (int k = 0; k < 3; ++k) w.put<double>(p.center[k]);
      for (int k = 0; k < 3; ++k) w.put<double>(p.normal[k]);
      w.put<std::int32_t>(p.layer);
      w.put<std::uint32_t>(p.support);
    }
  }
  w.put<std::uint64_t>(entries_.size());
  for (const Entry& e : entries_) {
    const HashKey key = hash_key(e.sides, resolution_);
    for (auto b : key.bins) w.put<std::int32_t>(b);
    for (double s : e.sides) w.put<double>(s);
    w.put<std::uint32_t>(e.frame_index);
    for (auto s : e.slots) w.put<std::uint8_t>(s);
  }
  return std::move(w.bytes);
}

DescriptorDB DescriptorDB::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, 4) != 0) throw DbFormatError("not a descriptor database (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw DbFormatError("unsupported database version " + std::to_string(version));
  const double resolution = r.get<double>();
  if (!(resolution > 0.0)) throw DbFormatError("invalid resolution");
  DescriptorDB db(resolution);

  const auto frame_count = r.get<std::uint32_t>();
  std::vector<FrameRecord> frames(frame_count);
  for (auto& f : frames) {
    f.frame_id = r.get<std::uint32_t>();
    f.key_set.frame_id = f.frame_id;
    f.descriptor_count = r.get<std::uint32_t>();
    const auto ni = r.get<std::uint32_t>();
    if (ni > 256) throw DbFormatError("key-instance set larger than 256");
    f.key_set.instances.resize(ni);
    for (Instance& i : f.key_set.instances) {
      const double x = r.get<double>(), y = r.get<double>(), z = r.get<double>();
      i.centroid = {x, y, z};
      const auto label = r.get<std::uint8_t>();
      if (label > 1) throw DbFormatError("invalid instance label");
      i.label = static_cast<Label>(label);
      i.size = r.get<std::uint32_t>();
      i.first_member = r.get<std::uint32_t>();
    }
    const auto np = r.get<std::uint32_t>();
    f.planes.resize(np);
    for (Plane& p : f.planes) {
      for (int k = 0; k < 3; ++k) p.center[k] = r.get<double>();
      for (int k = 0; k < 3; ++k) p.normal[k] = r.get<double>();
      p.layer = r.get<std::int32_t>();
      p.support = r.get<std::uint32_t>();
    }
  }

  const auto entry_count = r.get<std::uint64_t>();
  std::vector<std::vector<Descriptor>> per_frame(frame_count);
  std::vector<std::uint32_t> last_frame_index;
  for (std::uint64_t n = 0; n < entry_count; ++n) {
    HashKey key;
    for (auto& b : key.bins) b = r.get<std::int32_t>();
    Descriptor d;
    for (double& s : d.sides) s = r.get<double>();
    const auto fi = r.get<std::uint32_t>();
    std::array<std::uint8_t, 3> slots;
    for (auto& s : slots) s = r.get<std::uint8_t>();
    if (fi >= frame_count) throw DbFormatError("entry refers to a missing frame");
    if (!last_frame_index.empty() && fi < last_frame_index.back()) {
      throw DbFormatError("entries out of insertion order");
    }
    if (!(hash_key(d.sides, resolution) == key)) throw DbFormatError("entry key does not match its sides");
    const auto& inst = frames[fi].key_set.instances;
    for (int j = 0; j < 3; ++j) {
      if (slots[j] >= inst.size()) throw DbFormatError("entry vertex outside key set");
      d.vertices[j] = {inst[slots[j]], slots[j]};
    }
    d.frame = frames[fi].frame_id;
    last_frame_index.push_back(fi);
    per_frame[fi].push_back(d);
  }
  if (!r.done()) throw DbFormatError("trailing bytes at offset " + std::to_string(r.pos()));

  for (std::uint32_t fi = 0; fi < frame_count; ++fi) {
    if (per_frame[fi].size() != frames[fi].descriptor_count) {
      throw DbFormatError("descriptor count mismatch for frame " + std::to_string(frames[fi].frame_id));
    }
    try {
      db.insert_frame(per_frame[fi], std::move(frames[fi].key_set), std::move(frames[fi].planes));
    } catch (const std::logic_error& e) {
      throw DbFormatError(std::string("inconsistent frame record: ") + e.what());
    }
  }
  return db;
}

void DescriptorDB::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

DescriptorDB DescriptorDB::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

bool operator==(const DescriptorDB& a, const DescriptorDB& b) { return a.serialize() == b.serialize(); }

}  // namespace retrip
