#include "ukd/io/feature_store.hpp"

#include <nlohmann/json.hpp>

#include <sstream>
#include <unordered_set>

#include "ukd/errors.hpp"
#include "ukd/io/binary.hpp"

namespace ukd::io {

namespace {
constexpr std::string_view kMagic = "GPFMFEAT";
}

FeatureStore::FeatureStore(std::uint32_t dim, std::vector<float> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim_ == 0 && !values_.empty()) throw DimensionError("feature store with zero width");
  if (dim_ != 0 && values_.size() % dim_ != 0) {
    throw DimensionError("feature store payload of " + std::to_string(values_.size()) +
                         " floats is not a multiple of dim " + std::to_string(dim_));
  }
}

std::span<const float> FeatureStore::row(std::uint64_t i) const {
  if (i >= count()) {
    throw DimensionError("feature row " + std::to_string(i) + " out of range (count " +
                         std::to_string(count()) + ")");
  }
  return std::span<const float>(values_).subspan(i * dim_, dim_);
}

void FeatureStore::append(std::span<const float> row) {
  if (dim_ == 0 && values_.empty()) dim_ = static_cast<std::uint32_t>(row.size());
  if (row.size() != dim_) {
    throw DimensionError("feature row of width " + std::to_string(row.size()) +
                         " appended to a store of dim " + std::to_string(dim_));
  }
  values_.insert(values_.end(), row.begin(), row.end());
}

void FeatureStore::append(std::span<const double> row) {
  std::vector<float> f(row.begin(), row.end());
  append(std::span<const float>(f));
}

std::vector<std::uint8_t> FeatureStore::serialize() const {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u32(dim_);
  w.u64(count());
  w.u8(0);
  w.zeros(7);
  for (float v : values_) w.f32(v);
  w.crc32_trailer();
  return w.take();
}

FeatureStore FeatureStore::parse(std::span<const std::uint8_t> bytes) {
  const std::string what = "feature store";
  ByteReader head(bytes, what);
  if (head.raw(kMagic.size()) != kMagic) throw CorruptionError("feature store: bad magic");
  const std::uint32_t version = head.u32();
  if (version != kVersion) {
    throw VersionMismatchError("feature store version " + std::to_string(version) +
                               " (supported: " + std::to_string(kVersion) + ")");
  }
  const auto body = checked_body(bytes, what);
  ByteReader r(body, what);
  r.skip(kMagic.size() + 4);
  const std::uint32_t dim = r.u32();
  const std::uint64_t count = r.u64();
  const std::uint8_t dtype = r.u8();
  if (dtype != 0) throw CorruptionError("feature store: unsupported dtype " + std::to_string(dtype));
  r.skip(7);
  const std::uint64_t n = count * dim;
  if (r.remaining() != n * 4) {
    throw CorruptionError("feature store: payload holds " + std::to_string(r.remaining()) +
                          " bytes, header promises " + std::to_string(n * 4));
  }
  std::vector<float> values(n);
  for (auto& v : values) v = r.f32();
  return FeatureStore(dim, std::move(values));
}

void FeatureStore::write(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

FeatureStore FeatureStore::read(const std::filesystem::path& path) {
  return parse(read_file(path));
}

std::vector<ManifestRecord> parse_manifest(const std::string& text) {
  static const std::unordered_set<std::string> kKeys{"id",   "row_index", "label",   "bag_id",
                                                     "time", "event",     "view_key"};
  std::vector<ManifestRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError(where + ": " + e.what());
    }
    if (!j.is_object()) throw CorruptionError(where + ": not a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (!kKeys.contains(k)) throw ConfigurationError(where + ": unknown key \"" + k + "\"");
    }
    try {
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.row_index = j.at("row_index").get<std::uint64_t>();
      if (j.contains("label")) r.label = j["label"].get<long long>();
      if (j.contains("bag_id")) r.bag_id = j["bag_id"].get<std::string>();
      if (j.contains("time")) r.time = j["time"].get<double>();
      if (j.contains("event")) r.event = j["event"].get<int>();
      if (j.contains("view_key")) r.view_key = j["view_key"].get<std::string>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError(where + ": " + e.what());
    }
  }
  return out;
}

std::string format_manifest(std::span<const ManifestRecord> records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["row_index"] = r.row_index;
    if (r.label) j["label"] = *r.label;
    if (r.bag_id) j["bag_id"] = *r.bag_id;
    if (r.time) j["time"] = *r.time;
    if (r.event) j["event"] = *r.event;
    if (r.view_key) j["view_key"] = *r.view_key;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text(path));
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records) {
  write_text(path, format_manifest(records));
}

void validate_manifest(std::span<const ManifestRecord> records, std::uint64_t count) {
  std::unordered_set<std::uint64_t> seen;
  for (const auto& r : records) {
    if (r.row_index >= count) {
      throw CorruptionError("manifest row_index " + std::to_string(r.row_index) +
                            " outside store of " + std::to_string(count) + " rows");
    }
    if (!seen.insert(r.row_index).second) {
      throw CorruptionError("manifest row_index " + std::to_string(r.row_index) +
                            " appears twice");
    }
  }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& store) {
  return std::filesystem::path(store.string() + ".jsonl");
}

}  // namespace ukd::io
