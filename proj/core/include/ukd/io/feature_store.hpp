#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ukd::io {

/// Dense table of `count` float32 rows of width `dim`.
///
/// On disk: "GPFMFEAT", u32 version (1), u32 dim, u64 count, u8 dtype (0 =
/// f32), 7 zero bytes, count * dim little-endian floats, CRC32 of all
/// preceding bytes.
class FeatureStore {
 public:
  static constexpr std::uint32_t kVersion = 1;

  FeatureStore() = default;
  FeatureStore(std::uint32_t dim, std::vector<float> values);

  std::uint32_t dim() const { return dim_; }
  std::uint64_t count() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  std::span<const float> row(std::uint64_t i) const;
  const std::vector<float>& values() const { return values_; }

  void append(std::span<const float> row);
  void append(std::span<const double> row);

  std::vector<std::uint8_t> serialize() const;
  static FeatureStore parse(std::span<const std::uint8_t> bytes);
  void write(const std::filesystem::path& path) const;
  static FeatureStore read(const std::filesystem::path& path);

  friend bool operator==(const FeatureStore&, const FeatureStore&) = default;

 private:
  std::uint32_t dim_ = 0;
  std::vector<float> values_;
};

struct ManifestRecord {
  std::string id;
  std::uint64_t row_index = 0;
  std::optional<long long> label;
  std::optional<std::string> bag_id;
  std::optional<double> time;
  std::optional<int> event;
  std::optional<std::string> view_key;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// JSON-lines manifest. Unknown keys are rejected.
std::vector<ManifestRecord> parse_manifest(const std::string& text);
std::string format_manifest(std::span<const ManifestRecord> records);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records);

/// Row indices unique and below `count`.
void validate_manifest(std::span<const ManifestRecord> records, std::uint64_t count);

/// Manifest path that sits next to a store: "<store>.jsonl".
std::filesystem::path manifest_path_for(const std::filesystem::path& store);

}  // namespace ukd::io
