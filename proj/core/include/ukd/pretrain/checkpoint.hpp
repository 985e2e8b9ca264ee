#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ukd/numerics/param_set.hpp"
#include "ukd/numerics/rng.hpp"
#include "ukd/numerics/tensor.hpp"

namespace ukd::train {

struct TensorRecord {
  std::string name;
  num::Shape shape;
  std::vector<float> data;

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

/// Ordered named float32 tensors.
///
/// On disk: "UKDCKPT1", u64 record count, then per record u32 name length,
/// UTF-8 name, u32 rank, rank x u64 dims, float32 payload; CRC32 trailer. All
/// integers little-endian.
class Checkpoint {
 public:
  static constexpr char kMagic[] = "UKDCKPT1";

  void add(std::string name, num::Shape shape, std::vector<float> data);
  void add(const std::string& name, const num::Tensor& t);
  void add(const std::string& name, std::span<const double> values);
  void add_params(const std::string& prefix, const num::ParamSet& params);
  void add_u64(const std::string& name, std::uint64_t value);
  void add_string(const std::string& name, const std::string& text);
  void add_rng(const std::string& name, const num::Rng& rng);

  bool contains(const std::string& name) const;
  const TensorRecord& get(const std::string& name) const;
  std::uint64_t get_u64(const std::string& name) const;
  std::string get_string(const std::string& name) const;
  num::Rng get_rng(const std::string& name) const;
  /// Copies record values into `out`; sizes must match.
  void copy_to(const std::string& name, std::span<double> out) const;
  /// Overwrites every parameter from records named prefix + name.
  void load_params(const std::string& prefix, num::ParamSet& params) const;

  const std::vector<TensorRecord>& records() const { return records_; }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint parse(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;

 private:
  std::vector<TensorRecord> records_;
};

}  // namespace ukd::train
