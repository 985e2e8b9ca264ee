#include "ukd/pretrain/checkpoint.hpp"

#include <string_view>

#include "ukd/errors.hpp"
#include "ukd/io/binary.hpp"

namespace ukd::train {

namespace {

constexpr std::string_view kMagicPrefix = "UKDCKPT";

// Integers travel as 16-bit limbs, each exactly representable in float32.
std::vector<float> u64_limbs(std::uint64_t v) {
  std::vector<float> out(4);
  for (int i = 0; i < 4; ++i) out[i] = static_cast<float>((v >> (16 * i)) & 0xFFFFu);
  return out;
}

std::uint64_t from_limbs(std::span<const float> limbs) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < limbs.size(); ++i) {
    const float f = limbs[i];
    if (!(f >= 0.0f && f <= 65535.0f) || f != static_cast<float>(static_cast<int>(f))) {
      throw CorruptionError("checkpoint: malformed integer record");
    }
    v |= static_cast<std::uint64_t>(f) << (16 * i);
  }
  return v;
}

}  // namespace

void Checkpoint::add(std::string name, num::Shape shape, std::vector<float> data) {
  if (num::shape_numel(shape) != data.size()) {
    throw DimensionError("checkpoint record " + name + ": shape " + num::shape_string(shape) +
                         " does not hold " + std::to_string(data.size()) + " values");
  }
  if (contains(name)) throw ConfigurationError("checkpoint record " + name + " added twice");
  records_.push_back({std::move(name), std::move(shape), std::move(data)});
}

void Checkpoint::add(const std::string& name, const num::Tensor& t) {
  add(name, t.shape(), std::vector<float>(t.values().begin(), t.values().end()));
}

void Checkpoint::add(const std::string& name, std::span<const double> values) {
  add(name, {values.size()}, std::vector<float>(values.begin(), values.end()));
}

void Checkpoint::add_params(const std::string& prefix, const num::ParamSet& params) {
  for (const auto& [name, t] : params) add(prefix + name, t);
}

void Checkpoint::add_u64(const std::string& name, std::uint64_t value) {
  add(name, {4}, u64_limbs(value));
}

void Checkpoint::add_string(const std::string& name, const std::string& text) {
  std::vector<float> bytes;
  bytes.reserve(text.size());
  for (unsigned char c : text) bytes.push_back(static_cast<float>(c));
  const std::size_t n = bytes.size();
  add(name, {n}, std::move(bytes));
}

void Checkpoint::add_rng(const std::string& name, const num::Rng& rng) {
  const auto seed = u64_limbs(rng.seed());
  const auto counter = u64_limbs(rng.counter());
  std::vector<float> limbs(8);
  for (std::size_t i = 0; i < 4; ++i) {
    limbs[i] = seed[i];
    limbs[4 + i] = counter[i];
  }
  add(name, {8}, std::move(limbs));
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& r : records_)
    if (r.name == name) return true;
  return false;
}

const TensorRecord& Checkpoint::get(const std::string& name) const {
  for (const auto& r : records_)
    if (r.name == name) return r;
  throw CorruptionError("checkpoint has no record " + name);
}

std::uint64_t Checkpoint::get_u64(const std::string& name) const {
  const auto& r = get(name);
  if (r.data.size() != 4) throw CorruptionError("checkpoint: " + name + " is not an integer");
  return from_limbs(r.data);
}

std::string Checkpoint::get_string(const std::string& name) const {
  std::string out;
  for (float f : get(name).data) {
    if (!(f >= 0.0f && f <= 255.0f)) throw CorruptionError("checkpoint: bad text in " + name);
    out.push_back(static_cast<char>(static_cast<unsigned char>(f)));
  }
  return out;
}

num::Rng Checkpoint::get_rng(const std::string& name) const {
  const auto& r = get(name);
  if (r.data.size() != 8) throw CorruptionError("checkpoint: " + name + " is not an RNG state");
  const std::span<const float> d(r.data);
  return num::Rng(from_limbs(d.first(4)), from_limbs(d.last(4)));
}

void Checkpoint::copy_to(const std::string& name, std::span<double> out) const {
  const auto& r = get(name);
  if (r.data.size() != out.size()) {
    throw CorruptionError("checkpoint record " + name + " holds " +
                          std::to_string(r.data.size()) + " values, expected " +
                          std::to_string(out.size()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r.data[i];
}

void Checkpoint::load_params(const std::string& prefix, num::ParamSet& params) const {
  for (auto& [name, t] : params) {
    const auto& r = get(prefix + name);
    if (r.shape != t.shape()) {
      throw CorruptionError("checkpoint record " + r.name + " has shape " +
                            num::shape_string(r.shape) + ", model expects " +
                            num::shape_string(t.shape()));
    }
    copy_to(prefix + name, t.mutable_values());
  }
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  io::ByteWriter w;
  w.raw(kMagic);
  w.u64(records_.size());
  for (const auto& r : records_) {
    w.u32(static_cast<std::uint32_t>(r.name.size()));
    w.raw(r.name);
    w.u32(static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t d : r.shape) w.u64(d);
    for (float f : r.data) w.f32(f);
  }
  w.crc32_trailer();
  return w.take();
}

Checkpoint Checkpoint::parse(std::span<const std::uint8_t> bytes) {
  const std::string what = "checkpoint";
  {
    io::ByteReader head(bytes, what);
    const std::string magic = head.raw(8);
    if (magic.substr(0, kMagicPrefix.size()) != kMagicPrefix) {
      throw CorruptionError("checkpoint: bad magic");
    }
    if (magic != kMagic) {
      throw VersionMismatchError("checkpoint format " + magic + " is not supported (expected " +
                                 std::string(kMagic) + "); re-export with this version");
    }
  }
  const auto body = io::checked_body(bytes, what);
  io::ByteReader r(body, what);
  r.skip(8);
  const std::uint64_t n = r.u64();
  Checkpoint ck;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t len = r.u32();
    std::string name = r.raw(len);
    const std::uint32_t rank = r.u32();
    num::Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t count = num::shape_numel(shape);
    if (count > r.remaining() / 4) throw CorruptionError("checkpoint: record " + name + " truncated");
    std::vector<float> data(count);
    for (auto& f : data) f = r.f32();
    ck.add(std::move(name), std::move(shape), std::move(data));
  }
  if (r.remaining() != 0) throw CorruptionError("checkpoint: trailing bytes after records");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  return parse(io::read_file(path));
}

}  // namespace ukd::train
