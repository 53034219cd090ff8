#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace dkmlmc {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., counter-based).
PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key);

std::uint64_t splitmix64(std::uint64_t x);

/// Something that yields i.i.d. standard normal numbers.
class GaussianSource {
public:
  virtual ~GaussianSource() = default;
  virtual void fill(std::span<double> out) = 0;
};

/// Counter-addressed normal stream.
///
/// Counter words: c0 = block within the current sequence, c1 = domain tag,
/// (c2, c3) = 64-bit sequence number.  Every `fill` continues from the current
/// block; `seek` jumps to the start of a sequence.  Normals come from a
/// 256-layer ziggurat; each Philox block yields two 64-bit words, and a normal
/// consumes one word on the fast path (8 bits for the layer, 1 for the sign,
/// 53 for the abscissa).
class PhiloxNormalSource final : public GaussianSource {
public:
  PhiloxNormalSource(PhiloxKey key, std::uint32_t domain);

  void seek(std::uint64_t sequence);
  void fill(std::span<double> out) override;
  double next();

  std::uint64_t sequence() const { return sequence_; }

private:
  std::uint64_t next_word();
  double from_word(std::uint64_t w);

  PhiloxKey key_;
  std::uint32_t domain_;
  std::uint64_t sequence_ = 0;
  std::uint32_t block_ = 0;
  std::array<std::uint64_t, 2> words_{};
  int have_ = 0;
};

/// Uniform doubles in (0, 1) from the same counter layout.
class PhiloxUniformSource {
public:
  PhiloxUniformSource(PhiloxKey key, std::uint32_t domain);

  void seek(std::uint64_t sequence);
  double next();

private:
  PhiloxKey key_;
  std::uint32_t domain_;
  std::uint64_t sequence_ = 0;
  std::uint32_t block_ = 0;
  PhiloxCounter buffer_{};
  int used_ = 2;
};

/// Independent key for one (seed, level, replicate, family) tuple.
PhiloxKey derive_key(std::uint64_t master_seed, int level, std::uint64_t replicate, std::uint32_t family);

/// Uniform in (0, 1) from two 32-bit words.
inline double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

}  // namespace dkmlmc
