#include "dkmlmc/rng.hpp"

#include <cmath>
#include <numbers>

namespace dkmlmc {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

PhiloxCounter make_counter(std::uint32_t block, std::uint32_t domain, std::uint64_t sequence) {
  return {block, domain, static_cast<std::uint32_t>(sequence), static_cast<std::uint32_t>(sequence >> 32)};
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

PhiloxKey derive_key(std::uint64_t master_seed, int level, std::uint64_t replicate, std::uint32_t family) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(level)));
  h = splitmix64(h ^ replicate);
  h = splitmix64(h ^ (static_cast<std::uint64_t>(family) << 32));
  return {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
}

// ============================================================================
// Ziggurat normal sampler (256 layers)
// ============================================================================

namespace {

struct ZigguratTables {
  static constexpr int kLayers = 256;
  static constexpr double kTail = 3.6541528853610088;
  static constexpr double kArea = 0.00492867323399;
  std::array<double, kLayers + 1> x{};
  std::array<double, kLayers + 1> f{};

  ZigguratTables() {
    auto pdf = [](double t) { return std::exp(-0.5 * t * t); };
    x[0] = kArea / pdf(kTail);
    x[1] = kTail;
    for (int i = 1; i < kLayers; ++i) {
      x[static_cast<std::size_t>(i) + 1] =
          std::sqrt(-2.0 * std::log(pdf(x[static_cast<std::size_t>(i)]) + kArea / x[static_cast<std::size_t>(i)]));
    }
    x[kLayers] = 0.0;
    for (int i = 0; i <= kLayers; ++i) f[static_cast<std::size_t>(i)] = pdf(x[static_cast<std::size_t>(i)]);
  }
};

const ZigguratTables& zig() {
  static const ZigguratTables tables;
  return tables;
}

// 53-bit uniform in (0, 1) from a 64-bit word
inline double unit_from_bits(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace

PhiloxNormalSource::PhiloxNormalSource(PhiloxKey key, std::uint32_t domain) : key_(key), domain_(domain) {}

void PhiloxNormalSource::seek(std::uint64_t sequence) {
  sequence_ = sequence;
  block_ = 0;
  have_ = 0;
}

inline std::uint64_t PhiloxNormalSource::next_word() {
  if (have_ == 0) [[unlikely]] {
    const PhiloxCounter r = philox4x32(make_counter(block_++, domain_, sequence_), key_);
    words_[0] = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    words_[1] = (static_cast<std::uint64_t>(r[2]) << 32) | r[3];
    have_ = 2;
  }
  return words_[static_cast<std::size_t>(2 - have_--)];
}

double PhiloxNormalSource::from_word(std::uint64_t w) {
  const auto& t = zig();
  for (;;) {
    const auto i = static_cast<std::size_t>(w & 0xFF);
    const bool negative = (w & 0x100) != 0;
    const double z = unit_from_bits(w) * t.x[i];
    if (z < t.x[i + 1]) return negative ? -z : z;
    if (i == 0) {
      // tail beyond r
      for (;;) {
        const double a = -std::log(unit_from_bits(next_word())) / ZigguratTables::kTail;
        const double b = -std::log(unit_from_bits(next_word()));
        if (2.0 * b > a * a) return negative ? -(ZigguratTables::kTail + a) : ZigguratTables::kTail + a;
      }
    }
    const double y = t.f[i] + unit_from_bits(next_word()) * (t.f[i + 1] - t.f[i]);
    if (y < std::exp(-0.5 * z * z)) return negative ? -z : z;
    w = next_word();
  }
}

double PhiloxNormalSource::next() { return from_word(next_word()); }

void PhiloxNormalSource::fill(std::span<double> out) {
  const double* x = zig().x.data();
  for (double& v : out) {
    const std::uint64_t w = next_word();
    const auto i = static_cast<std::size_t>(w & 0xFF);
    const double z = unit_from_bits(w) * x[i];
    if (z < x[i + 1]) [[likely]] {
      v = (w & 0x100) ? -z : z;
    } else {
      v = from_word(w);
    }
  }
}

PhiloxUniformSource::PhiloxUniformSource(PhiloxKey key, std::uint32_t domain) : key_(key), domain_(domain) {}

void PhiloxUniformSource::seek(std::uint64_t sequence) {
  sequence_ = sequence;
  block_ = 0;
  used_ = 2;
}

double PhiloxUniformSource::next() {
  if (used_ == 2) {
    buffer_ = philox4x32(make_counter(block_++, domain_, sequence_), key_);
    used_ = 0;
  }
  const int k = 2 * used_++;
  return to_unit_open(buffer_[static_cast<std::size_t>(k)], buffer_[static_cast<std::size_t>(k) + 1]);
}

}  // namespace dkmlmc
