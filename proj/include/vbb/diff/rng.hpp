#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "vbb/error.hpp"

namespace vbb {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based random stream. Draw i of stream (seed, stream_id) is a pure
/// function of (seed, stream_id, i), so a stream is fully described by three
/// integers and can be copied, checkpointed and replayed.
class RngStream {
 public:
  struct State {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint64_t counter = 0;
    friend bool operator==(const State&, const State&) = default;
  };

  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream) : state_{seed, stream, 0} { rekey(); }
  explicit RngStream(const State& s) : state_(s) { rekey(); }

  const State& state() const noexcept { return state_; }
  std::uint64_t seed() const noexcept { return state_.seed; }
  std::uint64_t stream_id() const noexcept { return state_.stream; }
  std::uint64_t counter() const noexcept { return state_.counter; }

  std::uint64_t next_u64() {
    const std::uint64_t x = key_ + (state_.counter++) * detail::kGolden;
    return detail::mix64(detail::mix64(x) ^ key_hi_);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal by Box-Muller; always consumes exactly two draws.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("bernoulli probability outside [0,1]: " + std::to_string(p));
    const double u = uniform();
    return u < p;
  }

  /// Uniform integer in [0, n). Unbiased (rejection sampling).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw DomainError("uniform_int over empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Inclusive range [lo, hi].
  std::int64_t uniform_range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  /// Derives an independent child stream without consuming draws from this one.
  RngStream split(std::uint64_t child) const {
    return RngStream(detail::mix64(state_.seed ^ detail::mix64(state_.stream + detail::kGolden)),
                     detail::mix64(child + 0x632BE59BD9B4E019ULL));
  }

 private:
  void rekey() {
    key_ = detail::mix64(state_.seed + detail::kGolden) ^ detail::mix64(state_.stream * detail::kGolden + 0xD1B54A32D192ED03ULL);
    key_hi_ = detail::mix64(key_ ^ 0xA0761D6478BD642FULL);
  }

  State state_;
  std::uint64_t key_ = 0;
  std::uint64_t key_hi_ = 0;
};

}  // namespace vbb
