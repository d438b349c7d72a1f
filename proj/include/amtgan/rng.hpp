#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace amtgan {

// Explicit, serializable random stream. Every stochastic operation in the
// pipeline draws from one of these; nothing touches a hidden global.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform double in [0, 1) built from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double low, double high) { return low + (high - low) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::int64_t below(std::int64_t n) {
    std::uniform_int_distribution<std::int64_t> dist(0, n - 1);
    return dist(engine_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Derive an independent child stream (used to seed torch generators).
  std::uint64_t fork_seed() { return engine_(); }

  std::string state() const;
  void set_state(const std::string& text);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace amtgan
