#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace omcl {

// xoshiro256++ generator seeded through splitmix64.
//
// Every random decision in the toolkit draws from a named stream so that
// turning one concern on or off (say, descriptors) leaves the draws of the
// others untouched. A stream is identified by (master seed, tag, k0, k1);
// the tag is hashed with FNV-1a and mixed into the seed, k0/k1 typically
// carry the trial and epoch index.
class Rng {
 public:
  explicit Rng(uint64_t seed);
  Rng(uint64_t master_seed, std::string_view stream, uint64_t k0 = 0, uint64_t k1 = 0);

  uint64_t next_u64();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer in [0, n), unbiased (rejection). n must be > 0.
  uint64_t below(uint64_t n);

  bool bernoulli(double p);

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<uint64_t, 4> s_{};
};

}  // namespace omcl
