#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mmem {

// Mixes a master seed with a sequence of stream tags into an independent
// child seed. Used everywhere a per-fold, per-split or per-bag stream is
// needed so that results do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t master,
                          std::initializer_list<std::uint64_t> tags);

// Seeded generator with platform-stable distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // Random k-subset of {0..n-1}, returned in ascending order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mmem
