#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace s2s {

/// Counter-based splittable generator. Every draw is a hash of
/// (key, counter), so substreams derived with split() are independent of
/// how much any sibling stream has been consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng split(std::uint64_t tag) const;

  std::uint64_t next_u64();
  double uniform();                           // [0, 1)
  double uniform(double lo, double hi);       // [lo, hi)
  std::size_t below(std::size_t n);           // [0, n)
  int range(int lo, int hi);                  // [lo, hi] inclusive
  double normal();
  bool bernoulli(double p);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  // k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> choose(std::size_t n, std::size_t k);

 private:
  Rng(std::uint64_t key, int) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace s2s
