#pragma once

#include <cstdint>
#include <string_view>

namespace groklab {

// Counter-based 64-bit generator (splitmix64 finalizer over key + counter).
// Identical seeds give identical streams on every platform: all arithmetic
// is fixed-width unsigned integer. Sub-streams are derived by hashing a
// label into a fresh key, so (cell, seed, purpose) streams never collide
// with each other or with the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derived generator for an independent purpose ("data", "init", ...).
  Rng split(std::string_view label) const;

  std::uint64_t next_u64();
  std::uint64_t uniform_int(std::uint64_t n);  // unbiased in [0, n)
  double uniform();                            // [0, 1)
  double normal();                             // N(0,1), Box-Muller, two draws

  // Checkpoint support: a generator is exactly (key, counter).
  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  static Rng restore(std::uint64_t key, std::uint64_t counter);

 private:
  Rng(std::uint64_t key, std::uint64_t counter, bool raw);
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace groklab
