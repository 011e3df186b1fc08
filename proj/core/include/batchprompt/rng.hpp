#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace batchprompt {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Order-sensitive hash of a sequence of 64-bit words.
std::uint64_t hash_words(std::initializer_list<std::uint64_t> words);

/// FNV-1a over bytes. Stable across platforms and runs.
std::uint64_t hash_string(std::string_view s);

/// Maps a hash to [0, 1) using its top 53 bits.
double to_unit(std::uint64_t h);

/// Deterministic generator for draws that must replay exactly: identical
/// seed => identical stream on every platform (unlike the std distributions,
/// whose algorithms are implementation-defined).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Unbiased integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  double uniform() { return to_unit(next()); }

 private:
  std::uint64_t state_;
};

}  // namespace batchprompt
