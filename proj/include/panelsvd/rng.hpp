#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace panelsvd {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed-splitting rule: fold each tag into the base through splitmix64.
/// Used for (n, trial) cells and for the per-stream seeds inside a trial.
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = splitmix64(base);
  for (const auto tag : tags) h = splitmix64(h ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream identifiers for the independent random pieces of one simulated world.
enum class Stream : std::uint64_t {
  design = 1,
  signal = 2,
  noise = 3,
  assignment = 4,
  svd = 5,
  subsets = 6,
};

constexpr std::uint64_t stream_seed(std::uint64_t trial_seed, Stream s) noexcept {
  return derive_seed(trial_seed, {static_cast<std::uint64_t>(s)});
}

}  // namespace panelsvd
