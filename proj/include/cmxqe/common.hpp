#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace cmxqe {

inline constexpr std::size_t kClsDim = 768;
inline constexpr std::size_t kFusedDim = 4 * kClsDim;
inline constexpr std::size_t kNumClasses = 10;

enum class Task { Rating, Disagreement };

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view name);

/// Natural label of class index 0 (rating 1..10 -> offset 1, disagreement 0..9 -> offset 0).
constexpr int label_offset(Task task) { return task == Task::Rating ? 1 : 0; }

constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// std::uniform_*_distribution and std::shuffle are implementation-defined, so
// seeded paths go through these instead to keep outputs portable.

/// Unbiased integer in [0, bound) using rejection sampling.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace cmxqe
