#include "cmxqe/common.hpp"

#include <limits>

namespace cmxqe {

std::string_view to_string(Task task) {
  return task == Task::Rating ? "rating" : "disagreement";
}

std::optional<Task> parse_task(std::string_view name) {
  if (name == "rating") return Task::Rating;
  if (name == "disagreement") return Task::Disagreement;
  return std::nullopt;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % bound;
}

}  // namespace cmxqe
