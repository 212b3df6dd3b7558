#include "gmf/landmarks.hpp"

#include <limits>
#include <random>
#include <string>

#include "gmf/error.hpp"

namespace gmf {

std::vector<std::size_t> greedy_sample(std::span<const Location> locations, std::size_t k,
                                       std::uint64_t seed, std::optional<std::size_t> first) {
  const std::size_t n = locations.size();
  require(k >= 1, "greedy_sample: k must be >= 1");
  if (k > n) {
    fail(ErrorCode::kInvalidArgument, "greedy_sample: k = " + std::to_string(k) +
                                          " exceeds the " + std::to_string(n) +
                                          " available locations");
  }
  std::size_t start = 0;
  if (first) {
    require(*first < n, "greedy_sample: first index out of range");
    start = *first;
  } else {
    std::mt19937_64 rng(seed);
    start = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  }

  std::vector<std::size_t> chosen{start};
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  taken[start] = true;
  while (chosen.size() < k) {
    const Location& last = locations[chosen.back()];
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      min_d[i] = std::min(min_d[i], sq_distance(locations[i], last));
      if (!taken[i] && min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    taken[best] = true;
    chosen.push_back(best);
  }
  return chosen;
}

std::vector<std::size_t> threshold_sample(std::span<const Location> sequence, double r_lm) {
  require(!sequence.empty(), "threshold_sample: empty sequence");
  require(r_lm > 0.0, "threshold_sample: r_lm must be > 0");
  std::vector<std::size_t> out{0};
  const double r_sq = r_lm * r_lm;
  for (std::size_t i = 1; i < sequence.size(); ++i) {
    if (sq_distance(sequence[i], sequence[out.back()]) >= r_sq) out.push_back(i);
  }
  return out;
}

}  // namespace gmf
