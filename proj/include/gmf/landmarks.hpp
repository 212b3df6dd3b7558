#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gmf/geometry.hpp"

namespace gmf {

/// Farthest-point sampling: each new landmark maximizes its minimum distance
/// to the landmarks already chosen, ties going to the smallest index. The
/// first landmark is `first` if given, otherwise drawn uniformly from `seed`.
std::vector<std::size_t> greedy_sample(std::span<const Location> locations, std::size_t k,
                                       std::uint64_t seed,
                                       std::optional<std::size_t> first = std::nullopt);

/// Scans a sequence in order, keeping index 0 and every location at least
/// `r_lm` away from the last kept one.
std::vector<std::size_t> threshold_sample(std::span<const Location> sequence, double r_lm);

}  // namespace gmf
