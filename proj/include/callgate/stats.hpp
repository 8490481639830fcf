#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace callgate {

// Rank-statistic AUROC (Mann-Whitney U with average ranks): the probability
// that a positive example scores above a negative one, ties counted 0.5.
// Runs in O(n log n). Throws DataError if either class is empty.
double rank_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// All-pairs AUROC in O(n^2); the independent cross-check for rank_auroc.
double brute_force_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

double mean(std::span<const double> v);
// Sample standard deviation (n-1 denominator); 0 for fewer than 2 values.
double sample_stddev(std::span<const double> v);
double median(std::vector<double> v);

} // namespace callgate
