#include "callgate/stats.hpp"
#include "callgate/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace callgate {

double rank_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const std::size_t n = scores.size();
    if (labels.size() != n) {
        throw DataError("rank_auroc: scores and labels differ in length");
    }
    std::size_t n_pos = 0;
    for (auto y : labels) {
        n_pos += (y != 0);
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw DataError("rank_auroc: both classes must be present");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });

    // Average ranks over tie groups, then the U statistic from positive ranks.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0; // 1-based
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double brute_force_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const std::size_t n = scores.size();
    if (labels.size() != n) {
        throw DataError("brute_force_auroc: scores and labels differ in length");
    }
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < n; ++a) {
        if (labels[a] == 0) continue;
        for (std::size_t b = 0; b < n; ++b) {
            if (labels[b] != 0) continue;
            ++pairs;
            if (scores[a] > scores[b]) {
                wins += 1.0;
            } else if (scores[a] == scores[b]) {
                wins += 0.5;
            }
        }
    }
    if (pairs == 0) {
        throw DataError("brute_force_auroc: both classes must be present");
    }
    return wins / static_cast<double>(pairs);
}

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_stddev(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

} // namespace callgate
