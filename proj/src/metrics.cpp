#include "gradmask/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradmask/error.hpp"

namespace gradmask::metrics {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        raise(ErrorCode::Validation, "roc_auc: scores and labels differ in length");
    std::size_t n_pos = 0, n_neg = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) raise(ErrorCode::Validation, "roc_auc: labels must be 0 or 1");
        (y == 1 ? n_pos : n_neg)++;
    }
    if (n_pos == 0 || n_neg == 0)
        raise(ErrorCode::Domain, "roc_auc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks over tie groups; the positive rank sum gives the U statistic.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
    return u / (np * nn);
}

MeanSd mean_sd(std::span<const double> values) {
    if (values.size() < 2) raise(ErrorCode::Domain, "mean_sd: need at least two values");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

} // namespace gradmask::metrics
