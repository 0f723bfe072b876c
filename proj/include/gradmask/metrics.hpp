#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gradmask::metrics {

// ROC AUC as the Mann-Whitney statistic: the fraction of (positive,
// negative) pairs ranked correctly, ties counted 0.5. Computed in
// O(n log n) via midranks. Both classes must be present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0; // sample SD, n-1 denominator
};

// Requires at least two values.
MeanSd mean_sd(std::span<const double> values);

} // namespace gradmask::metrics
