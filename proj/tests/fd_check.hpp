// Central finite-difference harness for gradient checks (float64 only).
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gradmask/tensor.hpp"

namespace fd {

using gradmask::Tensor;

// d f / d t[i] for every i, by central differences with step h.
inline std::vector<double> gradient(const std::function<double(const Tensor&)>& f, const Tensor& t,
                                    double h = 1e-5) {
    std::vector<double> g(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) {
        Tensor plus = t, minus = t;
        plus.set(i, t.at(i) + h);
        minus.set(i, t.at(i) - h);
        g[i] = (f(plus) - f(minus)) / (2.0 * h);
    }
    return g;
}

// Scale-aware relative error: each element is compared against the larger of
// its own magnitude and a floor tied to the gradient's overall magnitude, so
// that elements near zero do not amplify finite-difference noise.
inline double max_rel_error(std::span<const double> analytic, std::span<const double> numeric) {
    double gmax = 1e-9;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        gmax = std::max({gmax, std::fabs(analytic[i]), std::fabs(numeric[i])});
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom =
            std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1e-3 * gmax, 1e-12});
        worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

inline double max_rel_error(const Tensor& analytic, std::span<const double> numeric) {
    return max_rel_error(analytic.to_doubles(), numeric);
}

} // namespace fd
