// Test-only reference implementations. Each one is written independently of
// the library path it checks: plain loops, no shared helpers.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace oracles {

// Triple-loop matrix product.
inline std::vector<double> matmul(std::span<const double> a, std::span<const double> b,
                                  std::size_t m, std::size_t k, std::size_t n) {
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t l = 0; l < k; ++l) out[i * n + j] += a[i * k + l] * b[l * n + j];
    return out;
}

// Six-nested-loop cross-correlation with zero padding.
inline std::vector<double> conv2d(std::span<const double> x, std::span<const double> w,
                                  std::span<const double> bias, std::size_t c, std::size_t h,
                                  std::size_t ww, std::size_t f, std::size_t kh, std::size_t kw,
                                  long stride, long pad) {
    const std::size_t oh = static_cast<std::size_t>((static_cast<long>(h) + 2 * pad - static_cast<long>(kh)) / stride + 1);
    const std::size_t ow = static_cast<std::size_t>((static_cast<long>(ww) + 2 * pad - static_cast<long>(kw)) / stride + 1);
    std::vector<double> out(f * oh * ow, 0.0);
    for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = bias.empty() ? 0.0 : bias[fi];
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
                            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
                            if (iy < 0 || iy >= static_cast<long>(h) || ix < 0 ||
                                ix >= static_cast<long>(ww))
                                continue;
                            acc += x[(ci * h + static_cast<std::size_t>(iy)) * ww +
                                     static_cast<std::size_t>(ix)] *
                                   w[((fi * c + ci) * kh + ky) * kw + kx];
                        }
                out[(fi * oh + oy) * ow + ox] = acc;
            }
    return out;
}

// Exhaustive window scan; returns per-window max and flat argmax, first
// (row-major) index winning ties.
struct PoolOut {
    std::vector<double> values;
    std::vector<std::uint32_t> argmax;
};
inline PoolOut maxpool(std::span<const double> x, std::size_t c, std::size_t h, std::size_t w,
                       std::size_t k, std::size_t stride) {
    const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
    PoolOut out;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double best = x[(ci * h + oy * stride) * w + ox * stride];
                std::size_t bi = (ci * h + oy * stride) * w + ox * stride;
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::size_t idx = (ci * h + oy * stride + ky) * w + ox * stride + kx;
                        if (x[idx] > best) {
                            best = x[idx];
                            bi = idx;
                        }
                    }
                out.values.push_back(best);
                out.argmax.push_back(static_cast<std::uint32_t>(bi));
            }
    return out;
}

// Kahan compensated summation.
inline double kahan_sum(std::span<const double> v) {
    double s = 0.0, comp = 0.0;
    for (double x : v) {
        const double y = x - comp;
        const double t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    return s;
}

// O(n^2) pair scan; ties counted half.
inline double pairwise_auc(std::span<const double> scores, std::span<const int> labels) {
    double num = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                num += 1.0;
            else if (scores[i] == scores[j])
                num += 0.5;
        }
    }
    return num / static_cast<double>(pairs);
}

// Welford's online mean/variance, as an independent route to mean and
// sample SD.
struct Welford {
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    void push(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double sample_sd() const { return std::sqrt(m2 / static_cast<double>(n - 1)); }
};

// Reference xoshiro256** and splitmix64, transcribed from the published
// algorithm description.
struct RefSplitMix {
    std::uint64_t x;
    std::uint64_t operator()() {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

struct RefXoshiro {
    std::uint64_t s[4];
    static std::uint64_t rot(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
    std::uint64_t operator()() {
        const std::uint64_t out = rot(s[1] * 5, 7) * 9;
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rot(s[3], 45);
        return out;
    }
};

} // namespace oracles
