#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradmask/metrics.hpp"
#include "gradmask/error.hpp"
#include "gradmask/rng.hpp"
#include "oracles.hpp"

using namespace gradmask;

TEST_CASE("roc_auc worked examples") {
    {
        const std::vector<double> s{0.1, 0.9};
        const std::vector<int> y{0, 1};
        CHECK(metrics::roc_auc(s, y) == 1.0);
    }
    {
        const std::vector<double> s{0.4, 0.4, 0.4, 0.4};
        const std::vector<int> y{0, 1, 0, 1};
        CHECK(metrics::roc_auc(s, y) == 0.5);
    }
    {
        // pairs: (0.8,0.2)=1, (0.8,0.5)=1, (0.5,0.2)=1, (0.5,0.5)=0.5 -> 3.5/4
        const std::vector<double> s{0.2, 0.8, 0.5, 0.5};
        const std::vector<int> y{0, 1, 0, 1};
        CHECK(metrics::roc_auc(s, y) == 0.875);
        CHECK(oracles::pairwise_auc(s, y) == 0.875);
    }
}

TEST_CASE("roc_auc domain errors") {
    const std::vector<double> s{0.1, 0.2};
    CHECK_THROWS_AS(metrics::roc_auc(s, std::vector<int>{1, 1}), Error);
    CHECK_THROWS_AS(metrics::roc_auc(s, std::vector<int>{0, 0}), Error);
    CHECK_THROWS_AS(metrics::roc_auc(s, std::vector<int>{1}), Error);
    CHECK_THROWS_AS(metrics::roc_auc(s, std::vector<int>{1, 2}), Error);
    try {
        metrics::roc_auc(s, std::vector<int>{1, 1});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Domain);
    }
}

TEST_CASE("roc_auc is invariant under strictly increasing transforms") {
    Rng rng(17);
    for (int iter = 0; iter < 50; ++iter) {
        const std::size_t n = 5 + rng.below(60);
        std::vector<double> s(n);
        std::vector<int> y(n);
        bool has0 = false, has1 = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rng.uniform(-3.0, 3.0);
            if (rng.bernoulli(0.3)) s[i] = std::round(s[i]); // inject ties
            y[i] = rng.bernoulli(0.5) ? 1 : 0;
            (y[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) continue;
        const double base = metrics::roc_auc(s, y);

        std::vector<double> exp_s(n), affine_s(n);
        for (std::size_t i = 0; i < n; ++i) {
            exp_s[i] = std::exp(s[i]);
            affine_s[i] = 2.5 * s[i] + 7.0;
        }
        CHECK(metrics::roc_auc(exp_s, y) == base);
        CHECK(metrics::roc_auc(affine_s, y) == base);

        // complement identity
        std::vector<int> flipped(n);
        for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - y[i];
        CHECK(metrics::roc_auc(s, y) + metrics::roc_auc(s, flipped) == 1.0);
    }
}

TEST_CASE("roc_auc equals the pairwise oracle on randomized inputs") {
    Rng rng(2025);
    for (int iter = 0; iter < 300; ++iter) {
        const std::size_t n = 2 + rng.below(199);
        std::vector<double> s(n);
        std::vector<int> y(n);
        bool has0 = false, has1 = false;
        for (std::size_t i = 0; i < n; ++i) {
            // coarse grid forces plenty of exact ties
            s[i] = static_cast<double>(rng.below(12)) / 4.0;
            y[i] = rng.bernoulli(0.5) ? 1 : 0;
            (y[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) continue;
        CHECK(metrics::roc_auc(s, y) == oracles::pairwise_auc(s, y));
    }
}

TEST_CASE("mean and sample sd") {
    {
        const std::vector<double> v{0.8, 0.8};
        const metrics::MeanSd ms = metrics::mean_sd(v);
        CHECK(ms.mean == 0.8);
        CHECK(ms.sd == 0.0);
    }
    {
        const std::vector<double> v{0.7, 0.9};
        const metrics::MeanSd ms = metrics::mean_sd(v);
        CHECK(ms.mean == doctest::Approx(0.8).epsilon(1e-15));
        CHECK(ms.sd == doctest::Approx(std::sqrt(0.02 * 0.02 * 50)).epsilon(1e-12)); // ~0.14142
        CHECK(ms.sd == doctest::Approx(0.1414213562).epsilon(1e-9));
    }
    {
        Rng rng(5);
        std::vector<double> v(20);
        oracles::Welford w;
        for (double& x : v) {
            x = rng.uniform(0.0, 1.0);
            w.push(x);
        }
        const metrics::MeanSd ms = metrics::mean_sd(v);
        CHECK(std::fabs(ms.mean - w.mean) / w.mean < 1e-12);
        CHECK(std::fabs(ms.sd - w.sample_sd()) / w.sample_sd() < 1e-12);
    }
    CHECK_THROWS_AS(metrics::mean_sd(std::vector<double>{0.5}), Error);
}
