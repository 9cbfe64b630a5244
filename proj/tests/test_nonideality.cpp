#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "memrobust/nonideality.hpp"
#include "memrobust/rng.hpp"
#include "memrobust/stats.hpp"
#include "oracles.hpp"

using namespace memrobust;
using Catch::Approx;

namespace {

ConductanceSet from_matrix(Eigen::MatrixXd per_cycle) {
    ConductanceSet cond;
    cond.mean_smoothed = per_cycle.colwise().mean();
    cond.per_cycle = std::move(per_cycle);
    cond.positive_quadrant_index.resize(static_cast<std::size_t>(cond.mean_smoothed.size()));
    for (std::size_t j = 0; j < cond.positive_quadrant_index.size(); ++j) {
        cond.positive_quadrant_index[j] = j;
    }
    return cond;
}

} // namespace

TEST_CASE("lcis finds the longest strictly increasing run", "[nonideality]") {
    REQUIRE(lcis(std::vector<double>{1, 2, 3}) == std::pair<std::size_t, std::size_t>{0, 3});
    REQUIRE(lcis(std::vector<double>{3, 2, 1}) == std::pair<std::size_t, std::size_t>{0, 1});
    REQUIRE(lcis(std::vector<double>{1, 2, 3, 2, 3, 4, 5}) ==
            std::pair<std::size_t, std::size_t>{3, 7});
    REQUIRE_THROWS_AS(lcis(std::vector<double>{}), ArgumentError);
    SECTION("ties break to the smallest start") {
        REQUIRE(lcis(std::vector<double>{1, 2, 0, 5, 6, 0, 8, 9}) ==
                std::pair<std::size_t, std::size_t>{0, 2});
    }
}

TEST_CASE("lcis matches the brute-force window scan", "[nonideality]") {
    Rng rng = make_rng(17);
    std::uniform_int_distribution<int> len_dist(1, 200);
    std::uniform_int_distribution<int> val_dist(0, 9);  // duplicates on purpose
    for (int rep = 0; rep < 300; ++rep) {
        const int n = len_dist(rng);
        std::vector<double> seq(static_cast<std::size_t>(n));
        for (auto& v : seq) v = val_dist(rng);
        const auto got = lcis(seq);
        const auto want = oracle::lcis_brute_force(seq);
        REQUIRE(got == want);
    }
}

TEST_CASE("estimate_sigma implements the log-ratio MLE", "[nonideality]") {
    SECTION("no drift means sigma 0") {
        const auto cond = from_matrix(Eigen::MatrixXd::Constant(3, 4, 2e-6));
        const auto est = estimate_sigma(cond, 0, 4);
        REQUIRE(est.mle == Approx(0.0).margin(1e-15));
        REQUIRE(est.n_samples == 12);
    }
    SECTION("two samples at ratios e and 1/e give sigma 1") {
        ConductanceSet cond;
        cond.mean_smoothed = Eigen::VectorXd::Constant(1, 1e-6);
        cond.per_cycle.resize(2, 1);
        cond.per_cycle << 1e-6 * std::exp(1.0), 1e-6 * std::exp(-1.0);
        const auto est = estimate_sigma(cond, 0, 1);
        REQUIRE(est.mle == Approx(1.0).epsilon(1e-12));
    }
    SECTION("upper bound with n=10 and sigma 1") {
        ConductanceSet cond;
        cond.mean_smoothed = Eigen::VectorXd::Constant(5, 1e-6);
        cond.per_cycle.resize(2, 5);
        cond.per_cycle.row(0) = Eigen::VectorXd::Constant(5, 1e-6 * std::exp(1.0)).transpose();
        cond.per_cycle.row(1) = Eigen::VectorXd::Constant(5, 1e-6 * std::exp(-1.0)).transpose();
        const auto est = estimate_sigma(cond, 0, 5);
        REQUIRE(est.mle == Approx(1.0).epsilon(1e-12));
        REQUIRE(est.upper95 == Approx(std::sqrt(9.0 / 2.700389)).epsilon(1e-5));
    }
    SECTION("single sample is insufficient") {
        ConductanceSet cond;
        cond.mean_smoothed = Eigen::VectorXd::Constant(1, 1e-6);
        cond.per_cycle = Eigen::MatrixXd::Constant(1, 1, 1e-6);
        REQUIRE_THROWS_AS(estimate_sigma(cond, 0, 1), InsufficientDataError);
    }
    SECTION("non-positive conductance is a domain error") {
        ConductanceSet cond;
        cond.mean_smoothed = Eigen::VectorXd::Constant(2, 1e-6);
        cond.per_cycle.resize(1, 2);
        cond.per_cycle << 1e-6, -1e-6;
        REQUIRE_THROWS_AS(estimate_sigma(cond, 0, 2), DomainError);
    }
}

TEST_CASE("chi-square quantile agrees with quadrature", "[nonideality]") {
    for (double dof : {1.0, 2.0, 5.0, 9.0, 49.0, 499.0}) {
        const double got = chi_square_quantile(0.025, dof);
        const double want = oracle::chi2_quantile_quadrature(0.025, dof);
        REQUIRE(got == Approx(want).epsilon(1e-6));
    }
    SECTION("upper bound exceeds the MLE for every sample count") {
        for (std::size_t n = 2; n <= 60; ++n) {
            const double dof = static_cast<double>(n - 1);
            REQUIRE(chi_square_quantile(0.025, dof) < dof);
        }
    }
}

TEST_CASE("estimate_sigma recovers a planted drift level", "[nonideality]") {
    const std::size_t cycles = 20, points = 25;  // n = 500
    for (double sigma : {0.1, 0.3, 0.7}) {
        Rng rng = make_rng(1000 + static_cast<std::uint64_t>(sigma * 100));
        std::normal_distribution<double> gauss(0.0, sigma);
        Eigen::MatrixXd per_cycle(cycles, points);
        for (std::size_t j = 0; j < points; ++j) {
            const double mean = 1e-6 * (1.0 + 0.05 * static_cast<double>(j));
            for (std::size_t i = 0; i < cycles; ++i) {
                per_cycle(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    mean * std::exp(gauss(rng));
            }
        }
        const auto cond = from_matrix(std::move(per_cycle));
        const auto est = estimate_sigma(cond, 0, points);
        REQUIRE(std::abs(est.mle - sigma) / sigma <= 0.10);
        REQUIRE(est.upper95 > est.mle);
    }
}

TEST_CASE("build_ratio_table follows the window-extension rule", "[nonideality]") {
    SECTION("long runs give an all-ones table") {
        std::vector<double> curve(40);
        for (std::size_t i = 0; i < curve.size(); ++i) curve[i] = static_cast<double>(i);
        const auto res = build_ratio_table(curve, 0, 40, 35);
        REQUIRE(res.table.size() == 35);
        for (double r : res.table) REQUIRE(r == 1.0);
        REQUIRE(res.adjusted_start == 0);
        REQUIRE(res.adjusted_end == 40);
    }
    SECTION("hand-traced short run") {
        const std::vector<double> curve{0, 10, 4, 2, 6, 8};
        const auto res = build_ratio_table(curve, 0, 2, 4);
        REQUIRE(res.adjusted_start == 0);
        REQUIRE(res.adjusted_end == 4);
        REQUIRE(res.table[0] == 1.0);
        REQUIRE(res.table[1] == 1.0);
        REQUIRE(res.table[2] == Approx(0.4));
        REQUIRE(res.table[3] == Approx(0.2));
    }
    SECTION("window shifts back when it overruns the tail") {
        const std::vector<double> curve{0, 1, 2, 3, 8, 9};
        const auto res = build_ratio_table(curve, 4, 6, 4);
        REQUIRE(res.adjusted_start == 2);
        REQUIRE(res.adjusted_end == 6);
        // positions 2,3 precede the run and get scaled values
        REQUIRE(res.table[0] == Approx(2.0 / 9.0));
        REQUIRE(res.table[1] == Approx(3.0 / 9.0));
        REQUIRE(res.table[2] == 1.0);
        REQUIRE(res.table[3] == 1.0);
    }
    SECTION("flat curve outside the run maps to 1") {
        const std::vector<double> curve{5, 5, 5, 5};
        const auto res = build_ratio_table(curve, 0, 1, 3);
        for (double r : res.table) REQUIRE(r == 1.0);
    }
    SECTION("short curve is insufficient data") {
        const std::vector<double> curve{1, 2};
        REQUIRE_THROWS_AS(build_ratio_table(curve, 0, 2, 5), InsufficientDataError);
    }
}

TEST_CASE("compute_profile composes the pieces", "[nonideality]") {
    SECTION("ideal device scores usability 1") {
        Eigen::MatrixXd per_cycle(2, 40);
        for (int j = 0; j < 40; ++j) {
            per_cycle(0, j) = 1e-6 * (1.0 + 0.1 * j);
            per_cycle(1, j) = per_cycle(0, j);
        }
        const auto profile = compute_profile(from_matrix(per_cycle), 35, SigmaVariant::mle);
        REQUIRE(profile.lcis_len == 40);
        REQUIRE(profile.sigma_mle == Approx(0.0).margin(1e-14));
        REQUIRE(profile.usability == Approx(1.0));
        REQUIRE(profile.is_ideal());
    }
    SECTION("usability is mono * exp(-sigma)") {
        REQUIRE(usability_score(35, 35, 0.0) == Approx(1.0));
        REQUIRE(usability_score(35, 35, std::log(2.0)) == Approx(0.5));
        REQUIRE(usability_score(70, 35, 0.0) == Approx(1.0));  // clamped
        REQUIRE(usability_score(7, 35, 0.0) == Approx(0.2));
    }
    SECTION("usability is monotone in both factors") {
        for (std::size_t len = 1; len <= 50; ++len) {
            REQUIRE(usability_score(len, 35, 0.3) <= usability_score(len + 1, 35, 0.3));
        }
        double prev = 2.0;
        for (double sigma = 0.0; sigma < 2.0; sigma += 0.1) {
            const double u = usability_score(20, 35, sigma);
            REQUIRE(u < prev);
            REQUIRE(u >= 0.0);
            REQUIRE(u <= 1.0);
            prev = u;
        }
    }
}

TEST_CASE("profile json round trip preserves every digit", "[nonideality]") {
    Eigen::MatrixXd per_cycle(4, 45);
    Rng rng = make_rng(99);
    std::normal_distribution<double> gauss(0.0, 0.25);
    for (int j = 0; j < 45; ++j) {
        const double mean = 1e-6 * (1.0 + 0.07 * j) * (j % 7 == 3 ? 0.8 : 1.0);
        for (int i = 0; i < 4; ++i) per_cycle(i, j) = mean * std::exp(gauss(rng));
    }
    const auto profile = compute_profile(from_matrix(per_cycle), 35, SigmaVariant::upper95);

    const nlohmann::json j = profile;
    const auto text = j.dump();
    const NonIdealityProfile back = nlohmann::json::parse(text).get<NonIdealityProfile>();

    REQUIRE(back.lcis_start == profile.lcis_start);
    REQUIRE(back.lcis_end == profile.lcis_end);
    REQUIRE(back.sigma_mle == profile.sigma_mle);
    REQUIRE(back.sigma_95 == profile.sigma_95);
    REQUIRE(back.usability == profile.usability);
    REQUIRE(back.c_min == profile.c_min);
    REQUIRE(back.c_max == profile.c_max);
    REQUIRE(back.ratio_table == profile.ratio_table);
    REQUIRE(back.sigma_variant == profile.sigma_variant);
}
