#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <random>

#include "memrobust/memsim.hpp"
#include "memrobust/rng.hpp"

using namespace memrobust;
using Catch::Approx;

namespace {

NonIdealityProfile ideal_profile(std::size_t len = 35) {
    NonIdealityProfile p;
    p.lcis_start = 0;
    p.lcis_end = len;
    p.lcis_len = len;
    p.required_len = len;
    p.ratio_table.assign(len, 1.0);
    p.c_min = 1e-6;
    p.c_max = 1e-5;
    p.usability = 1.0;
    return p;
}

Dataset tiny_blobs(std::size_t n, std::uint64_t seed) {
    Dataset data;
    data.inputs.resize(static_cast<Eigen::Index>(n), 2);
    data.labels.resize(n);
    data.split.assign(n, Split::test);
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.3);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i % 2 == 0 ? 0 : 1;
        const double cx = label == 0 ? -1.5 : 1.5;
        data.inputs(static_cast<Eigen::Index>(i), 0) = cx + gauss(rng);
        data.inputs(static_cast<Eigen::Index>(i), 1) = gauss(rng);
        data.labels[i] = label;
        if (i < n * 7 / 10) data.split[i] = Split::train;
    }
    return data;
}

DenseNetwork blob_net(std::uint64_t seed) {
    auto net = make_dense_network({2, 4, 2}, seed);
    return net;
}

} // namespace

TEST_CASE("map_weights with an ideal profile is the bit-exact identity", "[memsim]") {
    Rng rng = make_rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Eigen::MatrixXd> params{Eigen::MatrixXd(100, 100)};
    for (Eigen::Index i = 0; i < params[0].size(); ++i) params[0].data()[i] = gauss(rng);
    const std::vector<Eigen::MatrixXd> before = params;

    map_weights(params, ideal_profile(), 7);
    REQUIRE(std::memcmp(params[0].data(), before[0].data(),
                        sizeof(double) * static_cast<std::size_t>(params[0].size())) == 0);
}

TEST_CASE("map_weights preserves signs and zeros", "[memsim]") {
    auto profile = ideal_profile();
    profile.sigma_mle = profile.sigma_95 = 0.4;
    for (std::size_t i = 20; i < 35; ++i) profile.ratio_table[i] = 0.3;
    profile.usability = recompute_usability(profile);

    std::vector<Eigen::MatrixXd> params{Eigen::MatrixXd(3, 3)};
    params[0] << -2.0, 1.0, 0.0, 0.5, -0.25, 3.0, 0.0, -1e-8, 2.5;
    const Eigen::MatrixXd before = params[0];
    map_weights(params, profile, 123);
    for (Eigen::Index i = 0; i < before.size(); ++i) {
        const double b = before.data()[i], a = params[0].data()[i];
        if (b == 0.0) REQUIRE(a == 0.0);
        else REQUIRE(a * b > 0.0);
    }
}

TEST_CASE("the table entry at a weight's magnitude level scales it", "[memsim]") {
    auto profile = ideal_profile();
    profile.ratio_table.back() = 0.5;  // hit by normalized magnitude 1

    std::vector<Eigen::MatrixXd> params{Eigen::MatrixXd(1, 2)};
    params[0] << 4.0, 0.0;
    map_weights(params, profile, 77);
    REQUIRE(params[0](0, 0) == Approx(2.0));
    REQUIRE(params[0](0, 1) == 0.0);
}

TEST_CASE("non-finite weights are rejected", "[memsim]") {
    std::vector<Eigen::MatrixXd> params{Eigen::MatrixXd(1, 1)};
    params[0] << std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(map_weights(params, ideal_profile(), 0), DomainError);
}

TEST_CASE("log-normal factor has mean ratio*exp(sigma^2/2)", "[memsim]") {
    const double sigma = 0.3, ratio = 0.8;
    auto profile = ideal_profile();
    profile.sigma_mle = profile.sigma_95 = sigma;
    profile.ratio_table.back() = ratio;

    const std::size_t draws = 100000;
    double sum = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        std::vector<Eigen::MatrixXd> params{Eigen::MatrixXd::Constant(1, 1, 1.0)};
        map_weights(params, profile, derive_seed(31, d));
        sum += params[0](0, 0);
    }
    const double expected = ratio * std::exp(0.5 * sigma * sigma);
    REQUIRE(std::abs(sum / static_cast<double>(draws) - expected) / expected < 0.01);
}

TEST_CASE("ideal crossbar reproduces the product to 1e-12", "[memsim]") {
    const auto model = CrossbarModel::from_profile(ideal_profile(), 10, 10);
    Rng rng = make_rng(13);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd w(10, 2);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gauss(rng);
    Eigen::VectorXd x(2);
    x << 0.7, -1.3;

    const Eigen::VectorXd got = crossbar_matvec(model, w, x, 5);
    const Eigen::VectorXd want = w * x;
    REQUIRE((got - want).norm() <= 1e-12 * want.norm());
}

TEST_CASE("zero weights map to zero output under zero drift", "[memsim]") {
    auto profile = ideal_profile();
    for (std::size_t i = 0; i < profile.ratio_table.size(); ++i) {
        profile.ratio_table[i] = 0.5 + 0.5 * static_cast<double>(i % 2);
    }
    const auto model = CrossbarModel::from_profile(profile, 10, 10);
    const Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, 3);
    Eigen::VectorXd x(3);
    x << 1.0, 2.0, 3.0;
    const Eigen::VectorXd y = crossbar_matvec(model, w, x, 99);
    REQUIRE(y.norm() == 0.0);
}

TEST_CASE("noise-free crossbar is linear", "[memsim]") {
    const auto model = CrossbarModel::from_profile(ideal_profile(), 10, 10);
    Rng rng = make_rng(21);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd w(5, 4);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gauss(rng);
    Eigen::VectorXd x(4), y(4);
    for (int i = 0; i < 4; ++i) {
        x[i] = gauss(rng);
        y[i] = gauss(rng);
    }
    const Eigen::VectorXd fx = crossbar_matvec(model, w, x, 1);
    const Eigen::VectorXd fy = crossbar_matvec(model, w, y, 1);
    const Eigen::VectorXd fxy = crossbar_matvec(model, w, x + y, 1);
    REQUIRE((fxy - fx - fy).norm() <= 1e-10);
}

TEST_CASE("crossbar sample mean matches the analytic expectation", "[memsim]") {
    auto profile = ideal_profile();
    profile.sigma_mle = profile.sigma_95 = 0.2;
    const auto model = CrossbarModel::from_profile(profile, 10, 10);

    Eigen::MatrixXd w(2, 2);
    w << 0.8, -0.4, 0.1, 0.6;
    Eigen::VectorXd x(2);
    x << 1.0, -0.5;

    // With an all-ones table both pair members scale by E[e^lambda]
    // = exp(sigma^2/2), so E[output] = exp(sigma^2/2) * W x.
    const Eigen::VectorXd analytic = std::exp(0.5 * 0.2 * 0.2) * (w * x);

    const int runs = 1000;
    Eigen::MatrixXd samples(2, runs);
    for (int r = 0; r < runs; ++r) {
        samples.col(r) = crossbar_matvec(model, w, x, derive_seed(555, r));
    }
    const Eigen::VectorXd mean = samples.rowwise().mean();
    for (int i = 0; i < 2; ++i) {
        const double sd = std::sqrt(
            (samples.row(i).array() - mean[i]).square().sum() / (runs - 1));
        const double se = sd / std::sqrt(static_cast<double>(runs));
        REQUIRE(std::abs(mean[i] - analytic[i]) <= 3.0 * se);
    }
}

TEST_CASE("crossbar rejects oversize matrices and mismatched inputs", "[memsim]") {
    const auto model = CrossbarModel::from_profile(ideal_profile(), 10, 10);
    REQUIRE_THROWS_AS(crossbar_matvec(model, Eigen::MatrixXd::Zero(11, 2),
                                      Eigen::VectorXd::Zero(2), 0),
                      ArgumentError);
    REQUIRE_THROWS_AS(crossbar_matvec(model, Eigen::MatrixXd::Zero(4, 6),
                                      Eigen::VectorXd::Zero(6), 0),
                      ArgumentError);
    REQUIRE_THROWS_AS(crossbar_matvec(model, Eigen::MatrixXd::Zero(4, 2),
                                      Eigen::VectorXd::Zero(3), 0),
                      ArgumentError);
}

TEST_CASE("synthesize_profile hits the usability target exactly", "[memsim]") {
    SECTION("target 1 is the ideal profile") {
        const auto p = synthesize_profile(1.0);
        REQUIRE(p.sigma() == 0.0);
        REQUIRE(p.is_ideal());
        REQUIRE(p.usability == Approx(1.0));
    }
    SECTION("pure drift decomposition") {
        const auto p = synthesize_profile(0.5, 1.0);
        REQUIRE(p.sigma() == Approx(std::log(2.0)).epsilon(1e-14));
    }
    SECTION("mixed decomposition") {
        const auto p = synthesize_profile(0.5, 0.7);
        REQUIRE(p.sigma() == Approx(std::log(1.4)).epsilon(1e-12));
        REQUIRE(p.usability == Approx(0.5).epsilon(1e-12));
    }
    SECTION("infeasible decomposition") {
        REQUIRE_THROWS_AS(synthesize_profile(0.8, 0.5), ArgumentError);
    }
    SECTION("100 random pairs round trip through the score") {
        Rng rng = make_rng(2024);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int rep = 0; rep < 100; ++rep) {
            const double u = 0.05 + 0.95 * unif(rng);
            const double m = u + (1.0 - u) * unif(rng);
            const auto p = synthesize_profile(u, m);
            REQUIRE(std::abs(recompute_usability(p) - u) <= 1e-9);
        }
    }
}

TEST_CASE("synthetic conductance reproduces the target through the profile path", "[memsim]") {
    Rng rng = make_rng(4242);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 25; ++rep) {
        const double u = 0.05 + 0.95 * unif(rng);
        const double m = u + (1.0 - u) * unif(rng);
        const auto cond = synthesize_conductance(u, m, 200);
        const auto profile = compute_profile(cond, 200, SigmaVariant::mle);
        REQUIRE(std::abs(profile.usability - u) <= 1e-9);
    }
}

TEST_CASE("evaluate_under_profile reports mean and spread", "[memsim]") {
    const Dataset data = tiny_blobs(60, 8);
    DenseNetwork net = blob_net(3);

    SECTION("ideal profile collapses to the clean accuracy") {
        const auto [mean, stddev] = evaluate_under_profile(net, ideal_profile(), data, 5, 11);
        REQUIRE(mean == Approx(accuracy(net, data, Split::test)));
        REQUIRE(stddev == 0.0);
    }
    SECTION("one trial has zero spread by definition") {
        auto profile = ideal_profile();
        profile.sigma_mle = profile.sigma_95 = 0.5;
        const auto [mean, stddev] = evaluate_under_profile(net, profile, data, 1, 11);
        (void)mean;
        REQUIRE(stddev == 0.0);
    }
    SECTION("matches an independently written trial loop") {
        auto profile = ideal_profile();
        profile.sigma_mle = profile.sigma_95 = 0.45;
        const int trials = 8;
        const std::uint64_t seed = 91;

        std::vector<double> accs;
        for (int t = 0; t < trials; ++t) {
            DenseNetwork copy = net;
            map_weights(copy, profile, derive_seed(seed, static_cast<std::uint64_t>(t)));
            accs.push_back(accuracy(copy, data, Split::test));
        }
        double mean = 0.0;
        for (double a : accs) mean += a;
        mean /= trials;
        double ss = 0.0;
        for (double a : accs) ss += (a - mean) * (a - mean);
        const double stddev = std::sqrt(ss / (trials - 1));

        const auto [got_mean, got_std] = evaluate_under_profile(net, profile, data, trials, seed);
        REQUIRE(got_mean == Approx(mean).margin(1e-15));
        REQUIRE(got_std == Approx(stddev).margin(1e-15));
    }
    SECTION("empty dataset is an argument error") {
        Dataset empty;
        REQUIRE_THROWS_AS(evaluate_under_profile(net, ideal_profile(), empty, 3, 0),
                          ArgumentError);
    }
}

TEST_CASE("crossbar layer substitution is exact for ideal devices", "[memsim]") {
    const Dataset data = tiny_blobs(80, 15);
    DenseNetwork net = blob_net(4);
    const auto model = CrossbarModel::from_profile(ideal_profile(), 10, 10);
    const double software = accuracy(net, data, Split::test);
    const double hardware = crossbar_accuracy(net, data, Split::test, model, 0, 77);
    REQUIRE(hardware == Approx(software));
}
