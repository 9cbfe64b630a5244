#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "memrobust/errors.hpp"
#include "memrobust/ivdata.hpp"
#include "memrobust/neural.hpp"
#include "memrobust/nonideality.hpp"
#include "memrobust/rng.hpp"

namespace memrobust {

namespace detail {

inline std::size_t ratio_index(double normalized, std::size_t table_len) {
    const double scaled = normalized * static_cast<double>(table_len - 1);
    auto idx = static_cast<std::size_t>(std::floor(scaled));
    return std::min(idx, table_len - 1);
}

} // namespace detail

/// Programming drift for one weight matrix: each weight is scaled by the
/// correction-table entry at its normalized magnitude and by a fresh
/// log-normal factor exp(N(0, sigma^2)). Signs are preserved; an all-zero
/// matrix is left untouched.
inline void map_weights(std::vector<Eigen::MatrixXd>& params, const NonIdealityProfile& profile,
                        std::uint64_t seed) {
    if (profile.ratio_table.size() != profile.required_len || profile.required_len == 0) {
        throw ArgumentError("map_weights: profile ratio table is inconsistent");
    }
    const double sigma = profile.sigma();
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (Eigen::MatrixXd& theta : params) {
        if (!theta.allFinite()) throw DomainError("map_weights: non-finite weights");
        const double max_abs = theta.cwiseAbs().maxCoeff();
        if (max_abs == 0.0 || theta.size() == 0) continue;
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            double& w = theta.data()[i];
            const double a = std::abs(w) / max_abs;
            const double ratio = profile.ratio_table[detail::ratio_index(a, profile.required_len)];
            const double lambda = sigma > 0.0 ? sigma * gauss(rng) : 0.0;
            w = w * ratio * std::exp(lambda);
        }
    }
}

/// Applies programming drift to every weight matrix of the network.
/// Biases stay digital and are exempt.
inline void map_weights(DenseNetwork& net, const NonIdealityProfile& profile,
                        std::uint64_t seed) {
    std::vector<Eigen::MatrixXd> params;
    params.reserve(net.layers.size());
    for (Layer& layer : net.layers) params.push_back(std::move(layer.weights));
    map_weights(params, profile, seed);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        net.layers[l].weights = std::move(params[l]);
    }
}

/// Crossbar geometry plus the device model driving its conductances.
/// Weights map onto differential conductance pairs, so a rows x cols array
/// holds at most a (rows, cols/2) weight matrix.
struct CrossbarModel {
    int rows = 10;
    int cols = 10;
    double g_min = 0.0;  // siemens
    double g_max = 0.0;
    NonIdealityProfile profile;

    static CrossbarModel from_profile(const NonIdealityProfile& profile, int rows = 10,
                                      int cols = 10) {
        CrossbarModel model;
        model.rows = rows;
        model.cols = cols;
        model.profile = profile;
        model.g_min = profile.c_min;
        model.g_max = profile.c_max;
        model.validate();
        return model;
    }

    void validate() const {
        if (rows < 1 || cols < 1) throw ArgumentError("crossbar: rows and cols must be >= 1");
        if (!(g_max > g_min) || !(g_min > 0.0)) {
            throw ArgumentError("crossbar: requires g_max > g_min > 0");
        }
    }
};

/// Conductances as actually programmed (drift applied), with the scale
/// to convert differential currents back to weight units.
struct CrossbarProgram {
    Eigen::MatrixXd g_plus;
    Eigen::MatrixXd g_minus;
    double scale = 1.0;  // siemens per weight unit

    [[nodiscard]] Eigen::VectorXd matvec(const Eigen::VectorXd& x) const {
        if (x.size() != g_plus.cols()) {
            throw ArgumentError("crossbar matvec: input length " + std::to_string(x.size()) +
                                " does not match " + std::to_string(g_plus.cols()));
        }
        return ((g_plus - g_minus) * x) / scale;
    }
};

/// Encodes W onto differential pairs around the conductance midpoint and
/// perturbs every device per the profile (table lookup on the normalized
/// conductance level, then a log-normal factor).
inline CrossbarProgram program_crossbar(const CrossbarModel& model, const Eigen::MatrixXd& w,
                                        std::uint64_t seed) {
    model.validate();
    if (w.rows() > model.rows || 2 * w.cols() > model.cols) {
        throw ArgumentError("crossbar: weight matrix " + std::to_string(w.rows()) + "x" +
                            std::to_string(w.cols()) + " exceeds array capacity " +
                            std::to_string(model.rows) + "x" + std::to_string(model.cols) +
                            " (differential pairs)");
    }
    const double w_max = w.size() > 0 ? w.cwiseAbs().maxCoeff() : 0.0;
    const double g_span = model.g_max - model.g_min;
    const double g_mid = 0.5 * (model.g_max + model.g_min);
    const double scale = w_max > 0.0 ? g_span / w_max : g_span;

    CrossbarProgram prog;
    prog.scale = scale;
    prog.g_plus = (w.array() * (0.5 * scale) + g_mid).matrix();
    prog.g_minus = (w.array() * (-0.5 * scale) + g_mid).matrix();

    const NonIdealityProfile& profile = model.profile;
    const double sigma = profile.sigma();
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto perturb = [&](Eigen::MatrixXd& g) {
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            double& val = g.data()[i];
            const double level = std::clamp((val - model.g_min) / g_span, 0.0, 1.0);
            const double ratio = profile.ratio_table.empty()
                                     ? 1.0
                                     : profile.ratio_table[detail::ratio_index(
                                           level, profile.ratio_table.size())];
            const double lambda = sigma > 0.0 ? sigma * gauss(rng) : 0.0;
            val = val * ratio * std::exp(lambda);
        }
    };
    perturb(prog.g_plus);
    perturb(prog.g_minus);
    return prog;
}

/// One-shot programmed matrix-vector product in weight units.
inline Eigen::VectorXd crossbar_matvec(const CrossbarModel& model, const Eigen::MatrixXd& w,
                                       const Eigen::VectorXd& x, std::uint64_t seed) {
    return program_crossbar(model, w, seed).matvec(x);
}

/// Test accuracy of the network under `trials` independent programming
/// draws. Each trial perturbs a fresh copy with a sub-seed derived from
/// (seed, trial), so results do not depend on evaluation order. Returns
/// (mean, sample standard deviation).
inline std::pair<double, double> evaluate_under_profile(const DenseNetwork& net,
                                                        const NonIdealityProfile& profile,
                                                        const Dataset& data, int trials,
                                                        std::uint64_t seed) {
    if (trials < 1) throw ArgumentError("evaluate_under_profile: trials must be >= 1");
    if (data.labels.empty()) throw ArgumentError("evaluate_under_profile: empty dataset");
    std::vector<double> accs(static_cast<std::size_t>(trials));
    for (int t = 0; t < trials; ++t) {
        DenseNetwork perturbed = net;
        map_weights(perturbed, profile, derive_seed(seed, static_cast<std::uint64_t>(t)));
        accs[static_cast<std::size_t>(t)] = accuracy(perturbed, data, Split::test);
    }
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(trials);
    double std_dev = 0.0;
    if (trials > 1) {
        double ss = 0.0;
        for (double a : accs) ss += (a - mean) * (a - mean);
        std_dev = std::sqrt(ss / static_cast<double>(trials - 1));
    }
    return {mean, std_dev};
}

/// Test accuracy when one layer's matrix-vector product runs on the
/// simulated crossbar (programmed once per call) while the rest of the
/// network stays in software.
inline double crossbar_accuracy(const DenseNetwork& net, const Dataset& data, Split split,
                                const CrossbarModel& xbar, std::size_t layer_index,
                                std::uint64_t seed) {
    net.validate();
    if (layer_index >= net.layers.size()) {
        throw ArgumentError("crossbar_accuracy: layer index out of range");
    }
    const CrossbarProgram prog = program_crossbar(xbar, net.layers[layer_index].weights, seed);
    const Eigen::MatrixXd x = data.columns_of(split);
    const std::vector<int> y = data.labels_of(split);
    if (y.empty()) throw ArgumentError("crossbar_accuracy: empty split");

    std::size_t correct = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        Eigen::VectorXd a = x.col(j);
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            const Layer& layer = net.layers[l];
            Eigen::VectorXd z =
                l == layer_index ? prog.matvec(a) : Eigen::VectorXd(layer.weights * a);
            z += layer.bias;
            switch (layer.activation) {
                case Activation::relu: a = z.cwiseMax(0.0); break;
                case Activation::identity: a = z; break;
                case Activation::softmax: {
                    const double m = z.maxCoeff();
                    a = (z.array() - m).exp();
                    a /= a.sum();
                    break;
                }
            }
        }
        Eigen::Index arg = 0;
        a.maxCoeff(&arg);
        if (static_cast<int>(arg) == y[static_cast<std::size_t>(j)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(y.size());
}

/// Profile with a chosen monotonic factor and the drift level that makes
/// the usability score hit `usability` exactly. The correction table is 1
/// over the operative span and descends linearly over the rest.
inline NonIdealityProfile synthesize_profile(double usability, double mono_fraction = 1.0,
                                             std::size_t table_len = 10000) {
    if (!(usability > 0.0) || usability > 1.0) {
        throw ArgumentError("synthesize_profile: usability must be in (0, 1]");
    }
    if (!(mono_fraction > 0.0) || mono_fraction > 1.0) {
        throw ArgumentError("synthesize_profile: mono_fraction must be in (0, 1]");
    }
    if (mono_fraction < usability) {
        throw ArgumentError("synthesize_profile: mono_fraction < usability would need a "
                            "negative drift level");
    }
    if (table_len < 2) throw ArgumentError("synthesize_profile: table_len must be >= 2");

    const auto len = static_cast<double>(table_len);
    auto run = static_cast<std::size_t>(
        std::llround(mono_fraction * len));
    run = std::clamp<std::size_t>(run, 1, table_len);
    while (static_cast<double>(run) / len < usability && run < table_len) ++run;
    const double mono_actual = static_cast<double>(run) / len;
    const double sigma = std::max(std::log(mono_actual) - std::log(usability), 0.0);

    NonIdealityProfile profile;
    profile.lcis_start = 0;
    profile.lcis_end = run;
    profile.lcis_len = run;
    profile.required_len = table_len;
    profile.ratio_table.assign(table_len, 1.0);
    const auto tail = static_cast<double>(table_len - run + 1);
    for (std::size_t i = run; i < table_len; ++i) {
        profile.ratio_table[i] = 1.0 - static_cast<double>(i - run + 1) / tail;
    }
    profile.sigma_mle = sigma;
    profile.sigma_95 = sigma;
    profile.sigma_variant = SigmaVariant::upper95;
    profile.c_min = 1e-6;
    profile.c_max = 1e-5;
    profile.usability = recompute_usability(profile);
    return profile;
}

namespace detail {

/// Per-cycle factor so that two cycles c*exp(+-s)/cosh(s) average exactly
/// to c while their log-ratios against that mean have mean square
/// sigma^2: solves s^2 + ln^2 cosh(s) = sigma^2.
inline double paired_cycle_spread(double sigma) {
    if (sigma <= 0.0) return 0.0;
    double lo = 0.0, hi = sigma;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double c = std::log(std::cosh(mid));
        const double f = mid * mid + c * c;
        if (f < sigma * sigma) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// Mean conductance curve with an increasing run of exactly `run` points
/// followed by a strictly decreasing tail; values stay positive.
inline Eigen::VectorXd synthetic_mean_curve(std::size_t run, std::size_t n_points) {
    const double base = 1.0e-6, peak = 2.0e-6, floor = 0.6e-6;
    Eigen::VectorXd curve(static_cast<Eigen::Index>(n_points));
    for (std::size_t j = 0; j < run; ++j) {
        const double frac = run > 1 ? static_cast<double>(j) / static_cast<double>(run - 1) : 1.0;
        curve[static_cast<Eigen::Index>(j)] = base + (peak - base) * frac;
    }
    const std::size_t tail = n_points - run;
    for (std::size_t j = run; j < n_points; ++j) {
        const double frac = static_cast<double>(j - run + 1) / static_cast<double>(tail + 1);
        curve[static_cast<Eigen::Index>(j)] = peak - (peak - floor) * frac;
    }
    return curve;
}

} // namespace detail

/// Synthetic measurement whose extracted profile (with the MLE drift
/// variant) reproduces the requested usability: paired cycles carry an
/// exactly-planted drift level and the mean curve an exactly-planted
/// increasing run.
inline ConductanceSet synthesize_conductance(double usability, double mono_fraction = 1.0,
                                             std::size_t required_len = 35,
                                             std::size_t n_points = 0,
                                             int cycle_pairs = 1) {
    if (!(usability > 0.0) || usability > 1.0 || !(mono_fraction > 0.0) || mono_fraction > 1.0 ||
        mono_fraction < usability) {
        throw ArgumentError("synthesize_conductance: need 0 < usability <= mono_fraction <= 1");
    }
    if (required_len < 2) throw ArgumentError("synthesize_conductance: required_len too small");
    if (cycle_pairs < 1) throw ArgumentError("synthesize_conductance: cycle_pairs must be >= 1");
    if (n_points == 0) n_points = required_len + required_len / 2;
    if (n_points < required_len) {
        throw ArgumentError("synthesize_conductance: n_points must be >= required_len");
    }

    const auto req = static_cast<double>(required_len);
    auto run = static_cast<std::size_t>(std::llround(mono_fraction * req));
    run = std::clamp<std::size_t>(run, 1, required_len);
    while (static_cast<double>(run) / req < usability && run < required_len) ++run;
    if (run >= required_len) run = n_points;  // fully monotonic curve

    const double mono_actual =
        std::min(static_cast<double>(run) / req, 1.0);
    const double sigma = std::max(std::log(mono_actual) - std::log(usability), 0.0);
    const double s = detail::paired_cycle_spread(sigma);
    const double inv_cosh = 1.0 / std::cosh(s);
    const double up = std::exp(s) * inv_cosh, down = std::exp(-s) * inv_cosh;

    ConductanceSet cond;
    cond.mean_smoothed = detail::synthetic_mean_curve(run, n_points);
    cond.positive_quadrant_index.resize(n_points);
    for (std::size_t j = 0; j < n_points; ++j) cond.positive_quadrant_index[j] = j;
    cond.per_cycle.resize(2 * cycle_pairs, static_cast<Eigen::Index>(n_points));
    for (int p = 0; p < cycle_pairs; ++p) {
        cond.per_cycle.row(2 * p) = cond.mean_smoothed.transpose() * up;
        cond.per_cycle.row(2 * p + 1) = cond.mean_smoothed.transpose() * down;
    }
    return cond;
}

/// Same planted device as synthesize_conductance, expressed as a
/// multi-cycle I-V sweep over a strictly increasing positive voltage ramp.
inline IVTrace synthesize_iv_trace(double usability, double mono_fraction = 1.0,
                                   std::size_t required_len = 35, std::size_t n_points = 0,
                                   int cycle_pairs = 1) {
    const ConductanceSet cond =
        synthesize_conductance(usability, mono_fraction, required_len, n_points, cycle_pairs);
    const auto n = static_cast<std::size_t>(cond.mean_smoothed.size());
    IVTrace trace;
    trace.device_id = "synthetic";
    const auto n_cycles = static_cast<std::size_t>(cond.per_cycle.rows());
    trace.cycles.resize(n_cycles);
    for (std::size_t c = 0; c < n_cycles; ++c) {
        trace.cycles[c].resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double v = 0.1 + 5.9 * static_cast<double>(j) / static_cast<double>(n - 1);
            const double g = cond.per_cycle(static_cast<Eigen::Index>(c),
                                            static_cast<Eigen::Index>(j));
            trace.cycles[c][j] = IVSample{v, g * v};
        }
    }
    return trace;
}

} // namespace memrobust
