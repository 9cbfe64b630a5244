#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memrobust/errors.hpp"
#include "memrobust/neural.hpp"
#include "memrobust/rng.hpp"

namespace memrobust {

/// Value counts of a multiplicative perturbation vector: `zeros`/`halves`/
/// `ones` coordinates set to 0, 0.5 and 1; any remainder is arbitrary.
struct PerturbationPattern {
    std::size_t zeros = 0;
    std::size_t halves = 0;
    std::size_t ones = 0;
};

inline PerturbationPattern pattern_of(const std::vector<double>& delta) {
    PerturbationPattern pat;
    for (double d : delta) {
        if (d == 0.0) ++pat.zeros;
        else if (d == 0.5) ++pat.halves;
        else if (d == 1.0) ++pat.ones;
    }
    return pat;
}

/// Number of coordinates taking arbitrary values (outside {0.5, 1}); the
/// perturbation is admissible for budget r iff this count is <= r.
inline std::size_t free_coordinate_count(const std::vector<double>& delta) {
    std::size_t count = 0;
    for (double d : delta) {
        if (d != 0.5 && d != 1.0) ++count;
    }
    return count;
}

inline bool in_robustness_set(const std::vector<double>& delta, std::size_t budget) {
    return free_coordinate_count(delta) <= budget;
}

/// Closed-form perturbation budget: the smoothed top-class score f_pi0
/// stays above 1/2 for every perturbation with at most floor(r) coordinates
/// outside {0.5, 1}, where
///   r = [ln(1.5 - f_pi0) - Theta ln(1 - p2)] / [ln p1 - ln(1 - p2)].
inline double certified_radius(double f_pi0, std::size_t theta_count, double p1, double p2) {
    if (!(f_pi0 >= 0.0 && f_pi0 <= 1.0)) {
        throw ArgumentError("certified_radius: f_pi0 must lie in [0, 1]");
    }
    if (p1 <= 0.0 || p1 >= 1.0) {
        throw DomainError("certified_radius: p1 must lie strictly inside (0, 1)");
    }
    if (p2 < 0.0 || p2 >= 1.0 || p1 + p2 > 1.0) {
        throw ArgumentError("certified_radius: need 0 <= p2 < 1 and p1 + p2 <= 1");
    }
    const double log_p1 = std::log(p1);
    const double log_q2 = std::log(1.0 - p2);
    const double denom = log_p1 - log_q2;
    if (denom == 0.0) {
        throw DomainError("certified_radius: p1 = 1 - p2 gives a zero denominator");
    }
    const double numer = std::log(1.5 - f_pi0) - static_cast<double>(theta_count) * log_q2;
    return numer / denom;
}

/// Largest mass excess sum([lambda*pi_0 - pi_delta]_+) between the scaled
/// noise distribution and its pushforward under a perturbation with the
/// given value counts:
///   lambda (1 - p1^(Theta-m-l) (1-p2)^l)
///     + [lambda - p1^(-k)]_+ p1^(Theta-m-l) (1-p2)^l.
inline double df_bound(double lambda, const PerturbationPattern& pat, std::size_t theta_count,
                       double p1, double p2) {
    if (lambda < 0.0) throw ArgumentError("df_bound: lambda must be >= 0");
    if (pat.zeros + pat.halves + pat.ones > theta_count) {
        throw ArgumentError("df_bound: pattern counts exceed the coordinate count");
    }
    if (p1 <= 0.0 || p1 >= 1.0 || p2 < 0.0 || p1 + p2 > 1.0) {
        throw ArgumentError("df_bound: need 0 < p1 < 1, p2 >= 0, p1 + p2 <= 1");
    }
    const auto exp_p1 = static_cast<double>(theta_count - pat.ones - pat.halves);
    const double survive = std::pow(p1, exp_p1) * std::pow(1.0 - p2, static_cast<double>(pat.halves));
    const double excess = std::max(lambda - std::pow(p1, -static_cast<double>(pat.zeros)), 0.0);
    return lambda * (1.0 - survive) + excess * survive;
}

inline constexpr std::size_t kExactSmoothingCap = 14;

/// Exact expectation over all {0, 0.5, 1}^Theta factor assignments with
/// product multinomial mass; atoms of zero probability are skipped.
/// `eval(factors)` must return the model output for one assignment.
template <typename EvalFn>
Eigen::VectorXd enumerate_smoothed(std::size_t theta_count, double p1, double p2,
                                   Eigen::Index n_out, EvalFn&& eval) {
    if (p1 < 0.0 || p2 < 0.0 || p1 + p2 > 1.0) {
        throw ArgumentError("enumerate_smoothed: invalid probabilities");
    }
    if (theta_count > kExactSmoothingCap) {
        throw ArgumentError("enumerate_smoothed: " + std::to_string(theta_count) +
                            " coordinates exceed the exact cap of " +
                            std::to_string(kExactSmoothingCap) +
                            "; use smoothed_predict for a Monte-Carlo estimate");
    }
    std::vector<double> values, masses;
    if (p1 > 0.0) {
        values.push_back(0.0);
        masses.push_back(p1);
    }
    if (p2 > 0.0) {
        values.push_back(0.5);
        masses.push_back(p2);
    }
    const double p3 = 1.0 - p1 - p2;
    if (p3 > 0.0) {
        values.push_back(1.0);
        masses.push_back(p3);
    }
    const std::size_t base = values.size();

    std::vector<std::size_t> digits(theta_count, 0);
    std::vector<double> factors(theta_count, values[0]);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_out);
    while (true) {
        double mass = 1.0;
        for (std::size_t d : digits) mass *= masses[d];
        acc += mass * eval(factors);
        std::size_t pos = 0;
        while (pos < theta_count) {
            if (++digits[pos] < base) {
                factors[pos] = values[digits[pos]];
                break;
            }
            digits[pos] = 0;
            factors[pos] = values[0];
            ++pos;
        }
        if (pos == theta_count) break;
    }
    return acc;
}

namespace detail {

/// Allocation-light repeated evaluation of one network at a fixed input
/// while its noise-site weights are rescaled between calls.
class ScaledNetEvaluator {
public:
    ScaledNetEvaluator(const DenseNetwork& net, const Eigen::VectorXd& x)
        : work_(net), sites_(noise_site_layers(net)), input_(x) {
        net.validate();
        if (x.size() != net.input_dim()) {
            throw ArgumentError("smoothing: input dimension mismatch");
        }
        for (std::size_t l : sites_) base_.push_back(net.layers[l].weights);
        buffers_.resize(net.layers.size());
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            buffers_[l].resize(net.layers[l].weights.rows());
        }
    }

    [[nodiscard]] std::size_t coordinate_count() const {
        std::size_t n = 0;
        for (const auto& b : base_) n += static_cast<std::size_t>(b.size());
        return n;
    }

    /// Multiplies the base noise-site weights by `factors` (site order,
    /// column-major within a site) and runs the forward pass.
    const Eigen::VectorXd& operator()(const std::vector<double>& factors) {
        std::size_t pos = 0;
        for (std::size_t s = 0; s < sites_.size(); ++s) {
            Eigen::MatrixXd& w = work_.layers[sites_[s]].weights;
            const Eigen::MatrixXd& b = base_[s];
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                w.data()[i] = b.data()[i] * factors[pos++];
            }
        }
        const Eigen::VectorXd* prev = &input_;
        for (std::size_t l = 0; l < work_.layers.size(); ++l) {
            const Layer& layer = work_.layers[l];
            buffers_[l].noalias() = layer.weights * (*prev);
            buffers_[l] += layer.bias;
            switch (layer.activation) {
                case Activation::relu:
                    buffers_[l] = buffers_[l].cwiseMax(0.0);
                    break;
                case Activation::identity:
                    break;
                case Activation::softmax: {
                    const double m = buffers_[l].maxCoeff();
                    buffers_[l] = (buffers_[l].array() - m).exp();
                    buffers_[l] /= buffers_[l].sum();
                    break;
                }
            }
            prev = &buffers_[l];
        }
        return buffers_.back();
    }

private:
    DenseNetwork work_;
    std::vector<std::size_t> sites_;
    std::vector<Eigen::MatrixXd> base_;
    Eigen::VectorXd input_;
    std::vector<Eigen::VectorXd> buffers_;
};

} // namespace detail

/// Exact smoothed class probabilities of the network at `x` under
/// multinomial injection (p1, p2) on its noise sites.
inline Eigen::VectorXd exact_smoothed(const DenseNetwork& net, const Eigen::VectorXd& x,
                                      double p1, double p2) {
    detail::ScaledNetEvaluator eval(net, x);
    return enumerate_smoothed(eval.coordinate_count(), p1, p2, net.output_dim(), eval);
}

inline std::vector<double> default_perturbation_grid() { return {-1.0, 0.1, 0.25, 2.0, 5.0}; }

struct VerifyReport {
    double f_pi0 = 0.0;
    std::size_t theta_count = 0;
    double p1 = 0.0, p2 = 0.0;
    double radius = 0.0;
    long radius_floor = 0;
    int predicted_class = 0;
    bool certified = false;
    std::size_t tested_patterns = 0;
    double min_margin = std::numeric_limits<double>::infinity();
    bool lagrangian_ok = true;
    std::size_t violations = 0;
    std::vector<double> counterexample;  // first violating perturbation, if any
};

namespace detail {

inline void for_each_subset(std::size_t n, std::size_t k,
                            const std::function<void(const std::vector<std::size_t>&)>& fn) {
    std::vector<std::size_t> comb(k);
    for (std::size_t i = 0; i < k; ++i) comb[i] = i;
    if (k == 0) {
        fn(comb);
        return;
    }
    while (true) {
        fn(comb);
        std::size_t i = k;
        while (i-- > 0) {
            if (comb[i] + (k - i) < n) {
                ++comb[i];
                for (std::size_t j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
                break;
            }
            if (i == 0) return;
        }
    }
}

} // namespace detail

/// Brute-force check of the certificate: enumerates admissible
/// perturbations (every subset of up to floor(r) coordinates on the value
/// grid, the rest swept over {0.5, 1}, sampled once the sweep exceeds
/// `max_rest_combos`) and confirms the smoothed prediction stays above 1/2.
/// A violation means an implementation bug, and is reported, not hidden.
inline VerifyReport verify_certificate(const DenseNetwork& net, const Eigen::VectorXd& x,
                                       double p1, double p2,
                                       std::vector<double> value_grid = default_perturbation_grid(),
                                       std::uint64_t seed = 0,
                                       std::size_t max_rest_combos = 512) {
    const std::size_t theta = masked_weight_count(net);
    if (theta > 10) {
        throw ArgumentError("verify_certificate: coordinate count " + std::to_string(theta) +
                            " exceeds the enumeration cap of 10");
    }
    if (value_grid.empty()) throw ArgumentError("verify_certificate: empty value grid");

    VerifyReport report;
    report.theta_count = theta;
    report.p1 = p1;
    report.p2 = p2;

    const Eigen::VectorXd base_probs = exact_smoothed(net, x, p1, p2);
    Eigen::Index pred = 0;
    base_probs.maxCoeff(&pred);
    report.predicted_class = static_cast<int>(pred);
    report.f_pi0 = base_probs[pred];
    if (!(report.f_pi0 > 0.5)) {
        throw DomainError("verify_certificate: smoothed top score " +
                          std::to_string(report.f_pi0) + " is not above 1/2; not certifiable");
    }
    report.radius = certified_radius(report.f_pi0, theta, p1, p2);
    report.radius_floor = static_cast<long>(std::floor(report.radius));
    if (report.radius_floor < 0) {
        throw DomainError("verify_certificate: certified radius is negative; not certifiable");
    }
    const auto budget = static_cast<std::size_t>(report.radius_floor);

    Rng rest_rng = make_rng(derive_seed(seed, 0x7e57));
    std::vector<double> delta(theta);

    auto test_delta = [&]() {
        DenseNetwork perturbed = apply_weight_factors(net, delta);
        const Eigen::VectorXd probs = exact_smoothed(perturbed, x, p1, p2);
        const double score = probs[pred];
        const double margin = score - 0.5;
        ++report.tested_patterns;
        report.min_margin = std::min(report.min_margin, margin);
        if (!(score > 0.5)) {
            ++report.violations;
            if (report.counterexample.empty()) report.counterexample = delta;
        }
        const PerturbationPattern pat = pattern_of(delta);
        const double lower = report.f_pi0 - df_bound(1.0, pat, theta, p1, p2);
        if (score < lower - 1e-9) report.lagrangian_ok = false;
    };

    for (std::size_t free_count = 0; free_count <= budget; ++free_count) {
        detail::for_each_subset(theta, free_count, [&](const std::vector<std::size_t>& subset) {
            std::vector<std::size_t> grid_digits(free_count, 0);
            while (true) {
                const std::size_t rest = theta - free_count;
                std::vector<bool> in_subset(theta, false);
                for (std::size_t i : subset) in_subset[i] = true;
                std::vector<std::size_t> rest_idx;
                rest_idx.reserve(rest);
                for (std::size_t i = 0; i < theta; ++i) {
                    if (!in_subset[i]) rest_idx.push_back(i);
                }
                for (std::size_t i = 0; i < free_count; ++i) {
                    delta[subset[i]] = value_grid[grid_digits[i]];
                }

                const bool exhaustive = rest < 64 && (1ULL << rest) <= max_rest_combos;
                if (exhaustive) {
                    const std::uint64_t combos = 1ULL << rest;
                    for (std::uint64_t bits = 0; bits < combos; ++bits) {
                        for (std::size_t i = 0; i < rest; ++i) {
                            delta[rest_idx[i]] = (bits >> i) & 1ULL ? 1.0 : 0.5;
                        }
                        test_delta();
                    }
                } else {
                    std::uniform_int_distribution<int> coin(0, 1);
                    for (std::size_t s = 0; s < max_rest_combos; ++s) {
                        for (std::size_t i = 0; i < rest; ++i) {
                            delta[rest_idx[i]] = coin(rest_rng) != 0 ? 1.0 : 0.5;
                        }
                        test_delta();
                    }
                }

                std::size_t pos = 0;
                while (pos < free_count) {
                    if (++grid_digits[pos] < value_grid.size()) break;
                    grid_digits[pos] = 0;
                    ++pos;
                }
                if (pos == free_count) break;
            }
        });
    }

    report.certified = report.violations == 0;
    return report;
}

inline void to_json(nlohmann::json& j, const VerifyReport& r) {
    j = nlohmann::json{{"f_pi0", r.f_pi0},
                       {"theta_count", r.theta_count},
                       {"p1", r.p1},
                       {"p2", r.p2},
                       {"radius", r.radius},
                       {"radius_floor", r.radius_floor},
                       {"predicted_class", r.predicted_class},
                       {"certified", r.certified},
                       {"tested_patterns", r.tested_patterns},
                       {"min_margin", r.min_margin},
                       {"lagrangian_ok", r.lagrangian_ok},
                       {"violations", r.violations}};
    if (!r.counterexample.empty()) j["counterexample"] = r.counterexample;
}

} // namespace memrobust
