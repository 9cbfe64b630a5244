#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "memrobust/errors.hpp"
#include "memrobust/ivdata.hpp"
#include "memrobust/stats.hpp"

namespace memrobust {

enum class SigmaVariant { mle, upper95 };

inline const char* to_string(SigmaVariant v) {
    return v == SigmaVariant::mle ? "mle" : "upper95";
}

inline SigmaVariant sigma_variant_from_string(const std::string& s) {
    if (s == "mle") return SigmaVariant::mle;
    if (s == "upper95") return SigmaVariant::upper95;
    throw ArgumentError("unknown sigma variant '" + s + "' (expected mle or upper95)");
}

/// Extracted device model: operative segment, weight-correction table,
/// stochastic-drift estimates, and the combined usability score.
struct NonIdealityProfile {
    std::size_t lcis_start = 0;  // into the mean curve, end exclusive
    std::size_t lcis_end = 0;
    std::size_t lcis_len = 0;
    std::size_t required_len = 35;
    std::vector<double> ratio_table;  // length required_len, entries in [0,1]
    double sigma_mle = 0.0;
    double sigma_95 = 0.0;
    SigmaVariant sigma_variant = SigmaVariant::upper95;
    double usability = 1.0;
    double c_min = 0.0;  // siemens
    double c_max = 0.0;

    /// The drift level consistent with the stored usability.
    [[nodiscard]] double sigma() const {
        return sigma_variant == SigmaVariant::mle ? sigma_mle : sigma_95;
    }

    [[nodiscard]] bool is_ideal() const {
        if (sigma() != 0.0) return false;
        return std::all_of(ratio_table.begin(), ratio_table.end(),
                           [](double r) { return r == 1.0; });
    }
};

/// usability = min(lcis_len / required_len, 1) * exp(-sigma)
inline double usability_score(std::size_t lcis_len, std::size_t required_len, double sigma) {
    const double mono = std::min(
        static_cast<double>(lcis_len) / static_cast<double>(required_len), 1.0);
    return mono * std::exp(-sigma);
}

inline double recompute_usability(const NonIdealityProfile& p) {
    return usability_score(p.lcis_len, p.required_len, p.sigma());
}

/// Longest contiguous strictly increasing run of `seq`, as a [start, end)
/// pair. Ties break to the smallest start.
inline std::pair<std::size_t, std::size_t> lcis(std::span<const double> seq) {
    if (seq.empty()) throw ArgumentError("lcis: empty sequence");
    std::size_t best_start = 0, best_len = 1;
    std::size_t run_start = 0;
    for (std::size_t i = 1; i < seq.size(); ++i) {
        if (!(seq[i] > seq[i - 1])) run_start = i;
        const std::size_t run_len = i - run_start + 1;
        if (run_len > best_len) {
            best_len = run_len;
            best_start = run_start;
        }
    }
    return {best_start, best_start + best_len};
}

inline std::pair<std::size_t, std::size_t> lcis(const Eigen::VectorXd& seq) {
    return lcis(std::span<const double>(seq.data(), static_cast<std::size_t>(seq.size())));
}

struct SigmaEstimate {
    double mle = 0.0;
    double upper95 = 0.0;
    std::size_t n_samples = 0;

    [[nodiscard]] double value(SigmaVariant v) const {
        return v == SigmaVariant::mle ? mle : upper95;
    }
};

/// Log-normal drift estimate over the window [start, end) of the curve:
/// sigma_mle^2 = mean of log^2(C'_ij / Cbar_j) across all cycles i and
/// retained points j, with Cbar the smoothed mean. The conservative bound
/// divides by the 2.5th-percentile chi-square quantile at n-1 dof, so
/// upper95 always exceeds the MLE.
inline SigmaEstimate estimate_sigma(const ConductanceSet& cond, std::size_t start,
                                    std::size_t end) {
    const auto n_points = static_cast<std::size_t>(cond.mean_smoothed.size());
    if (!(start < end) || end > n_points) {
        throw ArgumentError("estimate_sigma: invalid window [" + std::to_string(start) + ", " +
                            std::to_string(end) + ") for curve of length " +
                            std::to_string(n_points));
    }
    const auto n_cycles = static_cast<std::size_t>(cond.per_cycle.rows());
    const std::size_t n = n_cycles * (end - start);
    if (n < 2) throw InsufficientDataError("estimate_sigma: needs at least 2 samples, got " +
                                           std::to_string(n));

    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n_cycles; ++i) {
        for (std::size_t j = start; j < end; ++j) {
            const double drifted = cond.per_cycle(static_cast<Eigen::Index>(i),
                                                  static_cast<Eigen::Index>(j));
            const double mean = cond.mean_smoothed(static_cast<Eigen::Index>(j));
            if (!(drifted > 0.0) || !(mean > 0.0)) {
                throw DomainError("estimate_sigma: non-positive conductance at cycle " +
                                  std::to_string(i) + ", point " + std::to_string(j));
            }
            const double r = std::log(drifted / mean);
            sum_sq += r * r;
        }
    }
    SigmaEstimate est;
    est.n_samples = n;
    const double var_mle = sum_sq / static_cast<double>(n);
    est.mle = std::sqrt(var_mle);
    const double dof = static_cast<double>(n - 1);
    const double q = chi_square_quantile(0.025, dof);
    est.upper95 = std::sqrt(dof * var_mle / q);
    return est;
}

struct RatioTableResult {
    std::vector<double> table;
    std::size_t adjusted_start = 0;  // operative window actually used
    std::size_t adjusted_end = 0;
};

/// Builds the per-level weight-correction table. When the increasing run
/// already covers required_len the table is all ones. Otherwise the window
/// is extended to required_len (shifted back from the curve tail if it
/// overruns) and positions outside the original run get
/// (C - c_min) / (c_max - c_min) against the global curve extrema.
inline RatioTableResult build_ratio_table(std::span<const double> mean_curve, std::size_t start,
                                          std::size_t end, std::size_t required_len) {
    if (required_len < 1) throw ArgumentError("build_ratio_table: required_len must be >= 1");
    const std::size_t n = mean_curve.size();
    if (n < required_len) {
        throw InsufficientDataError("build_ratio_table: curve length " + std::to_string(n) +
                                    " shorter than required_len " + std::to_string(required_len));
    }
    if (!(start < end) || end > n) {
        throw ArgumentError("build_ratio_table: invalid run [" + std::to_string(start) + ", " +
                            std::to_string(end) + ")");
    }

    RatioTableResult res;
    res.table.assign(required_len, 1.0);
    if (end - start >= required_len) {
        res.adjusted_start = start;
        res.adjusted_end = end;
        return res;
    }

    const std::size_t run_start = start, run_end = end;
    std::size_t win_start = start;
    std::size_t win_end = start + required_len;
    if (win_end > n) {
        win_start = n - required_len;
        win_end = n;
    }

    const auto [min_it, max_it] = std::minmax_element(mean_curve.begin(), mean_curve.end());
    const double c_min = *min_it, c_max = *max_it;
    const double span = c_max - c_min;

    for (std::size_t i = 0; i < required_len; ++i) {
        const std::size_t idx = win_start + i;
        if (idx >= run_start && idx < run_end) continue;  // inside the increasing run
        // Flat-curve degeneracy: nothing to scale by, keep the weight.
        res.table[i] = span > 0.0 ? (mean_curve[idx] - c_min) / span : 1.0;
    }
    res.adjusted_start = win_start;
    res.adjusted_end = win_end;
    return res;
}

/// Full profile extraction: increasing-run detection, drift estimation on
/// the operative window, correction table, and the usability score.
inline NonIdealityProfile compute_profile(const ConductanceSet& cond,
                                          std::size_t required_len = 35,
                                          SigmaVariant variant = SigmaVariant::upper95) {
    const Eigen::VectorXd& curve = cond.mean_smoothed;
    std::span<const double> curve_span(curve.data(), static_cast<std::size_t>(curve.size()));

    NonIdealityProfile profile;
    profile.required_len = required_len;
    profile.sigma_variant = variant;

    auto [start, end] = lcis(curve_span);
    profile.lcis_start = start;
    profile.lcis_end = end;
    profile.lcis_len = end - start;

    RatioTableResult ratio = build_ratio_table(curve_span, start, end, required_len);
    profile.ratio_table = std::move(ratio.table);

    SigmaEstimate sigma = estimate_sigma(cond, ratio.adjusted_start, ratio.adjusted_end);
    profile.sigma_mle = sigma.mle;
    profile.sigma_95 = sigma.upper95;

    profile.c_min = curve.minCoeff();
    profile.c_max = curve.maxCoeff();
    profile.usability = recompute_usability(profile);
    return profile;
}

inline void to_json(nlohmann::json& j, const NonIdealityProfile& p) {
    j = nlohmann::json{{"lcis_start", p.lcis_start},
                       {"lcis_end", p.lcis_end},
                       {"lcis_len", p.lcis_len},
                       {"required_len", p.required_len},
                       {"ratio_table", p.ratio_table},
                       {"sigma_mle", p.sigma_mle},
                       {"sigma_95", p.sigma_95},
                       {"sigma_variant", to_string(p.sigma_variant)},
                       {"usability", p.usability},
                       {"c_min", p.c_min},
                       {"c_max", p.c_max}};
}

inline void from_json(const nlohmann::json& j, NonIdealityProfile& p) {
    j.at("lcis_start").get_to(p.lcis_start);
    j.at("lcis_end").get_to(p.lcis_end);
    j.at("lcis_len").get_to(p.lcis_len);
    j.at("required_len").get_to(p.required_len);
    j.at("ratio_table").get_to(p.ratio_table);
    j.at("sigma_mle").get_to(p.sigma_mle);
    j.at("sigma_95").get_to(p.sigma_95);
    p.sigma_variant = sigma_variant_from_string(j.at("sigma_variant").get<std::string>());
    j.at("usability").get_to(p.usability);
    j.at("c_min").get_to(p.c_min);
    j.at("c_max").get_to(p.c_max);
}

} // namespace memrobust
