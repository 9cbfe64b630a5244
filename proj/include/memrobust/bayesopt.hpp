#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "memrobust/errors.hpp"
#include "memrobust/fsio.hpp"
#include "memrobust/memsim.hpp"
#include "memrobust/neural.hpp"
#include "memrobust/rng.hpp"
#include "memrobust/stats.hpp"

namespace memrobust {

// ---------------------------------------------------------------------------
// Finite mixed search spaces
// ---------------------------------------------------------------------------

struct Dimension {
    enum class Kind { categorical, numeric };
    std::string name;
    Kind kind = Kind::numeric;
    std::vector<std::string> levels;  // categorical
    std::vector<double> values;       // numeric grid, strictly ascending
    std::string unit;

    [[nodiscard]] std::size_t cardinality() const {
        return kind == Kind::categorical ? levels.size() : values.size();
    }

    /// Code in [0,1]: equally spaced for categorical levels, min-max scaled
    /// for numeric grids. The first level / grid minimum is 0, the last is 1.
    [[nodiscard]] double code_of(std::size_t index) const {
        const std::size_t n = cardinality();
        if (n <= 1) return 0.0;
        if (kind == Kind::categorical) {
            return static_cast<double>(index) / static_cast<double>(n - 1);
        }
        const double lo = values.front(), hi = values.back();
        return (values[index] - lo) / (hi - lo);
    }

    void validate() const {
        if (name.empty()) throw ArgumentError("dimension without a name");
        if (cardinality() == 0) throw ArgumentError("dimension '" + name + "' has no levels");
        if (kind == Kind::numeric) {
            for (std::size_t i = 1; i < values.size(); ++i) {
                if (!(values[i] > values[i - 1])) {
                    throw ArgumentError("dimension '" + name +
                                        "': grid values must be strictly ascending");
                }
            }
        }
    }
};

using ConfigValue = std::variant<std::string, double>;
using RawConfig = std::vector<ConfigValue>;  // one entry per dimension, in order
using EncodedPoint = Eigen::VectorXd;

inline std::string config_value_to_string(const ConfigValue& v) {
    if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
    return format_double(std::get<double>(v));
}

struct SearchSpace {
    std::vector<Dimension> dims;

    void validate() const {
        if (dims.empty()) throw ArgumentError("search space has no dimensions");
        for (const Dimension& d : dims) d.validate();
        if (grid_size() < 2) throw ArgumentError("search space grid must have at least 2 points");
    }

    [[nodiscard]] std::size_t grid_size() const {
        std::size_t n = 1;
        for (const Dimension& d : dims) n *= d.cardinality();
        return n;
    }

    /// Grid index -> per-dimension level indices (first dimension most
    /// significant, so index order is lexicographic in encoded space).
    [[nodiscard]] std::vector<std::size_t> unrank(std::size_t index) const {
        std::vector<std::size_t> multi(dims.size());
        for (std::size_t d = dims.size(); d-- > 0;) {
            const std::size_t card = dims[d].cardinality();
            multi[d] = index % card;
            index /= card;
        }
        return multi;
    }

    [[nodiscard]] std::size_t rank(const std::vector<std::size_t>& multi) const {
        std::size_t index = 0;
        for (std::size_t d = 0; d < dims.size(); ++d) index = index * dims[d].cardinality() + multi[d];
        return index;
    }

    [[nodiscard]] RawConfig config_at(const std::vector<std::size_t>& multi) const {
        RawConfig cfg(dims.size());
        for (std::size_t d = 0; d < dims.size(); ++d) {
            const Dimension& dim = dims[d];
            if (dim.kind == Dimension::Kind::categorical) cfg[d] = dim.levels[multi[d]];
            else cfg[d] = dim.values[multi[d]];
        }
        return cfg;
    }

    [[nodiscard]] RawConfig config_at(std::size_t index) const { return config_at(unrank(index)); }

    /// Maps a configuration to per-dimension level indices; off-grid values
    /// raise an argument error naming the nearest grid values.
    [[nodiscard]] std::vector<std::size_t> multi_of(const RawConfig& cfg) const {
        if (cfg.size() != dims.size()) {
            throw ArgumentError("configuration has " + std::to_string(cfg.size()) +
                                " values; space has " + std::to_string(dims.size()) +
                                " dimensions");
        }
        std::vector<std::size_t> multi(dims.size());
        for (std::size_t d = 0; d < dims.size(); ++d) {
            const Dimension& dim = dims[d];
            if (dim.kind == Dimension::Kind::categorical) {
                if (!std::holds_alternative<std::string>(cfg[d])) {
                    throw ArgumentError("dimension '" + dim.name + "' expects a categorical level");
                }
                const std::string& level = std::get<std::string>(cfg[d]);
                auto it = std::find(dim.levels.begin(), dim.levels.end(), level);
                if (it == dim.levels.end()) {
                    std::string known;
                    for (const auto& l : dim.levels) known += (known.empty() ? "" : ", ") + l;
                    throw ArgumentError("dimension '" + dim.name + "': unknown level '" + level +
                                        "' (levels: " + known + ")");
                }
                multi[d] = static_cast<std::size_t>(it - dim.levels.begin());
            } else {
                if (!std::holds_alternative<double>(cfg[d])) {
                    throw ArgumentError("dimension '" + dim.name + "' expects a numeric value");
                }
                const double v = std::get<double>(cfg[d]);
                auto it = std::find(dim.values.begin(), dim.values.end(), v);
                if (it == dim.values.end()) {
                    auto lower = std::lower_bound(dim.values.begin(), dim.values.end(), v);
                    std::string nearest;
                    if (lower != dim.values.begin()) nearest += format_double(*(lower - 1));
                    if (lower != dim.values.end()) {
                        if (!nearest.empty()) nearest += ", ";
                        nearest += format_double(*lower);
                    }
                    throw ArgumentError("dimension '" + dim.name + "': value " + format_double(v) +
                                        " is off-grid (nearest: " + nearest + ")");
                }
                multi[d] = static_cast<std::size_t>(it - dim.values.begin());
            }
        }
        return multi;
    }

    [[nodiscard]] EncodedPoint encode_multi(const std::vector<std::size_t>& multi) const {
        EncodedPoint x(static_cast<Eigen::Index>(dims.size()));
        for (std::size_t d = 0; d < dims.size(); ++d) {
            x[static_cast<Eigen::Index>(d)] = dims[d].code_of(multi[d]);
        }
        return x;
    }
};

inline EncodedPoint encode(const SearchSpace& space, const RawConfig& cfg) {
    return space.encode_multi(space.multi_of(cfg));
}

/// Inverse of encode for on-grid points: snaps each coordinate to the
/// nearest level code, so decode(encode(x)) == x exactly.
inline RawConfig decode(const SearchSpace& space, const EncodedPoint& x) {
    if (static_cast<std::size_t>(x.size()) != space.dims.size()) {
        throw ArgumentError("decode: dimension mismatch");
    }
    std::vector<std::size_t> multi(space.dims.size());
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        const Dimension& dim = space.dims[d];
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < dim.cardinality(); ++i) {
            const double dist = std::abs(dim.code_of(i) - x[static_cast<Eigen::Index>(d)]);
            if (dist < best) {
                best = dist;
                best_idx = i;
            }
        }
        multi[d] = best_idx;
    }
    return space.config_at(multi);
}

/// The default fabrication space: 6 perovskite types x 8 nanowire lengths
/// x 7 diameters x 5 electrodeposition times x 5 silver thicknesses = 8400
/// grid points.
inline SearchSpace default_fabrication_space() {
    SearchSpace space;
    space.dims.push_back(Dimension{"perovskite_type",
                                   Dimension::Kind::categorical,
                                   {"MAPbCl3", "MAPbBr3", "MAPbI3", "CsPbI3", "FAPbI3", "FAPbBr3"},
                                   {},
                                   ""});
    space.dims.push_back(Dimension{
        "nw_length_um", Dimension::Kind::numeric, {}, {0.6, 1.0, 1.2, 1.5, 1.8, 2.0, 2.5, 3.0},
        "um"});
    space.dims.push_back(Dimension{"nw_diameter_nm",
                                   Dimension::Kind::numeric,
                                   {},
                                   {10.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0},
                                   "nm"});
    space.dims.push_back(Dimension{
        "pb_ed_time_min", Dimension::Kind::numeric, {}, {5.0, 10.0, 15.0, 20.0, 25.0}, "min"});
    space.dims.push_back(Dimension{"ag_thickness_nm",
                                   Dimension::Kind::numeric,
                                   {},
                                   {50.0, 100.0, 200.0, 400.0, 600.0},
                                   "nm"});
    space.validate();
    return space;
}

// ---------------------------------------------------------------------------
// Gaussian-process surrogate
// ---------------------------------------------------------------------------

struct GPHyper {
    double length_scale = 0.5;
    double signal_var = 1.0;
    double noise_var = 1e-6;
};

struct HyperMode {
    enum class Kind { fixed, mle };
    Kind kind = Kind::mle;
    GPHyper fixed_hyper;

    static HyperMode mle() { return {}; }
    static HyperMode fixed(GPHyper h) {
        HyperMode m;
        m.kind = Kind::fixed;
        m.fixed_hyper = h;
        return m;
    }
};

struct Observation {
    EncodedPoint x;
    double y = 0.0;
};

inline double sq_exp_kernel(const EncodedPoint& a, const EncodedPoint& b, const GPHyper& h) {
    const double d2 = (a - b).squaredNorm();
    return h.signal_var * std::exp(-0.5 * d2 / (h.length_scale * h.length_scale));
}

struct GPState {
    std::vector<Observation> obs;
    GPHyper hyper;
    double prior_mean = 0.0;
    Eigen::MatrixXd chol_lower;  // L with L L^T = K + noise I (+ jitter)
    Eigen::VectorXd alpha;       // (K + noise I)^{-1} (y - prior_mean)
    double jitter_added = 0.0;
};

namespace detail {

/// Cholesky of K + (noise + jitter) I with jitter escalation up to 1e-6.
inline std::pair<Eigen::MatrixXd, double> robust_cholesky(const Eigen::MatrixXd& gram,
                                                          double noise_var) {
    const Eigen::Index n = gram.rows();
    double jitter = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::MatrixXd a = gram;
        a.diagonal().array() += noise_var + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() == Eigen::Success) {
            return {Eigen::MatrixXd(llt.matrixL()), jitter};
        }
        jitter = jitter == 0.0 ? 1e-12 : jitter * 10.0;
        if (jitter > 1e-6) break;
    }
    throw NumericalError("Gram matrix factorization failed even with jitter 1e-6 (n = " +
                         std::to_string(n) + ")");
}

inline double log_marginal_likelihood(const std::vector<Observation>& obs, const GPHyper& h) {
    const auto n = static_cast<Eigen::Index>(obs.size());
    double mean = 0.0;
    for (const auto& o : obs) mean += o.y;
    mean /= static_cast<double>(obs.size());

    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double k = sq_exp_kernel(obs[static_cast<std::size_t>(i)].x,
                                           obs[static_cast<std::size_t>(j)].x, h);
            gram(i, j) = k;
            gram(j, i) = k;
        }
    }
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = obs[static_cast<std::size_t>(i)].y - mean;

    auto [lower, jitter] = robust_cholesky(gram, h.noise_var);
    const Eigen::VectorXd alpha =
        lower.transpose().triangularView<Eigen::Upper>().solve(
            lower.triangularView<Eigen::Lower>().solve(y));
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(lower(i, i));
    return -0.5 * y.dot(alpha) - log_det -
           0.5 * static_cast<double>(n) * std::log(2.0 * 3.14159265358979323846);
}

/// Bounded Nelder-Mead in log10 hyperparameter space; deterministic.
inline GPHyper maximize_likelihood(const std::vector<Observation>& obs) {
    const double lo[3] = {std::log10(0.05), std::log10(1e-6), std::log10(1e-8)};
    const double hi[3] = {std::log10(5.0), std::log10(4.0), std::log10(1.0)};

    auto clampv = [&](Eigen::Vector3d v) {
        for (int i = 0; i < 3; ++i) v[i] = std::clamp(v[i], lo[i], hi[i]);
        return v;
    };
    auto objective = [&](const Eigen::Vector3d& v) {
        GPHyper h;
        h.length_scale = std::pow(10.0, v[0]);
        h.signal_var = std::pow(10.0, v[1]);
        h.noise_var = std::pow(10.0, v[2]);
        try {
            return -log_marginal_likelihood(obs, h);
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    std::vector<Eigen::Vector3d> starts;
    for (int corner = 0; corner < 8; ++corner) {
        Eigen::Vector3d s;
        for (int i = 0; i < 3; ++i) {
            const double t = (corner >> i) & 1 ? 0.75 : 0.25;
            s[i] = lo[i] + t * (hi[i] - lo[i]);
        }
        starts.push_back(s);
    }
    starts.push_back(Eigen::Vector3d{std::log10(0.5), std::log10(0.25), std::log10(1e-4)});

    Eigen::Vector3d best_x = starts.front();
    double best_f = std::numeric_limits<double>::infinity();
    for (const auto& start : starts) {
        // Nelder-Mead simplex around the start point.
        std::vector<Eigen::Vector3d> simplex{start};
        for (int i = 0; i < 3; ++i) {
            Eigen::Vector3d v = start;
            v[i] += 0.25;
            simplex.push_back(clampv(v));
        }
        std::vector<double> fvals(4);
        for (int i = 0; i < 4; ++i) fvals[static_cast<std::size_t>(i)] = objective(simplex[static_cast<std::size_t>(i)]);
        for (int iter = 0; iter < 120; ++iter) {
            std::vector<std::size_t> order{0, 1, 2, 3};
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return fvals[a] < fvals[b]; });
            std::vector<Eigen::Vector3d> sx(4);
            std::vector<double> sf(4);
            for (int i = 0; i < 4; ++i) {
                sx[static_cast<std::size_t>(i)] = simplex[order[static_cast<std::size_t>(i)]];
                sf[static_cast<std::size_t>(i)] = fvals[order[static_cast<std::size_t>(i)]];
            }
            simplex = sx;
            fvals = sf;
            if (std::abs(fvals[3] - fvals[0]) < 1e-10) break;
            const Eigen::Vector3d centroid = (simplex[0] + simplex[1] + simplex[2]) / 3.0;
            const Eigen::Vector3d reflected = clampv(centroid + (centroid - simplex[3]));
            const double fr = objective(reflected);
            if (fr < fvals[0]) {
                const Eigen::Vector3d expanded = clampv(centroid + 2.0 * (centroid - simplex[3]));
                const double fe = objective(expanded);
                if (fe < fr) {
                    simplex[3] = expanded;
                    fvals[3] = fe;
                } else {
                    simplex[3] = reflected;
                    fvals[3] = fr;
                }
            } else if (fr < fvals[2]) {
                simplex[3] = reflected;
                fvals[3] = fr;
            } else {
                const Eigen::Vector3d contracted = clampv(centroid + 0.5 * (simplex[3] - centroid));
                const double fc = objective(contracted);
                if (fc < fvals[3]) {
                    simplex[3] = contracted;
                    fvals[3] = fc;
                } else {
                    for (int i = 1; i < 4; ++i) {
                        simplex[static_cast<std::size_t>(i)] = clampv(
                            simplex[0] + 0.5 * (simplex[static_cast<std::size_t>(i)] - simplex[0]));
                        fvals[static_cast<std::size_t>(i)] =
                            objective(simplex[static_cast<std::size_t>(i)]);
                    }
                }
            }
        }
        for (int i = 0; i < 4; ++i) {
            if (fvals[static_cast<std::size_t>(i)] < best_f) {
                best_f = fvals[static_cast<std::size_t>(i)];
                best_x = simplex[static_cast<std::size_t>(i)];
            }
        }
    }
    GPHyper h;
    h.length_scale = std::pow(10.0, best_x[0]);
    h.signal_var = std::pow(10.0, best_x[1]);
    h.noise_var = std::pow(10.0, best_x[2]);
    return h;
}

} // namespace detail

inline GPState gp_fit(const std::vector<Observation>& obs, const HyperMode& mode) {
    if (obs.empty()) throw ArgumentError("gp_fit: needs at least one observation");
    GPState gp;
    gp.obs = obs;
    gp.hyper = mode.kind == HyperMode::Kind::fixed ? mode.fixed_hyper
                                                   : detail::maximize_likelihood(obs);

    double mean = 0.0;
    for (const auto& o : obs) mean += o.y;
    gp.prior_mean = mean / static_cast<double>(obs.size());

    const auto n = static_cast<Eigen::Index>(obs.size());
    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double k = sq_exp_kernel(obs[static_cast<std::size_t>(i)].x,
                                           obs[static_cast<std::size_t>(j)].x, gp.hyper);
            gram(i, j) = k;
            gram(j, i) = k;
        }
    }
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = obs[static_cast<std::size_t>(i)].y - gp.prior_mean;
    auto [lower, jitter] = detail::robust_cholesky(gram, gp.hyper.noise_var);
    gp.chol_lower = std::move(lower);
    gp.jitter_added = jitter;
    gp.alpha = gp.chol_lower.transpose().triangularView<Eigen::Upper>().solve(
        gp.chol_lower.triangularView<Eigen::Lower>().solve(y));
    return gp;
}

struct Posterior {
    double mean = 0.0;
    double variance = 0.0;  // latent variance, clipped to >= 0

    [[nodiscard]] double stddev() const { return std::sqrt(std::max(variance, 0.0)); }
};

inline Posterior gp_posterior(const GPState& gp, const EncodedPoint& x) {
    const auto n = static_cast<Eigen::Index>(gp.obs.size());
    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k_star[i] = sq_exp_kernel(gp.obs[static_cast<std::size_t>(i)].x, x, gp.hyper);
    }
    Posterior post;
    post.mean = gp.prior_mean + k_star.dot(gp.alpha);
    const Eigen::VectorXd v = gp.chol_lower.triangularView<Eigen::Lower>().solve(k_star);
    post.variance = std::max(gp.hyper.signal_var - v.squaredNorm(), 0.0);
    return post;
}

/// EI = (mu - best - xi) Phi(z) + s phi(z) with z = (mu - best - xi)/s;
/// collapses to max(mu - best - xi, 0) at zero posterior spread.
inline double expected_improvement(const GPState& gp, const EncodedPoint& x, double best_so_far,
                                   double xi) {
    const Posterior post = gp_posterior(gp, x);
    const double improvement = post.mean - best_so_far - xi;
    const double s = post.stddev();
    if (s == 0.0) return std::max(improvement, 0.0);
    const double z = improvement / s;
    return improvement * normal_cdf(z) + s * normal_pdf(z);
}

// ---------------------------------------------------------------------------
// Ask/tell campaign
// ---------------------------------------------------------------------------

struct HistoryEntry {
    RawConfig config;
    double usability = 0.0;
    std::string timestamp;
    std::string note;
};

struct CampaignState {
    SearchSpace space;
    std::vector<HistoryEntry> history;
    HyperMode hyper_mode;
    std::optional<RawConfig> pending;
    std::uint64_t seed = 0;
    std::size_t n_init = 1;
    double xi_fraction = 0.01;  // EI margin as a fraction of the observed range

    [[nodiscard]] std::set<std::size_t> observed_indices() const {
        std::set<std::size_t> idx;
        for (const auto& entry : history) idx.insert(space.rank(space.multi_of(entry.config)));
        return idx;
    }

    [[nodiscard]] const HistoryEntry* best_entry() const {
        const HistoryEntry* best = nullptr;
        for (const auto& entry : history) {
            if (!best || entry.usability > best->usability) best = &entry;
        }
        return best;
    }
};

inline GPState fit_campaign_gp(const CampaignState& state) {
    std::vector<Observation> obs;
    obs.reserve(state.history.size());
    for (const auto& entry : state.history) {
        obs.push_back(Observation{encode(state.space, entry.config), entry.usability});
    }
    return gp_fit(obs, state.hyper_mode);
}

/// Next configuration to try. Before n_init observations this is a seeded
/// quasi-random unobserved point; afterwards the unobserved grid point with
/// maximal expected improvement (exhaustive scan, ties to the smallest
/// encoded lexicographic order). The suggestion is stored as pending, so
/// repeated calls without tell return the same point.
inline RawConfig suggest(CampaignState& state) {
    state.space.validate();
    if (state.pending) return *state.pending;

    const std::size_t grid = state.space.grid_size();
    const auto observed = state.observed_indices();
    if (observed.size() >= grid) {
        throw DomainError("search space exhausted: all " + std::to_string(grid) +
                          " configurations observed");
    }

    std::size_t chosen = grid;
    if (state.history.size() < state.n_init) {
        std::size_t idx = splitmix64(state.seed ^ splitmix64(state.history.size() + 1)) % grid;
        while (observed.count(idx) > 0) idx = (idx + 1) % grid;
        chosen = idx;
    } else {
        const GPState gp = fit_campaign_gp(state);
        double y_min = std::numeric_limits<double>::infinity();
        double y_max = -std::numeric_limits<double>::infinity();
        for (const auto& entry : state.history) {
            y_min = std::min(y_min, entry.usability);
            y_max = std::max(y_max, entry.usability);
        }
        const double xi = state.xi_fraction * (y_max - y_min);
        double best_ei = -std::numeric_limits<double>::infinity();
        for (std::size_t idx = 0; idx < grid; ++idx) {
            if (observed.count(idx) > 0) continue;
            const EncodedPoint x = state.space.encode_multi(state.space.unrank(idx));
            const double ei = expected_improvement(gp, x, y_max, xi);
            if (ei > best_ei) {
                best_ei = ei;
                chosen = idx;
            }
        }
    }
    RawConfig cfg = state.space.config_at(chosen);
    state.pending = cfg;
    return cfg;
}

/// Records a measurement. Off-grid configurations are rejected; duplicates
/// of an already-told configuration are appended with a warning note
/// (replicate measurements are data too). Clears a matching pending
/// suggestion.
inline void tell(CampaignState& state, const RawConfig& config, double value,
                 std::string note = "") {
    if (!std::isfinite(value)) throw ArgumentError("tell: objective value must be finite");
    const std::size_t idx = state.space.rank(state.space.multi_of(config));
    for (const auto& entry : state.history) {
        if (state.space.rank(state.space.multi_of(entry.config)) == idx) {
            if (!note.empty()) note += "; ";
            note += "duplicate of an earlier configuration (kept as a replicate)";
            break;
        }
    }
    HistoryEntry entry;
    entry.config = config;
    entry.usability = value;
    entry.timestamp = utc_timestamp();
    entry.note = std::move(note);
    state.history.push_back(std::move(entry));
    if (state.pending && state.space.rank(state.space.multi_of(*state.pending)) == idx) {
        state.pending.reset();
    }
}

// ---------------------------------------------------------------------------
// JSON forms
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Dimension& d) {
    j = nlohmann::json{{"name", d.name}};
    if (d.kind == Dimension::Kind::categorical) {
        j["kind"] = "categorical";
        j["levels"] = d.levels;
    } else {
        j["kind"] = "numeric";
        j["values"] = d.values;
        if (!d.unit.empty()) j["unit"] = d.unit;
    }
}

inline void from_json(const nlohmann::json& j, Dimension& d) {
    j.at("name").get_to(d.name);
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "categorical") {
        d.kind = Dimension::Kind::categorical;
        j.at("levels").get_to(d.levels);
    } else if (kind == "numeric") {
        d.kind = Dimension::Kind::numeric;
        j.at("values").get_to(d.values);
        if (j.contains("unit")) j.at("unit").get_to(d.unit);
    } else {
        throw FormatError("unknown dimension kind '" + kind + "'");
    }
}

inline void to_json(nlohmann::json& j, const SearchSpace& s) {
    j = nlohmann::json{{"dimensions", s.dims}};
}

inline void from_json(const nlohmann::json& j, SearchSpace& s) {
    j.at("dimensions").get_to(s.dims);
    s.validate();
}

inline nlohmann::json config_to_json(const SearchSpace& space, const RawConfig& cfg) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        if (std::holds_alternative<std::string>(cfg[d])) {
            j[space.dims[d].name] = std::get<std::string>(cfg[d]);
        } else {
            j[space.dims[d].name] = std::get<double>(cfg[d]);
        }
    }
    return j;
}

inline RawConfig config_from_json(const SearchSpace& space, const nlohmann::json& j) {
    RawConfig cfg(space.dims.size());
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        const Dimension& dim = space.dims[d];
        if (!j.contains(dim.name)) {
            throw FormatError("configuration is missing dimension '" + dim.name + "'");
        }
        const auto& v = j.at(dim.name);
        if (dim.kind == Dimension::Kind::categorical) cfg[d] = v.get<std::string>();
        else cfg[d] = v.get<double>();
    }
    return cfg;
}

inline nlohmann::json campaign_to_json(const CampaignState& state) {
    nlohmann::json j;
    j["format"] = 1;
    j["seed"] = state.seed;
    j["n_init"] = state.n_init;
    j["xi_fraction"] = state.xi_fraction;
    j["space"] = state.space;
    if (state.hyper_mode.kind == HyperMode::Kind::mle) {
        j["gp"] = {{"mode", "mle"}};
    } else {
        j["gp"] = {{"mode", "fixed"},
                   {"length_scale", state.hyper_mode.fixed_hyper.length_scale},
                   {"signal_var", state.hyper_mode.fixed_hyper.signal_var},
                   {"noise_var", state.hyper_mode.fixed_hyper.noise_var}};
    }
    j["history"] = nlohmann::json::array();
    for (const auto& entry : state.history) {
        j["history"].push_back({{"config", config_to_json(state.space, entry.config)},
                                {"usability", entry.usability},
                                {"timestamp", entry.timestamp},
                                {"note", entry.note}});
    }
    j["pending"] =
        state.pending ? config_to_json(state.space, *state.pending) : nlohmann::json(nullptr);
    return j;
}

inline CampaignState campaign_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format").get<int>() != 1) {
        throw FormatError("campaign file: unsupported or missing format version");
    }
    CampaignState state;
    j.at("seed").get_to(state.seed);
    j.at("n_init").get_to(state.n_init);
    j.at("xi_fraction").get_to(state.xi_fraction);
    j.at("space").get_to(state.space);
    const auto& gp = j.at("gp");
    if (gp.at("mode").get<std::string>() == "mle") {
        state.hyper_mode = HyperMode::mle();
    } else {
        GPHyper h;
        gp.at("length_scale").get_to(h.length_scale);
        gp.at("signal_var").get_to(h.signal_var);
        gp.at("noise_var").get_to(h.noise_var);
        state.hyper_mode = HyperMode::fixed(h);
    }
    for (const auto& ej : j.at("history")) {
        HistoryEntry entry;
        entry.config = config_from_json(state.space, ej.at("config"));
        ej.at("usability").get_to(entry.usability);
        ej.at("timestamp").get_to(entry.timestamp);
        ej.at("note").get_to(entry.note);
        state.history.push_back(std::move(entry));
    }
    if (!j.at("pending").is_null()) {
        state.pending = config_from_json(state.space, j.at("pending"));
    }
    return state;
}

inline void save_campaign(const std::filesystem::path& path, const CampaignState& state) {
    atomic_write_file(path, campaign_to_json(state).dump(2) + "\n");
}

inline CampaignState load_campaign(const std::filesystem::path& path) {
    return campaign_from_json(nlohmann::json::parse(read_file(path)));
}

// ---------------------------------------------------------------------------
// Noise-spec search
// ---------------------------------------------------------------------------

struct AlphaTracePoint {
    MultinomialNoiseSpec alpha;
    double score = 0.0;
    std::size_t grid_index = 0;
};

struct AlphaSearchResult {
    MultinomialNoiseSpec best;
    double best_score = 0.0;
    std::vector<AlphaTracePoint> trace;  // in evaluation order
};

inline std::vector<MultinomialNoiseSpec> make_alpha_grid(const std::vector<double>& p1_values,
                                                         const std::vector<double>& p2_values) {
    std::vector<MultinomialNoiseSpec> grid;
    for (double p1 : p1_values) {
        for (double p2 : p2_values) {
            if (p1 < 0.0 || p2 < 0.0 || p1 + p2 > 1.0) continue;
            grid.push_back(MultinomialNoiseSpec{p1, p2});
        }
    }
    return grid;
}

inline std::vector<NonIdealityProfile> default_alpha_profiles() {
    return {synthesize_profile(1.0), synthesize_profile(0.7), synthesize_profile(0.5),
            synthesize_profile(0.3)};
}

/// GP+EI search over a finite (p1, p2) grid. A candidate's score is the
/// profile-averaged robust accuracy of a network trained with that noise
/// spec; scores are seeded by grid index, so exhaustive and BO-driven
/// visits agree.
inline AlphaSearchResult optimize_alpha(const DenseNetwork& net_template, const Dataset& data,
                                        const std::vector<MultinomialNoiseSpec>& alpha_grid,
                                        std::size_t budget,
                                        const std::vector<NonIdealityProfile>& profiles,
                                        int trials, TrainHyper hyper, std::uint64_t seed) {
    if (alpha_grid.empty()) throw ArgumentError("optimize_alpha: empty alpha grid");
    for (const auto& a : alpha_grid) a.validate();
    if (budget < 2) throw ArgumentError("optimize_alpha: budget must be >= 2");
    if (profiles.empty()) throw ArgumentError("optimize_alpha: needs at least one profile");

    auto evaluate = [&](std::size_t index) {
        TrainHyper h = hyper;
        h.seed = derive_seed(seed, index, 0);
        const TrainResult trained =
            train(net_template, data, TrainMethod::bayesmulti(alpha_grid[index]), h);
        double sum = 0.0;
        for (std::size_t p = 0; p < profiles.size(); ++p) {
            sum += evaluate_under_profile(trained.net, profiles[p], data, trials,
                                          derive_seed(seed, index, 1 + p))
                       .first;
        }
        return sum / static_cast<double>(profiles.size());
    };

    AlphaSearchResult result;
    std::set<std::size_t> visited;
    const std::size_t max_evals = std::min(budget, alpha_grid.size());

    auto record = [&](std::size_t index) {
        const double score = evaluate(index);
        result.trace.push_back(AlphaTracePoint{alpha_grid[index], score, index});
        visited.insert(index);
    };

    record(splitmix64(seed) % alpha_grid.size());
    while (visited.size() < max_evals) {
        std::vector<Observation> obs;
        obs.reserve(result.trace.size());
        double y_min = std::numeric_limits<double>::infinity();
        double y_max = -std::numeric_limits<double>::infinity();
        for (const auto& t : result.trace) {
            Eigen::Vector2d x(t.alpha.p1, t.alpha.p2);
            obs.push_back(Observation{x, t.score});
            y_min = std::min(y_min, t.score);
            y_max = std::max(y_max, t.score);
        }
        const GPState gp = gp_fit(obs, HyperMode::mle());
        const double xi = 0.01 * (y_max - y_min);
        double best_ei = -std::numeric_limits<double>::infinity();
        std::size_t chosen = alpha_grid.size();
        for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
            if (visited.count(i) > 0) continue;
            Eigen::Vector2d x(alpha_grid[i].p1, alpha_grid[i].p2);
            const double ei = expected_improvement(gp, x, y_max, xi);
            if (ei > best_ei) {
                best_ei = ei;
                chosen = i;
            }
        }
        record(chosen);
    }

    const AlphaTracePoint* best = nullptr;
    for (const auto& t : result.trace) {
        if (!best || t.score > best->score ||
            (t.score == best->score && t.grid_index < best->grid_index)) {
            best = &t;
        }
    }
    result.best = best->alpha;
    result.best_score = best->score;
    return result;
}

} // namespace memrobust
