#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "memrobust/errors.hpp"
#include "memrobust/fsio.hpp"
#include "memrobust/rng.hpp"

namespace memrobust {

enum class Activation { relu, identity, softmax };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    if (s == "softmax") return Activation::softmax;
    throw ArgumentError("unknown activation '" + s + "'");
}

/// Multiplicative mask distribution: factor 0 with probability p1,
/// 0.5 with probability p2, 1 with the remainder.
struct MultinomialNoiseSpec {
    double p1 = 0.0;
    double p2 = 0.0;

    void validate() const {
        if (p1 < 0.0 || p2 < 0.0) throw ArgumentError("noise spec: probabilities must be >= 0");
        if (p1 + p2 > 1.0) {
            throw ArgumentError("noise spec: p1 + p2 = " + std::to_string(p1 + p2) +
                                " exceeds 1");
        }
    }

    [[nodiscard]] bool is_null() const { return p1 == 0.0 && p2 == 0.0; }
    [[nodiscard]] double mean_factor() const { return 1.0 - p1 - 0.5 * p2; }
};

struct Layer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
    Activation activation = Activation::identity;
    std::optional<MultinomialNoiseSpec> noise;  // noise-injection site
};

struct DenseNetwork {
    std::vector<Layer> layers;

    [[nodiscard]] Eigen::Index input_dim() const { return layers.front().weights.cols(); }
    [[nodiscard]] Eigen::Index output_dim() const { return layers.back().weights.rows(); }

    void validate() const {
        if (layers.empty()) throw ArgumentError("network has no layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const Layer& layer = layers[l];
            if (layer.weights.rows() != layer.bias.size()) {
                throw ArgumentError("layer " + std::to_string(l) + ": bias size mismatch");
            }
            if (l > 0 && layers[l - 1].weights.rows() != layer.weights.cols()) {
                throw ArgumentError("layer " + std::to_string(l) + ": dimension chain broken");
            }
            if (layer.activation == Activation::softmax && l + 1 != layers.size()) {
                throw ArgumentError("softmax is only allowed on the final layer");
            }
            if (l + 1 == layers.size() && layer.noise.has_value()) {
                throw ArgumentError("the final layer cannot be a noise site");
            }
            if (layer.noise) layer.noise->validate();
        }
    }
};

/// Layers whose weights live behind noise injection. Explicitly marked
/// sites win; a network without marks defaults to every layer except the
/// final output layer.
inline std::vector<std::size_t> noise_site_layers(const DenseNetwork& net) {
    std::vector<std::size_t> sites;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (net.layers[l].noise.has_value()) sites.push_back(l);
    }
    if (sites.empty()) {
        for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) sites.push_back(l);
    }
    return sites;
}

/// Number of weight coordinates covered by noise sites (biases excluded).
inline std::size_t masked_weight_count(const DenseNetwork& net) {
    std::size_t count = 0;
    for (std::size_t l : noise_site_layers(net)) {
        count += static_cast<std::size_t>(net.layers[l].weights.size());
    }
    return count;
}

/// Multiplies the noise-site weights elementwise by `factors`, ordered by
/// site layer then column-major within a layer. Used for both mask
/// enumeration and perturbation application.
inline DenseNetwork apply_weight_factors(const DenseNetwork& net,
                                         const std::vector<double>& factors) {
    DenseNetwork out = net;
    const auto sites = noise_site_layers(net);
    std::size_t pos = 0;
    for (std::size_t l : sites) {
        Eigen::MatrixXd& w = out.layers[l].weights;
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            if (pos >= factors.size()) throw ArgumentError("factor vector too short");
            w.data()[i] *= factors[pos++];
        }
    }
    if (pos != factors.size()) throw ArgumentError("factor vector too long");
    return out;
}

/// I.i.d. mask of factors {0, 0.5, 1}; deterministic for a fixed generator
/// state.
inline Eigen::MatrixXd sample_noise_mask(const MultinomialNoiseSpec& spec, Eigen::Index rows,
                                         Eigen::Index cols, Rng& rng) {
    spec.validate();
    Eigen::MatrixXd mask(rows, cols);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double u = unif(rng);
            mask(i, j) = u < spec.p1 ? 0.0 : (u < spec.p1 + spec.p2 ? 0.5 : 1.0);
        }
    }
    return mask;
}

inline Eigen::MatrixXd sample_noise_mask(const MultinomialNoiseSpec& spec, Eigen::Index rows,
                                         Eigen::Index cols, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return sample_noise_mask(spec, rows, cols, rng);
}

/// Per-layer masks; disengaged entries leave the layer untouched.
using MaskSet = std::vector<std::optional<Eigen::MatrixXd>>;

/// Fresh masks for every layer that carries a noise spec.
inline MaskSet sample_masks(const DenseNetwork& net, Rng& rng) {
    MaskSet masks(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        if (layer.noise && !layer.noise->is_null()) {
            masks[l] = sample_noise_mask(*layer.noise, layer.weights.rows(),
                                         layer.weights.cols(), rng);
        }
    }
    return masks;
}

namespace detail {

inline void softmax_inplace(Eigen::MatrixXd& z) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        Eigen::VectorXd col = z.col(j);
        const double m = col.maxCoeff();
        col = (col.array() - m).exp();
        z.col(j) = col / col.sum();
    }
}

inline Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation act) {
    switch (act) {
        case Activation::relu: return z.cwiseMax(0.0);
        case Activation::identity: return z;
        case Activation::softmax: {
            Eigen::MatrixXd out = z;
            softmax_inplace(out);
            return out;
        }
    }
    return z;
}

} // namespace detail

/// Batched forward pass; samples are columns of `x`. `masks` (when given)
/// multiply the corresponding layers' weights elementwise.
inline Eigen::MatrixXd forward_batch(const DenseNetwork& net, const Eigen::MatrixXd& x,
                                     const MaskSet* masks = nullptr) {
    if (x.rows() != net.input_dim()) {
        throw ArgumentError("forward: input dimension " + std::to_string(x.rows()) +
                            " does not match network input " +
                            std::to_string(net.input_dim()));
    }
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        Eigen::MatrixXd z;
        if (masks && l < masks->size() && (*masks)[l]) {
            z = (layer.weights.cwiseProduct(*(*masks)[l])) * a;
        } else {
            z = layer.weights * a;
        }
        z.colwise() += layer.bias;
        a = detail::activate(z, layer.activation);
    }
    return a;
}

enum class ForwardMode { clean, noisy };

/// Single-input forward pass. In noisy mode every noise-site layer gets a
/// fresh mask drawn from `seed`.
inline Eigen::VectorXd forward(const DenseNetwork& net, const Eigen::VectorXd& x,
                               ForwardMode mode = ForwardMode::clean, std::uint64_t seed = 0) {
    if (mode == ForwardMode::clean) return forward_batch(net, x);
    Rng rng = make_rng(seed);
    MaskSet masks = sample_masks(net, rng);
    return forward_batch(net, x, &masks);
}

enum class Split { train, val, test };

struct Dataset {
    Eigen::MatrixXd inputs;    // n x d, row per sample
    std::vector<int> labels;   // values in [0, n_classes)
    std::vector<Split> split;  // disjoint and exhaustive
    int n_classes = 2;

    [[nodiscard]] std::vector<std::size_t> indices_of(Split s) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < split.size(); ++i) {
            if (split[i] == s) idx.push_back(i);
        }
        return idx;
    }

    /// Samples of one split as columns.
    [[nodiscard]] Eigen::MatrixXd columns_of(Split s) const {
        const auto idx = indices_of(s);
        Eigen::MatrixXd x(inputs.cols(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            x.col(static_cast<Eigen::Index>(k)) =
                inputs.row(static_cast<Eigen::Index>(idx[k])).transpose();
        }
        return x;
    }

    [[nodiscard]] std::vector<int> labels_of(Split s) const {
        std::vector<int> y;
        for (std::size_t i = 0; i < split.size(); ++i) {
            if (split[i] == s) y.push_back(labels[i]);
        }
        return y;
    }
};

/// Fraction of correctly argmax-classified samples in one split, under the
/// clean forward pass.
inline double accuracy(const DenseNetwork& net, const Dataset& data, Split s) {
    const Eigen::MatrixXd x = data.columns_of(s);
    const std::vector<int> y = data.labels_of(s);
    if (y.empty()) throw ArgumentError("accuracy: empty split");
    const Eigen::MatrixXd probs = forward_batch(net, x);
    std::size_t correct = 0;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        Eigen::Index arg = 0;
        probs.col(j).maxCoeff(&arg);
        if (static_cast<int>(arg) == y[static_cast<std::size_t>(j)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(y.size());
}

/// Two interleaved unit half-circles: class 0 is the downward arc centered
/// at the origin, class 1 the upward arc centered at (1, -0.5). Isotropic
/// Gaussian jitter of `noise_std`, then a seeded 70/15/15 split.
inline Dataset make_moons(std::size_t n, double noise_std, std::uint64_t seed) {
    if (n < 4) throw ArgumentError("make_moons: n must be >= 4");
    const std::size_t n0 = (n + 1) / 2;
    const std::size_t n1 = n - n0;

    Dataset data;
    data.inputs.resize(static_cast<Eigen::Index>(n), 2);
    data.labels.resize(n);
    data.n_classes = 2;

    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double pi = 3.14159265358979323846;

    auto emit = [&](std::size_t row, double bx, double by, int label) {
        double x = bx, y = by;
        if (noise_std > 0.0) {
            x += noise_std * gauss(rng);
            y += noise_std * gauss(rng);
        }
        data.inputs(static_cast<Eigen::Index>(row), 0) = x;
        data.inputs(static_cast<Eigen::Index>(row), 1) = y;
        data.labels[row] = label;
    };

    for (std::size_t k = 0; k < n0; ++k) {
        const double t = n0 > 1 ? pi * static_cast<double>(k) / static_cast<double>(n0 - 1) : 0.0;
        emit(k, std::cos(t), -std::sin(t), 0);
    }
    for (std::size_t k = 0; k < n1; ++k) {
        const double t = n1 > 1 ? pi * static_cast<double>(k) / static_cast<double>(n1 - 1) : 0.0;
        emit(n0 + k, 1.0 - std::cos(t), -0.5 + std::sin(t), 1);
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);

    data.split.assign(n, Split::test);
    const std::size_t n_train = static_cast<std::size_t>(0.7 * static_cast<double>(n));
    const std::size_t n_val = static_cast<std::size_t>(0.15 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train) data.split[order[i]] = Split::train;
        else if (i < n_train + n_val) data.split[order[i]] = Split::val;
    }
    return data;
}

struct Gradients {
    std::vector<Eigen::MatrixXd> d_weights;
    std::vector<Eigen::VectorXd> d_bias;
};

/// Mean cross-entropy over the batch plus analytic gradients. Masks are
/// treated as constants: the gradient w.r.t. a masked weight is the mask
/// times the gradient w.r.t. the effective weight.
inline double loss_and_gradients(const DenseNetwork& net, const Eigen::MatrixXd& x,
                                 const std::vector<int>& labels, const MaskSet* masks,
                                 Gradients& grads) {
    const std::size_t n_layers = net.layers.size();
    if (net.layers.back().activation != Activation::softmax) {
        throw ArgumentError("training requires a softmax output layer");
    }
    const auto batch = static_cast<double>(x.cols());

    std::vector<Eigen::MatrixXd> activations(n_layers + 1);
    std::vector<Eigen::MatrixXd> pre(n_layers);
    std::vector<Eigen::MatrixXd> effective(n_layers);
    activations[0] = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const Layer& layer = net.layers[l];
        if (masks && l < masks->size() && (*masks)[l]) {
            effective[l] = layer.weights.cwiseProduct(*(*masks)[l]);
        } else {
            effective[l] = layer.weights;
        }
        Eigen::MatrixXd z = effective[l] * activations[l];
        z.colwise() += layer.bias;
        pre[l] = z;
        activations[l + 1] = detail::activate(z, layer.activation);
    }

    const Eigen::MatrixXd& probs = activations[n_layers];
    double loss = 0.0;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        const double p = probs(labels[static_cast<std::size_t>(j)], j);
        loss -= std::log(std::max(p, 1e-300));
    }
    loss /= batch;

    grads.d_weights.resize(n_layers);
    grads.d_bias.resize(n_layers);

    // Softmax + cross-entropy: delta = (p - onehot) / batch.
    Eigen::MatrixXd delta = probs;
    for (Eigen::Index j = 0; j < delta.cols(); ++j) {
        delta(labels[static_cast<std::size_t>(j)], j) -= 1.0;
    }
    delta /= batch;

    for (std::size_t l = n_layers; l-- > 0;) {
        Eigen::MatrixXd dw_eff = delta * activations[l].transpose();
        if (masks && l < masks->size() && (*masks)[l]) {
            grads.d_weights[l] = dw_eff.cwiseProduct(*(*masks)[l]);
        } else {
            grads.d_weights[l] = std::move(dw_eff);
        }
        grads.d_bias[l] = delta.rowwise().sum();
        if (l > 0) {
            delta = effective[l].transpose() * delta;
            if (net.layers[l - 1].activation == Activation::relu) {
                delta = delta.cwiseProduct(
                    (pre[l - 1].array() > 0.0).cast<double>().matrix());
            }
        }
    }
    return loss;
}

struct TrainMethod {
    enum class Kind { erm, bayesmulti };
    Kind kind = Kind::erm;
    MultinomialNoiseSpec spec;  // used by bayesmulti

    static TrainMethod erm() { return {}; }
    static TrainMethod bayesmulti(MultinomialNoiseSpec s) {
        TrainMethod m;
        m.kind = Kind::bayesmulti;
        m.spec = s;
        return m;
    }

    [[nodiscard]] const char* name() const {
        return kind == Kind::erm ? "erm" : "bayesmulti";
    }
};

struct TrainHyper {
    double lr = 0.1;
    int epochs = 500;
    int batch = 32;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    DenseNetwork net;
    std::vector<EpochStats> history;
};

/// Layer spec helper: builds a fresh network with seeded He/Glorot-style
/// initialization. `dims` = {in, hidden..., out}; hidden layers are relu,
/// the final layer softmax.
inline DenseNetwork make_dense_network(const std::vector<Eigen::Index>& dims,
                                       std::uint64_t seed) {
    if (dims.size() < 2) throw ArgumentError("network needs at least input and output dims");
    DenseNetwork net;
    Rng rng = make_rng(derive_seed(seed, 0));  // init stream
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        const Eigen::Index fan_in = dims[l], fan_out = dims[l + 1];
        const bool last = l + 2 == dims.size();
        const double scale = last ? std::sqrt(1.0 / static_cast<double>(fan_in))
                                  : std::sqrt(2.0 / static_cast<double>(fan_in));
        layer.weights.resize(fan_out, fan_in);
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            layer.weights.data()[i] = scale * gauss(rng);
        }
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layer.activation = last ? Activation::softmax : Activation::relu;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

/// Mini-batch SGD on cross-entropy. BayesMulti resamples masks once per
/// batch; the mask stream is separate from the shuffle stream, so
/// bayesmulti with p1=p2=0 follows the exact ERM trajectory for equal
/// seeds.
inline TrainResult train(const DenseNetwork& initial, const Dataset& data, TrainMethod method,
                         TrainHyper hyper) {
    initial.validate();
    if (data.labels.empty()) throw ArgumentError("train: dataset is empty");
    if (hyper.epochs < 1 || hyper.batch < 1 || !(hyper.lr > 0.0)) {
        throw ArgumentError("train: invalid hyperparameters");
    }
    method.spec.validate();

    TrainResult result;
    result.net = initial;
    if (method.kind == TrainMethod::Kind::bayesmulti) {
        for (std::size_t l = 0; l + 1 < result.net.layers.size(); ++l) {
            result.net.layers[l].noise = method.spec;
        }
    }

    const auto train_idx = data.indices_of(Split::train);
    if (train_idx.empty()) throw ArgumentError("train: no training split");
    const bool has_val = !data.indices_of(Split::val).empty();

    Rng shuffle_rng = make_rng(derive_seed(hyper.seed, 1));
    Rng mask_rng = make_rng(derive_seed(hyper.seed, 2));

    std::vector<std::size_t> order = train_idx;
    const auto n_train = order.size();
    const auto d = data.inputs.cols();

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t pos = 0; pos < n_train; pos += static_cast<std::size_t>(hyper.batch)) {
            const std::size_t b = std::min<std::size_t>(hyper.batch, n_train - pos);
            Eigen::MatrixXd x(d, static_cast<Eigen::Index>(b));
            std::vector<int> y(b);
            for (std::size_t k = 0; k < b; ++k) {
                x.col(static_cast<Eigen::Index>(k)) =
                    data.inputs.row(static_cast<Eigen::Index>(order[pos + k])).transpose();
                y[k] = data.labels[order[pos + k]];
            }
            MaskSet masks;
            const MaskSet* mask_ptr = nullptr;
            if (method.kind == TrainMethod::Kind::bayesmulti) {
                masks = sample_masks(result.net, mask_rng);
                mask_ptr = &masks;
            }
            Gradients grads;
            const double loss = loss_and_gradients(result.net, x, y, mask_ptr, grads);
            epoch_loss += loss * static_cast<double>(b);
            for (std::size_t l = 0; l < result.net.layers.size(); ++l) {
                result.net.layers[l].weights -= hyper.lr * grads.d_weights[l];
                result.net.layers[l].bias -= hyper.lr * grads.d_bias[l];
            }
        }
        epoch_loss /= static_cast<double>(n_train);
        if (!std::isfinite(epoch_loss)) {
            throw TrainingError("training diverged (non-finite loss) at epoch " +
                                std::to_string(epoch));
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss;
        stats.val_accuracy = has_val ? accuracy(result.net, data, Split::val) : 0.0;
        result.history.push_back(stats);
    }
    return result;
}

struct SmoothedPrediction {
    Eigen::VectorXd mean;       // Monte-Carlo mean class probabilities
    Eigen::VectorXd std_error;  // per-class standard error of the mean
    std::size_t n_samples = 0;
};

/// Monte-Carlo estimate of the noise-smoothed classifier: the mean output
/// over forward passes with `spec` applied at every noise site.
inline SmoothedPrediction smoothed_predict(const DenseNetwork& net, const Eigen::VectorXd& x,
                                           const MultinomialNoiseSpec& spec,
                                           std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw ArgumentError("smoothed_predict: n_samples must be >= 1");
    spec.validate();
    const auto sites = noise_site_layers(net);

    Rng rng = make_rng(seed);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(net.output_dim());
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(net.output_dim());
    for (std::size_t s = 0; s < n_samples; ++s) {
        MaskSet masks(net.layers.size());
        for (std::size_t l : sites) {
            masks[l] = sample_noise_mask(spec, net.layers[l].weights.rows(),
                                         net.layers[l].weights.cols(), rng);
        }
        const Eigen::VectorXd out = forward_batch(net, x, &masks);
        sum += out;
        sum_sq += out.cwiseProduct(out);
    }
    SmoothedPrediction pred;
    pred.n_samples = n_samples;
    const auto n = static_cast<double>(n_samples);
    pred.mean = sum / n;
    if (n_samples > 1) {
        Eigen::VectorXd var = (sum_sq - sum.cwiseProduct(sum) / n) / (n - 1.0);
        pred.std_error = (var.cwiseMax(0.0) / n).cwiseSqrt();
    } else {
        pred.std_error = Eigen::VectorXd::Zero(net.output_dim());
    }
    return pred;
}

// ---------------------------------------------------------------------------
// Model file format (format: 1): layer dimensions, row-major weights,
// biases, activations, noise specs.
// ---------------------------------------------------------------------------

inline nlohmann::json network_to_json(const DenseNetwork& net, const std::string& method = "",
                                      const nlohmann::json& metadata = nlohmann::json::object()) {
    nlohmann::json j;
    j["format"] = 1;
    if (!method.empty()) j["method"] = method;
    if (!metadata.empty()) j["metadata"] = metadata;
    j["layers"] = nlohmann::json::array();
    for (const Layer& layer : net.layers) {
        nlohmann::json lj;
        lj["in"] = layer.weights.cols();
        lj["out"] = layer.weights.rows();
        lj["activation"] = to_string(layer.activation);
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
                w.push_back(layer.weights(r, c));
            }
        }
        lj["weights"] = w;
        lj["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
        if (layer.noise) {
            lj["noise"] = {{"p1", layer.noise->p1}, {"p2", layer.noise->p2}};
        } else {
            lj["noise"] = nullptr;
        }
        j["layers"].push_back(std::move(lj));
    }
    return j;
}

inline DenseNetwork network_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format").get<int>() != 1) {
        throw FormatError("model file: unsupported or missing format version");
    }
    DenseNetwork net;
    for (const auto& lj : j.at("layers")) {
        Layer layer;
        const auto in = lj.at("in").get<Eigen::Index>();
        const auto out = lj.at("out").get<Eigen::Index>();
        const auto w = lj.at("weights").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != in * out) {
            throw FormatError("model file: weight array size mismatch");
        }
        layer.weights.resize(out, in);
        std::size_t pos = 0;
        for (Eigen::Index r = 0; r < out; ++r) {
            for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = w[pos++];
        }
        const auto b = lj.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(b.size()) != out) {
            throw FormatError("model file: bias array size mismatch");
        }
        layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
        layer.activation = activation_from_string(lj.at("activation").get<std::string>());
        if (lj.contains("noise") && !lj.at("noise").is_null()) {
            MultinomialNoiseSpec spec;
            spec.p1 = lj.at("noise").at("p1").get<double>();
            spec.p2 = lj.at("noise").at("p2").get<double>();
            layer.noise = spec;
        }
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

inline void save_network(const std::filesystem::path& path, const DenseNetwork& net,
                         const std::string& method = "",
                         const nlohmann::json& metadata = nlohmann::json::object()) {
    atomic_write_file(path, network_to_json(net, method, metadata).dump(2) + "\n");
}

inline DenseNetwork load_network(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    return network_from_json(j);
}

} // namespace memrobust
