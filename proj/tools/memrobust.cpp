// memrobust: device ingestion, fabrication campaigns, robust training,
// usability sweeps, certification, and the crossbar demo from one binary.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "memrobust/memrobust.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace memrobust;

namespace {

std::uint64_t default_seed() {
    if (const char* env = std::getenv("MEMROBUST_SEED")) {
        return static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
    }
    return 0;
}

fs::path resolve_out(std::string out) {
    if (out.empty()) out = "runs/" + timestamp_for_path();
    fs::create_directories(out);
    return out;
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand, std::uint64_t seed,
                    const json& flags) {
    json manifest;
    manifest["tool"] = "memrobust";
    manifest["version"] = kVersion;
    manifest["subcommand"] = subcommand;
    manifest["seed"] = seed;
    manifest["flags"] = flags;
    manifest["created"] = utc_timestamp();
    atomic_write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    return out;
}

std::vector<Eigen::Index> parse_arch(const std::string& text) {
    std::vector<Eigen::Index> dims;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        dims.push_back(static_cast<Eigen::Index>(std::stoll(item)));
    }
    if (dims.size() < 2) throw ArgumentError("--arch needs at least input,output dims");
    return dims;
}

RawConfig parse_config_string(const SearchSpace& space, const std::string& text) {
    json obj = json::object();
    std::stringstream ss(text);
    std::string pair;
    while (std::getline(ss, pair, ',')) {
        if (pair.empty()) continue;
        const auto eq = pair.find('=');
        if (eq == std::string::npos) {
            throw ArgumentError("--config expects name=value pairs, got '" + pair + "'");
        }
        const std::string name = pair.substr(0, eq);
        const std::string value = pair.substr(eq + 1);
        bool numeric_dim = false;
        bool known = false;
        for (const auto& d : space.dims) {
            if (d.name == name) {
                numeric_dim = d.kind == Dimension::Kind::numeric;
                known = true;
                break;
            }
        }
        if (!known) throw ArgumentError("unknown dimension '" + name + "' in --config");
        if (numeric_dim) obj[name] = std::stod(value);
        else obj[name] = value;
    }
    return config_from_json(space, obj);
}

std::string config_display(const SearchSpace& space, const RawConfig& cfg) {
    std::string out;
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        if (d > 0) out += ",";
        out += space.dims[d].name + "=" + config_value_to_string(cfg[d]);
    }
    return out;
}

Dataset load_dataset_csv(const fs::path& path, int n_classes, std::uint64_t seed) {
    // label,feature1,...,featureD with a 70/15/15 seeded split.
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open dataset: " + path.string());
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> values;
        while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
        if (values.size() < 2) {
            throw FormatError("row " + std::to_string(row_no) + ": expected label,features");
        }
        labels.push_back(static_cast<int>(values[0]));
        rows.push_back(std::vector<double>(values.begin() + 1, values.end()));
    }
    if (rows.empty()) throw FormatError("empty dataset: " + path.string());
    Dataset data;
    data.n_classes = n_classes;
    data.inputs.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(rows[0].size()));
    data.labels = labels;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) {
            throw FormatError("inconsistent feature count at row " + std::to_string(i + 1));
        }
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            data.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    const std::size_t n = rows.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = make_rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    data.split.assign(n, Split::test);
    const auto n_train = static_cast<std::size_t>(0.7 * static_cast<double>(n));
    const auto n_val = static_cast<std::size_t>(0.15 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train) data.split[order[i]] = Split::train;
        else if (i < n_train + n_val) data.split[order[i]] = Split::val;
    }
    return data;
}

struct DatasetOptions {
    std::string kind = "moons";
    std::size_t n = 300;
    double noise = 0.1;
    std::uint64_t data_seed = 7;
    std::string csv_path;
    int classes = 2;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--dataset", kind, "Dataset kind: moons or csv")
            ->check(CLI::IsMember({"moons", "csv"}))
            ->capture_default_str();
        cmd->add_option("--n", n, "Number of moons samples")->capture_default_str();
        cmd->add_option("--noise", noise, "Moons jitter standard deviation")
            ->capture_default_str();
        cmd->add_option("--data-seed", data_seed, "Dataset generation/split seed")
            ->capture_default_str();
        cmd->add_option("--csv", csv_path, "CSV dataset path (label,features...)");
        cmd->add_option("--classes", classes, "Class count for csv datasets")
            ->capture_default_str();
    }

    [[nodiscard]] Dataset load() const {
        if (kind == "moons") return make_moons(n, noise, data_seed);
        if (csv_path.empty()) throw ArgumentError("--dataset csv requires --csv PATH");
        return load_dataset_csv(csv_path, classes, data_seed);
    }

    [[nodiscard]] json describe() const {
        json j{{"kind", kind}, {"data_seed", data_seed}};
        if (kind == "moons") {
            j["n"] = n;
            j["noise"] = noise;
        } else {
            j["csv"] = csv_path;
            j["classes"] = classes;
        }
        return j;
    }
};

struct LoadedModel {
    DenseNetwork net;
    std::string method;
};

LoadedModel load_model(const fs::path& path) {
    if (!fs::exists(path)) throw FormatError("missing model file: " + path.string());
    json j = json::parse(read_file(path));
    LoadedModel m;
    m.net = network_from_json(j);
    m.method = j.value("method", path.stem().string());
    return m;
}

std::string csv_line(std::initializer_list<std::string> cells) {
    std::string out;
    for (const auto& c : cells) {
        if (!out.empty()) out += ',';
        out += c;
    }
    out += '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_ingest(const fs::path& out, std::uint64_t seed, const std::string& iv_path,
               std::size_t required_len, const std::string& sigma_variant, int window) {
    const SigmaVariant variant = sigma_variant_from_string(sigma_variant);
    const IVTrace trace = parse_iv_file(iv_path);
    const ConductanceSet cond = extract_conductance(trace, window);
    const NonIdealityProfile profile = compute_profile(cond, required_len, variant);

    json pj = profile;
    atomic_write_file(out / "profile.json", pj.dump(2) + "\n");
    write_manifest(out, "ingest", seed,
                   json{{"iv", iv_path},
                        {"required_len", required_len},
                        {"sigma", sigma_variant},
                        {"window", window}});

    std::cout << "device: " << trace.device_id << "\n"
              << "cycles: " << trace.cycles.size() << ", retained points: "
              << cond.mean_smoothed.size() << "\n"
              << "lcis: [" << profile.lcis_start << ", " << profile.lcis_end << ") len "
              << profile.lcis_len << " / required " << profile.required_len << "\n"
              << "sigma_mle: " << format_double(profile.sigma_mle)
              << ", sigma_95: " << format_double(profile.sigma_95) << " (using "
              << to_string(profile.sigma_variant) << ")\n";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", profile.usability);
    std::cout << "usability: " << buf << "\n";
    return 0;
}

int cmd_campaign(CLI::App* cmd, const fs::path& out, std::uint64_t seed,
                 const std::string& state_path, const std::string& space_path,
                 const std::string& action, const std::string& config_text, double value,
                 const std::string& note, std::size_t n_init, const std::string& gp_mode,
                 double length_scale, double signal_var, double noise_var) {
    (void)cmd;
    FileLock lock{fs::path(state_path)};

    if (action == "init") {
        CampaignState state;
        state.space = space_path.empty()
                          ? default_fabrication_space()
                          : json::parse(read_file(space_path)).get<SearchSpace>();
        state.seed = seed;
        state.n_init = n_init;
        state.hyper_mode =
            gp_mode == "fixed"
                ? HyperMode::fixed(GPHyper{length_scale, signal_var, noise_var})
                : HyperMode::mle();
        save_campaign(state_path, state);
        write_manifest(out, "campaign", seed,
                       json{{"action", "init"},
                            {"state", state_path},
                            {"space", space_path.empty() ? "default" : space_path},
                            {"gp", gp_mode}});
        std::cout << "initialized campaign with " << state.space.grid_size()
                  << " grid points at " << state_path << "\n";
        return 0;
    }

    CampaignState state = load_campaign(state_path);
    if (action == "suggest") {
        const RawConfig cfg = suggest(state);
        save_campaign(state_path, state);
        write_manifest(out, "campaign", seed, json{{"action", "suggest"}, {"state", state_path}});
        std::cout << "suggestion: " << config_display(state.space, cfg) << "\n"
                  << config_to_json(state.space, cfg).dump() << "\n";
        return 0;
    }
    if (action == "tell") {
        if (config_text.empty()) throw ArgumentError("campaign tell requires --config");
        const RawConfig cfg = parse_config_string(state.space, config_text);
        tell(state, cfg, value, note);
        save_campaign(state_path, state);
        write_manifest(out, "campaign", seed,
                       json{{"action", "tell"},
                            {"state", state_path},
                            {"config", config_text},
                            {"value", value}});
        std::cout << "recorded " << format_double(value) << " for "
                  << config_display(state.space, cfg) << " (" << state.history.size()
                  << " observations)\n";
        return 0;
    }
    if (action == "status") {
        write_manifest(out, "campaign", seed, json{{"action", "status"}, {"state", state_path}});
        std::cout << "campaign: " << state_path << "\n"
                  << "grid size: " << state.space.grid_size() << "\n"
                  << "observations: " << state.history.size() << "\n";
        if (const HistoryEntry* best = state.best_entry()) {
            std::cout << "best: " << format_double(best->usability) << " at "
                      << config_display(state.space, best->config) << "\n";
        }
        if (state.pending) {
            std::cout << "pending: " << config_display(state.space, *state.pending) << "\n";
        }
        for (const auto& entry : state.history) {
            std::cout << "  " << entry.timestamp << "  " << format_double(entry.usability)
                      << "  " << config_display(state.space, entry.config)
                      << (entry.note.empty() ? "" : "  # " + entry.note) << "\n";
        }
        return 0;
    }
    throw ArgumentError("unknown campaign action '" + action + "'");
}

int cmd_train(const fs::path& out, std::uint64_t seed, const DatasetOptions& dataset_opts,
              const std::string& arch_text, const std::string& method_name, double p1, double p2,
              double lr, int epochs, int batch, bool optimize_alpha_flag,
              std::size_t alpha_budget, const std::string& alpha_p1_grid,
              const std::string& alpha_p2_grid, int alpha_trials,
              const std::string& alpha_usabilities) {
    const Dataset data = dataset_opts.load();
    const auto arch = parse_arch(arch_text);
    DenseNetwork net_template = make_dense_network(arch, seed);
    TrainHyper hyper{lr, epochs, batch, seed};

    TrainMethod method = TrainMethod::erm();
    json alpha_meta = nullptr;
    if (method_name == "bayesmulti") {
        MultinomialNoiseSpec spec{p1, p2};
        if (optimize_alpha_flag) {
            auto grid = make_alpha_grid(parse_double_list(alpha_p1_grid),
                                        parse_double_list(alpha_p2_grid));
            std::vector<NonIdealityProfile> profiles;
            for (double u : parse_double_list(alpha_usabilities)) {
                profiles.push_back(synthesize_profile(u));
            }
            const AlphaSearchResult search = optimize_alpha(
                net_template, data, grid, alpha_budget, profiles, alpha_trials, hyper, seed);
            spec = search.best;
            alpha_meta = json{{"p1", spec.p1}, {"p2", spec.p2}, {"score", search.best_score}};
            std::string trace_csv = "order,p1,p2,score\n";
            for (std::size_t i = 0; i < search.trace.size(); ++i) {
                trace_csv += csv_line({std::to_string(i), format_double(search.trace[i].alpha.p1),
                                       format_double(search.trace[i].alpha.p2),
                                       format_double(search.trace[i].score)});
            }
            atomic_write_file(out / "alpha_trace.csv", trace_csv);
            std::cout << "optimized alpha: p1=" << format_double(spec.p1)
                      << " p2=" << format_double(spec.p2)
                      << " (score " << format_double(search.best_score) << ")\n";
        }
        method = TrainMethod::bayesmulti(spec);
    } else if (method_name != "erm") {
        throw ArgumentError("unknown method '" + method_name + "'");
    }

    const TrainResult result = train(net_template, data, method, hyper);

    json metadata;
    metadata["dataset"] = dataset_opts.describe();
    metadata["hyper"] = {{"lr", lr}, {"epochs", epochs}, {"batch", batch}, {"seed", seed}};
    if (!alpha_meta.is_null()) metadata["alpha_search"] = alpha_meta;
    save_network(out / "model.json", result.net, method.name(), metadata);

    std::string history_csv = "epoch,train_loss,val_accuracy\n";
    for (const auto& row : result.history) {
        history_csv += csv_line({std::to_string(row.epoch), format_double(row.train_loss),
                                 format_double(row.val_accuracy)});
    }
    atomic_write_file(out / "history.csv", history_csv);

    json flags{{"method", method_name},      {"arch", arch_text}, {"lr", lr},
               {"epochs", epochs},           {"batch", batch},    {"p1", p1},
               {"p2", p2},                   {"optimize_alpha", optimize_alpha_flag},
               {"dataset", dataset_opts.describe()}};
    write_manifest(out, "train", seed, flags);

    const double test_acc = accuracy(result.net, data, Split::test);
    std::cout << "method: " << method.name() << "\n"
              << "final train loss: " << format_double(result.history.back().train_loss) << "\n"
              << "val accuracy: " << format_double(result.history.back().val_accuracy) << "\n"
              << "test accuracy: " << format_double(test_acc) << "\n"
              << "model: " << (out / "model.json").string() << "\n";
    return 0;
}

int cmd_sweep(const fs::path& out, std::uint64_t seed, const DatasetOptions& dataset_opts,
              const std::vector<std::string>& model_paths, const std::string& usabilities_text,
              double mono_fraction, int trials) {
    if (model_paths.empty()) throw ArgumentError("sweep requires at least one --model");
    const Dataset data = dataset_opts.load();
    const std::vector<double> usabilities = parse_double_list(usabilities_text);

    std::vector<LoadedModel> models;
    std::vector<std::string> labels;
    for (const auto& p : model_paths) {
        models.push_back(load_model(p));
        std::string label = models.back().method;
        for (const auto& existing : labels) {
            if (existing == label) {
                label += "_" + std::to_string(labels.size());
                break;
            }
        }
        labels.push_back(label);
    }

    std::string trials_csv = "usability,method,trial,accuracy\n";
    std::string agg_csv = "usability,method,mean,std\n";
    for (std::size_t ui = 0; ui < usabilities.size(); ++ui) {
        const NonIdealityProfile profile = synthesize_profile(usabilities[ui], mono_fraction);
        for (std::size_t mi = 0; mi < models.size(); ++mi) {
            std::vector<double> accs;
            for (int t = 0; t < trials; ++t) {
                DenseNetwork perturbed = models[mi].net;
                map_weights(perturbed, profile, derive_seed(seed, ui, mi * 1000 + static_cast<std::size_t>(t)));
                accs.push_back(accuracy(perturbed, data, Split::test));
                trials_csv += csv_line({format_double(usabilities[ui]), labels[mi],
                                        std::to_string(t), format_double(accs.back())});
            }
            double mean = 0.0;
            for (double a : accs) mean += a;
            mean /= static_cast<double>(accs.size());
            double stddev = 0.0;
            if (accs.size() > 1) {
                double ss = 0.0;
                for (double a : accs) ss += (a - mean) * (a - mean);
                stddev = std::sqrt(ss / static_cast<double>(accs.size() - 1));
            }
            agg_csv += csv_line({format_double(usabilities[ui]), labels[mi], format_double(mean),
                                 format_double(stddev)});
        }
    }
    atomic_write_file(out / "sweep_trials.csv", trials_csv);
    atomic_write_file(out / "sweep_aggregate.csv", agg_csv);
    write_manifest(out, "sweep", seed,
                   json{{"models", model_paths},
                        {"usabilities", usabilities_text},
                        {"mono_fraction", mono_fraction},
                        {"trials", trials},
                        {"dataset", dataset_opts.describe()}});
    std::cout << "swept " << usabilities.size() << " usability levels x " << models.size()
              << " models x " << trials << " trials\n"
              << "wrote " << (out / "sweep_trials.csv").string() << " and "
              << (out / "sweep_aggregate.csv").string() << "\n";
    return 0;
}

int cmd_certify(const fs::path& out, std::uint64_t seed, const std::string& model_path,
                const std::string& input_text, double p1, double p2, const std::string& grid_text,
                const std::string& verify_mode, std::size_t mc_samples) {
    const LoadedModel model = load_model(model_path);
    const std::vector<double> input_values = parse_double_list(input_text);
    if (static_cast<Eigen::Index>(input_values.size()) != model.net.input_dim()) {
        throw ArgumentError("--input needs " + std::to_string(model.net.input_dim()) +
                            " comma-separated values");
    }
    Eigen::VectorXd x =
        Eigen::Map<const Eigen::VectorXd>(input_values.data(),
                                          static_cast<Eigen::Index>(input_values.size()));
    const std::size_t theta = masked_weight_count(model.net);

    json report;
    report["theta_count"] = theta;
    report["p1"] = p1;
    report["p2"] = p2;

    double f_pi0 = 0.0;
    int predicted = 0;
    if (theta <= kExactSmoothingCap) {
        const Eigen::VectorXd probs = exact_smoothed(model.net, x, p1, p2);
        Eigen::Index arg = 0;
        probs.maxCoeff(&arg);
        predicted = static_cast<int>(arg);
        f_pi0 = probs[arg];
        report["estimate"] = "exact_enumeration";
    } else {
        // Monte-Carlo vote with a one-sided 99.9% Clopper-Pearson lower
        // bound on the top-class probability.
        MultinomialNoiseSpec spec{p1, p2};
        const SmoothedPrediction pred = smoothed_predict(model.net, x, spec, mc_samples, seed);
        Eigen::Index arg = 0;
        pred.mean.maxCoeff(&arg);
        predicted = static_cast<int>(arg);
        const auto sites = noise_site_layers(model.net);
        Rng rng = make_rng(derive_seed(seed, 0xce7f));
        std::uint64_t votes = 0;
        for (std::size_t s = 0; s < mc_samples; ++s) {
            MaskSet masks(model.net.layers.size());
            for (std::size_t l : sites) {
                masks[l] = sample_noise_mask(spec, model.net.layers[l].weights.rows(),
                                             model.net.layers[l].weights.cols(), rng);
            }
            const Eigen::VectorXd probs = forward_batch(model.net, x, &masks);
            Eigen::Index sample_arg = 0;
            probs.maxCoeff(&sample_arg);
            if (sample_arg == arg) ++votes;
        }
        f_pi0 = clopper_pearson_lower(votes, mc_samples, 0.001);
        report["estimate"] = "monte_carlo_lower_bound";
        report["mc_samples"] = mc_samples;
    }

    const double radius = certified_radius(f_pi0, theta, p1, p2);
    const bool certified = radius >= 0.0 && f_pi0 > 0.5;
    report["f_pi0"] = f_pi0;
    report["predicted_class"] = predicted;
    report["radius"] = radius;
    report["certified"] = certified;
    report["tested_patterns"] = 0;
    report["min_margin"] = nullptr;

    const bool want_verify = verify_mode == "on" || (verify_mode == "auto" && theta <= 10);
    if (want_verify && certified) {
        std::vector<double> grid =
            grid_text.empty() ? default_perturbation_grid() : parse_double_list(grid_text);
        const VerifyReport vr = verify_certificate(model.net, x, p1, p2, grid, seed);
        report["tested_patterns"] = vr.tested_patterns;
        report["min_margin"] = vr.min_margin;
        report["lagrangian_ok"] = vr.lagrangian_ok;
        report["violations"] = vr.violations;
        report["certified"] = vr.certified;
    }

    atomic_write_file(out / "certificate.json", report.dump(2) + "\n");
    write_manifest(out, "certify", seed,
                   json{{"model", model_path},
                        {"input", input_text},
                        {"p1", p1},
                        {"p2", p2},
                        {"verify", verify_mode}});
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_crossbar_demo(const fs::path& out, std::uint64_t seed, const DatasetOptions& dataset_opts,
                      double usability, double mono_fraction, double p1, double p2, int rows,
                      int cols, std::size_t layer_index, double lr, int epochs, int batch) {
    const Dataset data = dataset_opts.load();
    const DenseNetwork net_template = make_dense_network({2, 10, 2}, seed);
    TrainHyper hyper{lr, epochs, batch, seed};

    const TrainResult erm = train(net_template, data, TrainMethod::erm(), hyper);
    const TrainResult bayes =
        train(net_template, data, TrainMethod::bayesmulti(MultinomialNoiseSpec{p1, p2}), hyper);

    const NonIdealityProfile profile = synthesize_profile(usability, mono_fraction);
    const CrossbarModel xbar = CrossbarModel::from_profile(profile, rows, cols);

    std::string csv = "method,software_accuracy,hardware_accuracy,gap\n";
    auto run = [&](const char* name, const DenseNetwork& net, std::uint64_t sub) {
        const double software = accuracy(net, data, Split::test);
        const double hardware =
            crossbar_accuracy(net, data, Split::test, xbar, layer_index, derive_seed(seed, sub));
        const double gap = software - hardware;
        csv += csv_line({name, format_double(software), format_double(hardware),
                         format_double(gap)});
        std::cout << name << ": software " << format_double(software) << ", hardware "
                  << format_double(hardware) << ", gap " << format_double(gap) << "\n";
        return gap;
    };
    const double erm_gap = run("erm", erm.net, 1);
    const double bayes_gap = run("bayesmulti", bayes.net, 2);
    std::cout << (bayes_gap < erm_gap ? "bayesmulti degrades less than erm\n"
                                      : "erm degrades less than bayesmulti\n");

    atomic_write_file(out / "crossbar_demo.csv", csv);
    write_manifest(out, "crossbar-demo", seed,
                   json{{"usability", usability},
                        {"mono_fraction", mono_fraction},
                        {"p1", p1},
                        {"p2", p2},
                        {"rows", rows},
                        {"cols", cols},
                        {"layer", layer_index},
                        {"dataset", dataset_opts.describe()}});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"memrobust: co-optimization of simulated analog devices and noise-robust "
                 "networks"};
    app.require_subcommand(1);

    std::uint64_t seed = default_seed();
    std::string out_dir;
    app.add_option("--seed", seed, "Global random seed (default: MEMROBUST_SEED or 0)")
        ->capture_default_str();
    app.add_option("--out", out_dir, "Output directory (default runs/<timestamp>)");
    app.fallthrough();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Extract a non-ideality profile from I-V data");
    std::string iv_path;
    std::size_t required_len = 35;
    std::string sigma_variant = "upper95";
    int window = 5;
    ingest->add_option("--iv", iv_path, "I-V csv file (voltage,current,cycle)")->required();
    ingest->add_option("--required-len", required_len, "Minimum operative run length")
        ->capture_default_str();
    ingest->add_option("--sigma", sigma_variant, "Drift estimate variant: mle or upper95")
        ->check(CLI::IsMember({"mle", "upper95"}))
        ->capture_default_str();
    ingest->add_option("--window", window, "Mean-curve smoothing window (odd)")
        ->capture_default_str();

    // campaign
    auto* campaign = app.add_subcommand("campaign", "Fabrication ask/tell optimization");
    campaign->require_subcommand(1);
    std::string state_path = "campaign.json";
    std::string space_path;
    std::string config_text;
    std::string note;
    double tell_value = 0.0;
    std::size_t n_init = 1;
    std::string gp_mode = "mle";
    double gp_length_scale = 0.5, gp_signal_var = 1.0, gp_noise_var = 1e-6;
    std::string campaign_action;
    for (const char* action : {"init", "suggest", "tell", "status"}) {
        auto* sub = campaign->add_subcommand(action);
        sub->add_option("--state", state_path, "Campaign state file")->capture_default_str();
        if (std::string(action) == "init") {
            sub->add_option("--space", space_path, "Search-space override json");
            sub->add_option("--n-init", n_init, "Random points before the surrogate kicks in")
                ->capture_default_str();
            sub->add_option("--gp", gp_mode, "Surrogate hyperparameters: mle or fixed")
                ->check(CLI::IsMember({"mle", "fixed"}))
                ->capture_default_str();
            sub->add_option("--length-scale", gp_length_scale)->capture_default_str();
            sub->add_option("--signal-var", gp_signal_var)->capture_default_str();
            sub->add_option("--noise-var", gp_noise_var)->capture_default_str();
        }
        if (std::string(action) == "tell") {
            sub->add_option("--config", config_text, "name=value,... configuration")->required();
            sub->add_option("--value", tell_value, "Measured usability")->required();
            sub->add_option("--note", note, "Free-form note");
        }
        sub->callback([action, &campaign_action]() { campaign_action = action; });
    }

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a dense network (erm or bayesmulti)");
    DatasetOptions train_data;
    train_data.add_flags(train_cmd);
    std::string arch_text = "2,10,2";
    std::string method_name = "erm";
    double p1 = 0.2, p2 = 0.2;
    double lr = 0.1;
    int epochs = 500, batch = 32;
    bool optimize_alpha_flag = false;
    std::size_t alpha_budget = 8;
    std::string alpha_p1_grid = "0,0.1,0.2,0.3,0.4";
    std::string alpha_p2_grid = "0,0.1,0.2,0.3";
    int alpha_trials = 5;
    std::string alpha_usabilities = "1.0,0.7,0.5,0.3";
    train_cmd->add_option("--arch", arch_text, "Layer dims, e.g. 2,10,2")->capture_default_str();
    train_cmd->add_option("--method", method_name, "erm or bayesmulti")
        ->check(CLI::IsMember({"erm", "bayesmulti"}))
        ->capture_default_str();
    train_cmd->add_option("--p1", p1, "Mask zero probability")->capture_default_str();
    train_cmd->add_option("--p2", p2, "Mask half probability")->capture_default_str();
    train_cmd->add_option("--lr", lr)->capture_default_str();
    train_cmd->add_option("--epochs", epochs)->capture_default_str();
    train_cmd->add_option("--batch", batch)->capture_default_str();
    train_cmd->add_flag("--optimize-alpha", optimize_alpha_flag,
                        "Search (p1,p2) with the surrogate before the final training");
    train_cmd->add_option("--alpha-budget", alpha_budget)->capture_default_str();
    train_cmd->add_option("--alpha-p1-grid", alpha_p1_grid)->capture_default_str();
    train_cmd->add_option("--alpha-p2-grid", alpha_p2_grid)->capture_default_str();
    train_cmd->add_option("--alpha-trials", alpha_trials)->capture_default_str();
    train_cmd->add_option("--alpha-usabilities", alpha_usabilities)->capture_default_str();

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Evaluate models across a usability grid");
    DatasetOptions sweep_data;
    sweep_data.add_flags(sweep);
    std::vector<std::string> model_paths;
    std::string usabilities_text = "1.0,0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1";
    double mono_fraction = 1.0;
    int trials = 10;
    sweep->add_option("--model", model_paths, "Model json (repeatable)")->required();
    sweep->add_option("--usabilities", usabilities_text)->capture_default_str();
    sweep->add_option("--mono-fraction", mono_fraction,
                      "Monotonic factor of the synthesized profiles")
        ->capture_default_str();
    sweep->add_option("--trials", trials)->capture_default_str();

    // certify
    auto* certify = app.add_subcommand("certify", "Certified-robustness report for a tiny model");
    std::string certify_model;
    std::string input_text;
    double cert_p1 = 0.6, cert_p2 = 0.0;
    std::string grid_text;
    std::string verify_mode = "auto";
    std::size_t mc_samples = 100000;
    certify->add_option("--model", certify_model)->required();
    certify->add_option("--input", input_text, "Comma-separated input vector")->required();
    certify->add_option("--p1", cert_p1)->capture_default_str();
    certify->add_option("--p2", cert_p2)->capture_default_str();
    certify->add_option("--grid", grid_text, "Perturbation value grid override");
    certify->add_option("--verify", verify_mode, "Brute-force check: auto, on, off")
        ->check(CLI::IsMember({"auto", "on", "off"}))
        ->capture_default_str();
    certify->add_option("--mc-samples", mc_samples)->capture_default_str();

    // crossbar-demo
    auto* demo = app.add_subcommand(
        "crossbar-demo", "Software vs simulated-crossbar accuracy for erm and bayesmulti");
    DatasetOptions demo_data;
    demo_data.add_flags(demo);
    double demo_usability = 0.6, demo_mono = 1.0;
    double demo_p1 = 0.2, demo_p2 = 0.2;
    int rows = 10, cols = 10;
    std::size_t layer_index = 0;
    double demo_lr = 0.1;
    int demo_epochs = 500, demo_batch = 32;
    demo->add_option("--usability", demo_usability, "Synthesized profile level")
        ->capture_default_str();
    demo->add_option("--mono-fraction", demo_mono)->capture_default_str();
    demo->add_option("--p1", demo_p1)->capture_default_str();
    demo->add_option("--p2", demo_p2)->capture_default_str();
    demo->add_option("--rows", rows)->capture_default_str();
    demo->add_option("--cols", cols)->capture_default_str();
    demo->add_option("--layer", layer_index, "Layer to run on the crossbar")
        ->capture_default_str();
    demo->add_option("--lr", demo_lr)->capture_default_str();
    demo->add_option("--epochs", demo_epochs)->capture_default_str();
    demo->add_option("--batch", demo_batch)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const fs::path out = resolve_out(out_dir);
        if (ingest->parsed()) {
            return cmd_ingest(out, seed, iv_path, required_len, sigma_variant, window);
        }
        if (campaign->parsed()) {
            return cmd_campaign(campaign, out, seed, state_path, space_path, campaign_action,
                                config_text, tell_value, note, n_init, gp_mode, gp_length_scale,
                                gp_signal_var, gp_noise_var);
        }
        if (train_cmd->parsed()) {
            return cmd_train(out, seed, train_data, arch_text, method_name, p1, p2, lr, epochs,
                             batch, optimize_alpha_flag, alpha_budget, alpha_p1_grid,
                             alpha_p2_grid, alpha_trials, alpha_usabilities);
        }
        if (sweep->parsed()) {
            return cmd_sweep(out, seed, sweep_data, model_paths, usabilities_text, mono_fraction,
                             trials);
        }
        if (certify->parsed()) {
            return cmd_certify(out, seed, certify_model, input_text, cert_p1, cert_p2, grid_text,
                               verify_mode, mc_samples);
        }
        if (demo->parsed()) {
            return cmd_crossbar_demo(out, seed, demo_data, demo_usability, demo_mono, demo_p1,
                                     demo_p2, rows, cols, layer_index, demo_lr, demo_epochs,
                                     demo_batch);
        }
        throw ArgumentError("no subcommand given");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
