#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "memrobust/errors.hpp"
#include "memrobust/fsio.hpp"

namespace memrobust {

struct IVSample {
    double voltage = 0.0;  // volts
    double current = 0.0;  // amperes
};

/// Raw multi-cycle voltage/current sweep data for one device.
struct IVTrace {
    std::string device_id;
    std::vector<std::vector<IVSample>> cycles;
    std::optional<double> compliance_current;
};

/// Conductance sequences on the retained ascending positive-voltage branch,
/// aligned across cycles, plus the smoothed cross-cycle mean curve.
struct ConductanceSet {
    std::vector<std::size_t> positive_quadrant_index;  // sample positions used
    Eigen::MatrixXd per_cycle;                         // n_cycles x n_points, siemens
    Eigen::VectorXd mean_smoothed;                     // n_points, siemens
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.front())) != 0))
        s.remove_prefix(1);
    while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.back())) != 0))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_csv_row(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(pos)));
            break;
        }
        out.push_back(trim(line.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

inline double parse_number(std::string_view cell, std::size_t row, const char* column) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw FormatError("row " + std::to_string(row) + ": non-numeric " + column + " value '" +
                          std::string(cell) + "'");
    }
    return value;
}

} // namespace detail

/// Checks the shared-shape invariants: at least one cycle, every cycle at
/// least two samples, all cycles the same length.
inline void validate_trace(const IVTrace& trace) {
    if (trace.cycles.empty()) throw FormatError("empty input: trace has no cycles");
    const std::size_t n0 = trace.cycles.front().size();
    for (std::size_t i = 0; i < trace.cycles.size(); ++i) {
        if (trace.cycles[i].size() < 2) {
            throw FormatError("cycle " + std::to_string(i) + " has " +
                              std::to_string(trace.cycles[i].size()) +
                              " samples; at least 2 required");
        }
        if (trace.cycles[i].size() != n0) {
            throw FormatError("cycle alignment error: cycle 0 has " + std::to_string(n0) +
                              " samples but cycle " + std::to_string(i) + " has " +
                              std::to_string(trace.cycles[i].size()));
        }
    }
}

/// Parses the long-form `voltage,current,cycle` format. Rows are grouped by
/// cycle id in first-appearance order; sample order within a cycle is kept.
inline IVTrace parse_iv_stream(std::istream& in, std::string device_id) {
    IVTrace trace;
    trace.device_id = std::move(device_id);

    std::string line;
    std::size_t row = 0;
    bool saw_header = false;
    std::map<long long, std::size_t> cycle_slot;  // id -> index in trace.cycles
    std::vector<long long> cycle_order;

    while (std::getline(in, line)) {
        ++row;
        auto cells = detail::split_csv_row(line);
        if (cells.size() == 1 && cells[0].empty()) continue;  // blank line
        if (!saw_header) {
            if (cells.size() != 3 || cells[0] != "voltage" || cells[1] != "current" ||
                cells[2] != "cycle") {
                throw FormatError("row " + std::to_string(row) +
                                  ": expected header 'voltage,current,cycle'");
            }
            saw_header = true;
            continue;
        }
        if (cells.size() != 3) {
            throw FormatError("row " + std::to_string(row) + ": expected 3 columns, got " +
                              std::to_string(cells.size()));
        }
        IVSample sample;
        sample.voltage = detail::parse_number(cells[0], row, "voltage");
        sample.current = detail::parse_number(cells[1], row, "current");
        const double cycle_raw = detail::parse_number(cells[2], row, "cycle");
        const long long cycle_id = static_cast<long long>(cycle_raw);
        if (cycle_raw != static_cast<double>(cycle_id) || cycle_id < 0) {
            throw FormatError("row " + std::to_string(row) +
                              ": cycle must be a non-negative integer");
        }
        auto it = cycle_slot.find(cycle_id);
        if (it == cycle_slot.end()) {
            cycle_slot.emplace(cycle_id, trace.cycles.size());
            cycle_order.push_back(cycle_id);
            trace.cycles.emplace_back();
            it = cycle_slot.find(cycle_id);
        }
        trace.cycles[it->second].push_back(sample);
    }
    if (!saw_header) throw FormatError("empty input: missing header 'voltage,current,cycle'");
    if (trace.cycles.empty()) throw FormatError("empty input: no data rows");
    validate_trace(trace);
    return trace;
}

inline IVTrace parse_iv_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open file: " + path.string());
    return parse_iv_stream(in, path.stem().string());
}

inline std::string format_iv_csv(const IVTrace& trace) {
    std::string out = "voltage,current,cycle\n";
    for (std::size_t c = 0; c < trace.cycles.size(); ++c) {
        for (const IVSample& s : trace.cycles[c]) {
            out += format_double(s.voltage);
            out += ',';
            out += format_double(s.current);
            out += ',';
            out += std::to_string(c);
            out += '\n';
        }
    }
    return out;
}

inline void write_iv_file(const std::filesystem::path& path, const IVTrace& trace) {
    atomic_write_file(path, format_iv_csv(trace));
}

namespace detail {

/// Centered moving average with the window truncated at both boundaries.
/// Each output value is a convex combination of inputs, so the output range
/// never leaves [min, max] of the input.
inline Eigen::VectorXd smooth_curve(const Eigen::VectorXd& values, int window) {
    const auto n = values.size();
    if (window <= 0 || window % 2 == 0) {
        throw ArgumentError("smoothing window must be a positive odd integer, got " +
                            std::to_string(window));
    }
    if (window > n) {
        throw ArgumentError("smoothing window " + std::to_string(window) +
                            " exceeds curve length " + std::to_string(n));
    }
    const Eigen::Index half = window / 2;
    Eigen::VectorXd out(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, j - half);
        const Eigen::Index hi = std::min<Eigen::Index>(n - 1, j + half);
        out[j] = values.segment(lo, hi - lo + 1).mean();
    }
    return out;
}

} // namespace detail

/// Smoothed cross-cycle mean of the conductance matrix.
inline Eigen::VectorXd smooth_mean_curve(const ConductanceSet& cond, int window) {
    Eigen::VectorXd mean = cond.per_cycle.colwise().mean();
    return detail::smooth_curve(mean, window);
}

/// Retains the ascending positive-voltage branch (the maximal run of
/// strictly increasing voltages starting at the first positive sample) and
/// converts it to conductance G = I/V per cycle. Retained indices come from
/// the first cycle; all cycles share the same sweep protocol.
inline ConductanceSet extract_conductance(const IVTrace& trace, int smoothing_window = 5) {
    validate_trace(trace);
    const auto& sweep = trace.cycles.front();

    std::size_t start = sweep.size();
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        if (sweep[i].voltage > 0.0) {
            start = i;
            break;
        }
    }
    if (start == sweep.size()) throw DomainError("no positive-voltage samples in sweep");
    std::size_t end = start + 1;
    while (end < sweep.size() && sweep[end].voltage > sweep[end - 1].voltage) ++end;

    const std::size_t n_points = end - start;
    if (n_points < 2) {
        throw DomainError("ascending positive-voltage branch has fewer than 2 samples");
    }

    ConductanceSet cond;
    cond.positive_quadrant_index.resize(n_points);
    for (std::size_t j = 0; j < n_points; ++j) cond.positive_quadrant_index[j] = start + j;

    const std::size_t n_cycles = trace.cycles.size();
    cond.per_cycle.resize(static_cast<Eigen::Index>(n_cycles), static_cast<Eigen::Index>(n_points));
    for (std::size_t c = 0; c < n_cycles; ++c) {
        for (std::size_t j = 0; j < n_points; ++j) {
            const IVSample& s = trace.cycles[c][start + j];
            const double g = s.current / s.voltage;
            if (!std::isfinite(g) || g <= 0.0) {
                throw DomainError("non-positive or non-finite conductance at cycle " +
                                  std::to_string(c) + ", sample " + std::to_string(start + j));
            }
            cond.per_cycle(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = g;
        }
    }
    cond.mean_smoothed = smooth_mean_curve(cond, smoothing_window);
    return cond;
}

} // namespace memrobust
