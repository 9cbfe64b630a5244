#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "memrobust/ivdata.hpp"
#include "memrobust/rng.hpp"
#include "test_util.hpp"

using namespace memrobust;
using Catch::Approx;

namespace {

IVTrace parse_text(const std::string& text, const std::string& id = "dev") {
    std::istringstream in(text);
    return parse_iv_stream(in, id);
}

} // namespace

TEST_CASE("parse groups rows by cycle in first-appearance order", "[ivdata]") {
    const auto trace = parse_text(
        "voltage,current,cycle\n"
        "0.5,1e-6,0\n1.0,2e-6,0\n1.5,3e-6,0\n"
        "0.5,1.1e-6,1\n1.0,2.1e-6,1\n1.5,3.1e-6,1\n");
    REQUIRE(trace.cycles.size() == 2);
    REQUIRE(trace.cycles[0].size() == 3);
    REQUIRE(trace.cycles[1].size() == 3);
    REQUIRE(trace.cycles[1][2].current == Approx(3.1e-6));
}

TEST_CASE("parse rejects bad inputs", "[ivdata]") {
    SECTION("header only is an empty-input error") {
        REQUIRE_THROWS_WITH(parse_text("voltage,current,cycle\n"),
                            Catch::Matchers::ContainsSubstring("empty input"));
    }
    SECTION("zero-byte file") {
        REQUIRE_THROWS_AS(parse_text(""), FormatError);
    }
    SECTION("missing header") {
        REQUIRE_THROWS_WITH(parse_text("volts,amps,cyc\n1,2,0\n"),
                            Catch::Matchers::ContainsSubstring("voltage,current,cycle"));
    }
    SECTION("non-numeric cell names the row") {
        REQUIRE_THROWS_WITH(parse_text("voltage,current,cycle\n1,2,0\n1,abc,0\n"),
                            Catch::Matchers::ContainsSubstring("row 3"));
    }
    SECTION("misaligned cycles name both counts") {
        const std::string text =
            "voltage,current,cycle\n"
            "1,2,0\n2,4,0\n3,6,0\n"
            "1,2,1\n2,4,1\n";
        REQUIRE_THROWS_WITH(parse_text(text), Catch::Matchers::ContainsSubstring("3") &&
                                                  Catch::Matchers::ContainsSubstring("2"));
    }
}

TEST_CASE("conductance is I/V on the ascending positive branch", "[ivdata]") {
    SECTION("two-sample example") {
        IVTrace trace;
        trace.cycles = {{{1.0, 2.0}, {2.0, 8.0}}};
        const auto cond = extract_conductance(trace, 1);
        REQUIRE(cond.per_cycle(0, 0) == Approx(2.0));
        REQUIRE(cond.per_cycle(0, 1) == Approx(4.0));
    }
    SECTION("full sweep keeps only the rising positive segment") {
        // 0 -> +6 -> 0 -> -6 -> 0 volt protocol
        IVTrace trace;
        std::vector<double> volts{0.0, 2.0, 4.0, 6.0, 4.0, 2.0, 0.0, -2.0, -6.0, -2.0, 0.0};
        std::vector<IVSample> sweep;
        for (double v : volts) sweep.push_back(IVSample{v, v > 0 ? v * 1e-6 : 1e-9});
        trace.cycles = {sweep, sweep};
        const auto cond = extract_conductance(trace, 1);
        REQUIRE(cond.positive_quadrant_index == std::vector<std::size_t>{1, 2, 3});
        REQUIRE(cond.per_cycle.cols() == 3);
    }
    SECTION("no positive voltage is a domain error") {
        IVTrace trace;
        trace.cycles = {{{-1.0, 1.0}, {-2.0, 2.0}}};
        REQUIRE_THROWS_AS(extract_conductance(trace, 1), DomainError);
    }
}

TEST_CASE("smooth_mean_curve is a truncated centered average", "[ivdata]") {
    ConductanceSet cond;
    cond.per_cycle.resize(1, 5);
    cond.per_cycle << 1, 2, 9, 2, 1;

    SECTION("window 1 is the identity") {
        const auto out = smooth_mean_curve(cond, 1);
        REQUIRE(out.size() == 5);
        for (int j = 0; j < 5; ++j) REQUIRE(out[j] == Approx(cond.per_cycle(0, j)));
    }
    SECTION("window 3 hand values") {
        const auto out = smooth_mean_curve(cond, 3);
        REQUIRE(out[0] == Approx(1.5));
        REQUIRE(out[1] == Approx(4.0));
        REQUIRE(out[2] == Approx(13.0 / 3.0));
        REQUIRE(out[3] == Approx(4.0));
        REQUIRE(out[4] == Approx(1.5));
    }
    SECTION("constant curves are fixed points") {
        ConductanceSet flat;
        flat.per_cycle = Eigen::MatrixXd::Constant(2, 7, 3.25);
        for (int w : {1, 3, 5, 7}) {
            const auto out = smooth_mean_curve(flat, w);
            for (int j = 0; j < 7; ++j) REQUIRE(out[j] == Approx(3.25));
        }
    }
    SECTION("bad windows are argument errors") {
        REQUIRE_THROWS_AS(smooth_mean_curve(cond, 2), ArgumentError);
        REQUIRE_THROWS_AS(smooth_mean_curve(cond, 0), ArgumentError);
        REQUIRE_THROWS_AS(smooth_mean_curve(cond, 7), ArgumentError);
    }
}

TEST_CASE("smoothing stays inside the input range", "[ivdata]") {
    Rng rng = make_rng(11);
    std::uniform_real_distribution<double> unif(0.1, 10.0);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 5 + static_cast<int>(rng() % 40);
        ConductanceSet cond;
        cond.per_cycle.resize(1, n);
        for (int j = 0; j < n; ++j) cond.per_cycle(0, j) = unif(rng);
        const double lo = cond.per_cycle.minCoeff(), hi = cond.per_cycle.maxCoeff();
        for (int w = 1; w <= n; w += 2) {
            const auto out = smooth_mean_curve(cond, w);
            REQUIRE(out.minCoeff() >= lo - 1e-12);
            REQUIRE(out.maxCoeff() <= hi + 1e-12);
        }
    }
}

TEST_CASE("cycle order only permutes conductance rows", "[ivdata]") {
    Rng rng = make_rng(29);
    std::uniform_real_distribution<double> unif(1e-7, 1e-5);
    IVTrace trace;
    for (int c = 0; c < 4; ++c) {
        std::vector<IVSample> sweep;
        for (int j = 0; j < 8; ++j) {
            const double v = 0.5 + 0.5 * j;
            sweep.push_back(IVSample{v, v * unif(rng)});
        }
        trace.cycles.push_back(sweep);
    }
    IVTrace reordered = trace;
    std::swap(reordered.cycles[0], reordered.cycles[3]);
    std::swap(reordered.cycles[1], reordered.cycles[2]);

    const auto a = extract_conductance(trace, 3);
    const auto b = extract_conductance(reordered, 3);
    REQUIRE(a.per_cycle.row(0).isApprox(b.per_cycle.row(3)));
    REQUIRE(a.per_cycle.row(1).isApprox(b.per_cycle.row(2)));
    REQUIRE(a.mean_smoothed.isApprox(b.mean_smoothed));
}

TEST_CASE("write/parse round trip is the identity", "[ivdata]") {
    const auto dir = testutil::temp_dir();

    IVTrace trace;
    Rng rng = make_rng(3);
    std::uniform_real_distribution<double> unif(1e-9, 1e-4);
    for (int c = 0; c < 3; ++c) {
        std::vector<IVSample> sweep;
        for (int j = 0; j < 6; ++j) sweep.push_back(IVSample{0.1 + 0.3 * j, unif(rng)});
        trace.cycles.push_back(sweep);
    }
    trace.device_id = "roundtrip";

    const auto path = dir / "roundtrip.csv";
    write_iv_file(path, trace);
    const IVTrace back = parse_iv_file(path);
    REQUIRE(back.device_id == "roundtrip");
    REQUIRE(back.cycles.size() == trace.cycles.size());
    for (std::size_t c = 0; c < trace.cycles.size(); ++c) {
        for (std::size_t j = 0; j < trace.cycles[c].size(); ++j) {
            REQUIRE(back.cycles[c][j].voltage == trace.cycles[c][j].voltage);
            REQUIRE(back.cycles[c][j].current == trace.cycles[c][j].current);
        }
    }
}
