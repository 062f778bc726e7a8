#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "agckan/errors.hpp"
#include "agckan/metrics.hpp"
#include "oracles.hpp"

using namespace agckan;
using Catch::Approx;

TEST_CASE("confusion counts agree with a plain loop", "[metrics]") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.index(300);
        std::vector<int> p(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = static_cast<int>(rng.index(2));
            y[i] = static_cast<int>(rng.index(2));
        }
        REQUIRE(confusion(p, y) == oracle::count(p, y));
    }
}

TEST_CASE("metrics from counts", "[metrics]") {
    const ConfusionMatrix cm{40, 45, 5, 10};
    const Metrics m = metrics(cm);
    CHECK(m.accuracy == Approx(0.85));
    CHECK(m.precision == Approx(40.0 / 45.0));
    CHECK(m.recall == Approx(0.8));
    CHECK(m.f1 == Approx(2 * (40.0 / 45.0) * 0.8 / (40.0 / 45.0 + 0.8)));
    CHECK(m.f1 == Approx(2.0 * 40 / (2.0 * 40 + 5 + 10)));
}

TEST_CASE("percentages give the same metrics as counts", "[metrics]") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const ConfusionMatrix cm{double(rng.index(100)), double(rng.index(100)), double(rng.index(100)),
                                 double(1 + rng.index(100))};
        const Metrics a = metrics(cm), b = metrics(cm.percentages());
        CHECK(a.accuracy == Approx(b.accuracy).epsilon(1e-12));
        CHECK(a.precision == Approx(b.precision).epsilon(1e-12));
        CHECK(a.recall == Approx(b.recall).epsilon(1e-12));
        CHECK(a.f1 == Approx(b.f1).epsilon(1e-12));
        const auto pc = cm.percentages();
        CHECK(pc.total() == Approx(100.0));
    }
}

TEST_CASE("metrics are invariant under joint permutation", "[metrics]") {
    Rng rng(2);
    std::vector<int> p(200), y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        p[i] = static_cast<int>(rng.index(2));
        y[i] = static_cast<int>(rng.index(2));
    }
    const ConfusionMatrix before = confusion(p, y);
    std::vector<std::size_t> order(200);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 199; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
    std::vector<int> p2(200), y2(200);
    for (std::size_t i = 0; i < 200; ++i) {
        p2[i] = p[order[i]];
        y2[i] = y[order[i]];
    }
    CHECK(confusion(p2, y2) == before);
}

TEST_CASE("degenerate matrices", "[metrics]") {
    const Metrics none = metrics(ConfusionMatrix{0, 10, 0, 0});
    CHECK(none.accuracy == 1.0);
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
    CHECK_THROWS_AS(metrics(ConfusionMatrix{}), InvalidArgument);
    CHECK_THROWS_AS(metrics(ConfusionMatrix{-1, 2, 0, 0}), InvalidArgument);
    const std::vector<int> p{0, 1, 2}, y{0, 1, 1};
    CHECK_THROWS_AS(confusion(p, y), InvalidArgument);
    const std::vector<int> shorter{0, 1};
    CHECK_THROWS_AS(confusion(shorter, y), InvalidArgument);
}

TEST_CASE("percent rounds half up", "[metrics]") {
    CHECK(percent(0.97285) == 97.29);
    CHECK(percent(0.5) == 50.0);
    CHECK(percent(0.123449) == 12.34);
    CHECK(percent(1.0 / 3.0, 1) == 33.3);
    CHECK(percent(-0.00125) == -0.13);
}

TEST_CASE("report gap, JSON and CSV", "[metrics]") {
    SymbolicModel sm;
    sm.widths = {1, 1};
    FittedEdge f;
    f.prim = Primitive::X;
    f.c = 2.0;
    f.d = -1.0;
    f.r2 = 0.99;
    sm.edges = {{0, 0, 0, f, false}};
    sm.expr = compose(sm.widths, sm.edges);
    const std::vector<int> y{1, 1, 0, 0, 1, 0, 1, 0};
    const std::vector<int> model{1, 1, 0, 0, 1, 0, 1, 1};
    const std::vector<int> xi{1, 0, 0, 0, 1, 0, 1, 1};
    const EvaluationReport r = make_report("experiment2", model, xi, y, sm);
    CHECK(r.gap() == Approx(12.5));
    CHECK(r.gap_flagged());
    CHECK(r.formula == "2*x1 - 1");

    const nlohmann::json j = to_json(r);
    CHECK(j["experiment"] == "experiment2");
    CHECK(j["model"]["metrics"]["accuracy"] == 87.5);
    CHECK(j["xi"]["metrics"]["accuracy"] == 75.0);
    CHECK(j["model"]["confusion"]["percent"]["fp"] == 12.5);
    CHECK(j["accuracy_gap"] == 12.5);
    CHECK(j["gap_flagged"] == true);
    CHECK(j["edges"][0]["primitive"] == "x");

    std::ostringstream os;
    write_metrics_csv(r, os);
    CHECK(os.str() ==
          "approach,experiment,accuracy,precision,recall,f1\n"
          "kan,experiment2,87.50,80.00,100.00,88.89\n"
          "xi,experiment2,75.00,75.00,75.00,75.00\n");

    const auto dir = std::filesystem::temp_directory_path() / "agckan_test_report";
    std::filesystem::create_directories(dir);
    write_report(r, dir);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "metrics.csv"));
    std::filesystem::remove_all(dir);

    const EvaluationReport close = make_report("experiment1", model, model, y, sm);
    CHECK_FALSE(close.gap_flagged());
}
