#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agckan/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = 0;
    std::string err;
};

RunResult run(std::vector<std::string> args) {
    args.insert(args.begin(), "agckan");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream captured;
    auto* old = std::cerr.rdbuf(captured.rdbuf());
    RunResult r;
    r.code = agckan::cli::run(static_cast<int>(argv.size()), argv.data());
    std::cerr.rdbuf(old);
    r.err = captured.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("agckan_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("gen-dataset is reproducible", "[cli]") {
    const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
    REQUIRE(run({"gen-dataset", "--n", "20", "--seed", "3", "--out", a.string(), "--csv"}).code == 0);
    REQUIRE(run({"gen-dataset", "--n", "20", "--seed", "3", "--out", b.string()}).code == 0);
    CHECK(slurp(a / "dataset.bin") == slurp(b / "dataset.bin"));
    CHECK(fs::exists(a / "dataset.csv"));
    CHECK_FALSE(fs::exists(b / "dataset.csv"));
    const auto manifest = nlohmann::json::parse(slurp(a / "gen-dataset.manifest.json"));
    CHECK(manifest["subcommand"] == "gen-dataset");
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("unknown flags and subcommands exit 1 with a suggestion", "[cli]") {
    auto r = run({"gen-dataset", "--seeed", "3"});
    CHECK(r.code == 1);
    CHECK(r.err.find("did you mean '--seed'?") != std::string::npos);
    r = run({"pipline", "--seed", "3"});
    CHECK(r.code == 1);
    CHECK(r.err.find("did you mean 'pipeline'?") != std::string::npos);
    r = run({"train", "--arch", "18,x,1"});
    CHECK(r.code == 1);
    r = run({"pipeline", "--mode", "experiment3"});
    CHECK(r.code == 1);
}

TEST_CASE("help exits 0", "[cli]") {
    std::ostringstream out;
    auto* old = std::cout.rdbuf(out.rdbuf());
    const auto r = run({"--help"});
    std::cout.rdbuf(old);
    CHECK(r.code == 0);
    CHECK(out.str().find("pipeline") != std::string::npos);
}

TEST_CASE("schema mismatches exit 2", "[cli]") {
    const fs::path d = fresh_dir("schema");
    {
        std::ofstream os(d / "features.csv");
        os << "a,b,c,label\n1,2,3,0\n";
    }
    auto r = run({"train", "--out", d.string(), "--epochs", "1"});
    CHECK(r.code == 2);
    CHECK(r.err.find("schema") != std::string::npos);

    REQUIRE(run({"gen-dataset", "--n", "40", "--seed", "1", "--out", d.string()}).code == 0);
    REQUIRE(run({"features", "--out", d.string()}).code == 0);
    REQUIRE(run({"train", "--out", d.string(), "--epochs", "1", "--arch", "18,2,1"}).code == 0);
    // a checkpoint from a different feature layout
    auto j = nlohmann::json::parse(slurp(d / "model_trained.json"));
    j["metadata"]["feature_schema"] = "agckan-features/1:0000";
    {
        std::ofstream os(d / "model_other.json");
        os << j.dump();
    }
    r = run({"eval", "--out", d.string(), "--model", (d / "model_other.json").string()});
    CHECK(r.code == 2);
    r = run({"features", "--out", d.string(), "--dataset", (d / "missing.bin").string()});
    CHECK(r.code == 2);
    fs::remove_all(d);
}

TEST_CASE("pipeline equals the individual stages", "[cli]") {
    const fs::path p = fresh_dir("pipe"), s = fresh_dir("stages");
    const std::vector<std::string> common{"--seed", "5"};
    REQUIRE(run({"pipeline", "--seed", "5", "--n", "120", "--epochs", "4", "--mode", "experiment2",
                 "--out", p.string()})
                .code == 0);
    REQUIRE(run({"gen-dataset", "--seed", "5", "--n", "120", "--out", s.string()}).code == 0);
    REQUIRE(run({"features", "--seed", "5", "--out", s.string()}).code == 0);
    REQUIRE(run({"train", "--seed", "5", "--epochs", "4", "--mode", "experiment2", "--out", s.string()}).code == 0);
    REQUIRE(run({"prune", "--seed", "5", "--out", s.string()}).code == 0);
    REQUIRE(run({"finetune", "--seed", "5", "--epochs", "4", "--mode", "experiment2", "--out", s.string()}).code == 0);
    REQUIRE(run({"symbolify", "--seed", "5", "--out", s.string()}).code == 0);
    REQUIRE(run({"eval", "--seed", "5", "--mode", "experiment2", "--out", s.string(), "--reference",
                 (s / "model_trained.json").string()})
                .code == 0);
    for (const char* f : {"dataset.bin", "features.csv", "model_trained.json", "model_pruned.json",
                          "model_finetuned.json", "formula.json", "formula.txt", "symbolic_r2.csv",
                          "metrics.csv", "train_report.csv", "finetune_report.csv"}) {
        INFO(f);
        REQUIRE(fs::exists(p / f));
        CHECK(slurp(p / f) == slurp(s / f));
    }
    auto rp = nlohmann::json::parse(slurp(p / "report.json"));
    auto rs = nlohmann::json::parse(slurp(s / "report.json"));
    CHECK(rp["model"] == rs["model"]);
    CHECK(rp["xi"] == rs["xi"]);
    CHECK(rp["formula"] == rs["formula"]);
    CHECK(rp.contains("reference"));
    fs::remove_all(p);
    fs::remove_all(s);
}

TEST_CASE("simulate and plot write their artifacts", "[cli]") {
    const fs::path d = fresh_dir("sim");
    REQUIRE(run({"simulate", "--seed", "2", "--kind", "ramp", "--out", d.string()}).code == 0);
    CHECK(fs::exists(d / "trace.csv"));
    CHECK(fs::exists(d / "window.json"));
    const auto w = nlohmann::json::parse(slurp(d / "window.json"));
    CHECK(w.dump().find("ramp") != std::string::npos);
    REQUIRE(run({"plot", "--seed", "2", "--out", d.string()}).code == 0);
    const std::string svg = slurp(d / "plot.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    fs::remove_all(d);
}
