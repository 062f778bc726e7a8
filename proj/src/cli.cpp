#include "agckan/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "agckan/dataset.hpp"
#include "agckan/errors.hpp"
#include "agckan/features.hpp"
#include "agckan/kan.hpp"
#include "agckan/metrics.hpp"
#include "agckan/symbolic.hpp"
#include "agckan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace agckan {

void to_json(json& j, const KanConfig& c) {
    j = {{"widths", c.widths},           {"grid_intervals", c.grid_intervals},
         {"spline_order", c.spline_order}, {"grid_lo", c.grid_lo},
         {"grid_hi", c.grid_hi},         {"init_coef_sd", c.init_coef_sd},
         {"init_w_base", c.init_w_base}, {"init_w_spline", c.init_w_spline}};
}

void from_json(const json& j, KanConfig& c) {
    const KanConfig d;
    c.widths = j.value("widths", d.widths);
    c.grid_intervals = j.value("grid_intervals", d.grid_intervals);
    c.spline_order = j.value("spline_order", d.spline_order);
    c.grid_lo = j.value("grid_lo", d.grid_lo);
    c.grid_hi = j.value("grid_hi", d.grid_hi);
    c.init_coef_sd = j.value("init_coef_sd", d.init_coef_sd);
    c.init_w_base = j.value("init_w_base", d.init_w_base);
    c.init_w_spline = j.value("init_w_spline", d.init_w_spline);
}

}  // namespace agckan

namespace agckan::cli {

namespace {

// ---- logging ----

enum class LogLevel { Quiet, Info, Debug };

LogLevel log_level() {
    const char* v = std::getenv("AGCKAN_LOG");
    if (!v) return LogLevel::Info;
    const std::string s = v;
    if (s == "quiet" || s == "error" || s == "0") return LogLevel::Quiet;
    if (s == "debug" || s == "2") return LogLevel::Debug;
    return LogLevel::Info;
}

void info(const std::string& msg) {
    if (log_level() != LogLevel::Quiet) std::cerr << "[agckan] " << msg << '\n';
}

void debug(const std::string& msg) {
    if (log_level() == LogLevel::Debug) std::cerr << "[agckan:debug] " << msg << '\n';
}

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + p.string() + " for writing");
    os << text;
    if (!os) throw IoError("error writing " + p.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::optional<std::string> closest(const std::string& word, const std::vector<std::string>& candidates) {
    std::optional<std::string> best;
    std::size_t best_d = 4;
    for (const auto& c : candidates) {
        const std::size_t d = edit_distance(word, c);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

std::string feature_schema() {
    std::string joined;
    for (const auto& c : feature_columns()) joined += c + ",";
    return "agckan-features/1:" + hex64(fnv1a(joined));
}

// ---- resolved settings ----

struct Settings {
    SimConfig sim;
    AttackConfig attack;
    DisturbanceConfig disturbance;
    double attacked_fraction = 0.5;
    std::array<double, 3> split{0.6, 0.2, 0.2};
    KanConfig kan;
    TrainConfig train;
    bool lambda_given = false;
    double threshold = 0.01;
    std::size_t symbolic_points = 1000;
    std::string mode = "experiment1";
    std::uint64_t seed = 0;
    std::size_t n = 2000;

    double lambda() const {
        if (lambda_given) return train.lambda;
        return mode == "experiment2" ? 1e-2 : 0.0;
    }
    TrainConfig train_config() const {
        TrainConfig c = train;
        c.lambda = lambda();
        c.seed = seed;
        return c;
    }
};

void apply_config_file(Settings& s, const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    try {
        if (j.contains("sim")) s.sim = j.at("sim").get<SimConfig>();
        if (j.contains("attack")) s.attack = j.at("attack").get<AttackConfig>();
        if (j.contains("disturbance")) s.disturbance = j.at("disturbance").get<DisturbanceConfig>();
        s.attacked_fraction = j.value("attacked_fraction", s.attacked_fraction);
        if (j.contains("split")) s.split = j.at("split").get<std::array<double, 3>>();
        if (j.contains("kan")) s.kan = j.at("kan").get<KanConfig>();
        if (j.contains("train")) {
            s.train = j.at("train").get<TrainConfig>();
            s.lambda_given = j.at("train").contains("lambda");
        }
        s.threshold = j.value("threshold", s.threshold);
        s.symbolic_points = j.value("symbolic_points", s.symbolic_points);
        s.mode = j.value("mode", s.mode);
        s.seed = j.value("seed", s.seed);
        s.n = j.value("n", s.n);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (s.mode != "experiment1" && s.mode != "experiment2")
        throw FormatError(path.string() + ": mode must be experiment1 or experiment2");
}

std::vector<std::size_t> parse_arch(const std::string& text) {
    std::vector<std::size_t> widths;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const long v = std::stol(item, &pos);
            if (pos != item.size() || v <= 0) throw std::invalid_argument(item);
            widths.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw UsageError("--arch: '" + item + "' is not a positive integer");
        }
    }
    if (widths.size() < 2) throw UsageError("--arch needs at least two widths, e.g. 18,5,1");
    if (widths.front() != kNumFeatures)
        throw UsageError("--arch must start with " + std::to_string(kNumFeatures) + " inputs");
    if (widths.back() != 1) throw UsageError("--arch must end with a single output");
    return widths;
}

// ---- manifests ----

struct Manifest {
    std::string subcommand;
    json config = json::object();
    json seeds = json::object();
    std::vector<std::pair<std::string, std::string>> inputs;  // path, content digest
    std::vector<std::string> outputs;

    void input(const fs::path& p) { inputs.emplace_back(p.string(), hex64(fnv1a(read_file(p)))); }

    // Identifies what was computed: paths and wall-clock are left out.
    std::string digest() const {
        json j = {{"tool", "agckan"}, {"version", kToolVersion}, {"subcommand", subcommand},
                  {"config", config}, {"seeds", seeds}};
        auto& in = j["inputs"] = json::array();
        for (const auto& [path, d] : inputs) in.push_back(d);
        return hex64(fnv1a(j.dump()));
    }

    void write(const fs::path& dir) const {
        json j = {{"tool", "agckan"}, {"version", kToolVersion}, {"subcommand", subcommand},
                  {"config", config}, {"seeds", seeds}, {"digest", digest()}};
        // files inside the output directory are recorded relative to it
        auto shown = [&dir](const std::string& path) {
            const fs::path rel = fs::path(path).lexically_relative(dir);
            return !rel.empty() && *rel.begin() != ".." ? rel.generic_string() : path;
        };
        auto& in = j["inputs"] = json::array();
        for (const auto& [path, d] : inputs) in.push_back({{"path", shown(path)}, {"digest", d}});
        auto& outs = j["outputs"] = json::array();
        for (const auto& o : outputs) outs.push_back(shown(o));
        const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        j["wall_clock"] = buf;
        write_text(dir / (subcommand + ".manifest.json"), j.dump(2) + "\n");
    }
};

json seeds_json(std::uint64_t seed) {
    return {{"seed", seed},
            {"dataset", derive_seed(seed, "dataset")},
            {"split", derive_seed(seed, "split")},
            {"init", derive_seed(seed, "init")},
            {"symbolic", derive_seed(seed, "symbolic")}};
}

// ---- data helpers ----

struct SplitData {
    Batch train, val, test;
    std::vector<int> test_labels;
};

FeatureTable load_features(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    try {
        return read_features_csv(is);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": feature schema mismatch: " + e.what());
    }
}

SplitData make_split(const FeatureTable& table, const Settings& s, const StandardizerStats& stats) {
    const SplitIndices sp = split(table.rows.size(), s.split, derive_seed(s.seed, "split"));
    SplitData out;
    auto fill = [&](const std::vector<std::size_t>& idx, Batch& b) {
        b.dim = kNumFeatures;
        for (std::size_t i : idx) b.add(standardize(table.rows[i], stats), table.labels[i]);
    };
    fill(sp.train, out.train);
    fill(sp.val, out.val);
    fill(sp.test, out.test);
    for (std::size_t i : sp.test) out.test_labels.push_back(table.labels[i]);
    return out;
}

StandardizerStats fit_on_train(const FeatureTable& table, const Settings& s) {
    const SplitIndices sp = split(table.rows.size(), s.split, derive_seed(s.seed, "split"));
    std::vector<FeatureVector> rows;
    for (std::size_t i : sp.train) rows.push_back(table.rows[i]);
    return fit_standardizer(rows);
}

KanNetwork load_model(const fs::path& path) {
    KanNetwork net = load_checkpoint(path);
    if (net.in_dim() != kNumFeatures)
        throw FormatError(path.string() + ": model expects " + std::to_string(net.in_dim()) +
                          " features, feature schema has " + std::to_string(kNumFeatures));
    const std::string schema = net.metadata.value("feature_schema", std::string());
    if (schema != feature_schema())
        throw FormatError(path.string() + ": model feature schema '" + schema +
                          "' does not match '" + feature_schema() + "'");
    if (!net.standardizer) throw FormatError(path.string() + ": model has no standardizer");
    return net;
}

void save_model(KanNetwork net, const fs::path& path, const Manifest& m) {
    net.metadata["manifest_digest"] = m.digest();
    save_checkpoint(net, path);
}

json split_json(const Settings& s) { return s.split; }

// ---- stages ----

void stage_gen_dataset(const Settings& s, const fs::path& out, bool csv) {
    ensure_dir(out);
    Manifest m;
    m.subcommand = "gen-dataset";
    m.config = {{"n", s.n},
                {"attacked_fraction", s.attacked_fraction},
                {"sim", s.sim},
                {"attack", s.attack},
                {"disturbance", s.disturbance}};
    m.seeds = seeds_json(s.seed);
    info("generating " + std::to_string(s.n) + " windows");
    const Dataset d =
        generate_dataset(s.n, s.attacked_fraction, s.sim, s.attack, derive_seed(s.seed, "dataset"), s.disturbance);
    write_dataset(d, out / "dataset.bin");
    m.outputs.push_back((out / "dataset.bin").string());
    if (csv) {
        std::ofstream os(out / "dataset.csv", std::ios::trunc);
        if (!os) throw IoError("cannot open " + (out / "dataset.csv").string());
        write_dataset_csv(d, os);
        m.outputs.push_back((out / "dataset.csv").string());
    }
    info("wrote " + (out / "dataset.bin").string() + " (" + std::to_string(d.attacked_count()) + " attacked)");
    m.write(out);
}

void stage_features(const Settings& s, const fs::path& dataset_path, const fs::path& out) {
    ensure_dir(out);
    Manifest m;
    m.subcommand = "features";
    m.config = {{"schema", feature_schema()}};
    m.seeds = seeds_json(s.seed);
    m.input(dataset_path);
    const Dataset d = read_dataset(dataset_path);
    const FeatureTable table = extract_table(d.samples);
    std::ostringstream os;
    write_features_csv(table, os);
    write_text(out / "features.csv", os.str());
    m.outputs.push_back((out / "features.csv").string());
    info("wrote " + (out / "features.csv").string());
    m.write(out);
}

void stage_train(const Settings& s, const fs::path& features_path, const fs::path& out) {
    ensure_dir(out);
    const TrainConfig tc = s.train_config();
    Manifest m;
    m.subcommand = "train";
    m.config = {{"kan", s.kan}, {"train", tc}, {"split", split_json(s)}, {"mode", s.mode}};
    m.seeds = seeds_json(s.seed);
    m.input(features_path);

    const FeatureTable table = load_features(features_path);
    const StandardizerStats stats = fit_on_train(table, s);
    const SplitData data = make_split(table, s, stats);
    Rng rng(derive_seed(s.seed, "init"));
    KanNetwork net = make_network(s.kan, rng);
    net.standardizer = stats;
    info("training [" + std::to_string(net.widths.size()) + " layers] for " + std::to_string(tc.epochs) +
         " iterations, lambda " + format_number(tc.lambda, 6));
    const TrainReport report = train(net, data.train, data.val, tc);
    for (std::size_t e = 0; e < report.loss.size(); ++e)
        debug("iter " + std::to_string(e + 1) + " loss " + std::to_string(report.loss[e]) + " train " +
              std::to_string(report.train_acc[e]) + " val " + std::to_string(report.val_acc[e]));
    net.metadata["seed"] = s.seed;
    net.metadata["split"] = split_json(s);
    net.metadata["feature_schema"] = feature_schema();
    net.metadata["mode"] = s.mode;
    save_model(net, out / "model_trained.json", m);
    std::ostringstream csv;
    write_report_csv(report, csv);
    write_text(out / "train_report.csv", csv.str());
    m.outputs = {(out / "model_trained.json").string(), (out / "train_report.csv").string()};
    if (!report.val_acc.empty())
        info("validation accuracy " + format_number(100.0 * report.val_acc.back(), 2) + "%");
    m.write(out);
}

void stage_prune(const Settings& s, const fs::path& model_path, const fs::path& features_path,
                 const fs::path& out) {
    ensure_dir(out);
    Manifest m;
    m.subcommand = "prune";
    m.config = {{"threshold", s.threshold}, {"split", split_json(s)}};
    m.seeds = seeds_json(s.seed);
    m.input(model_path);
    m.input(features_path);
    const KanNetwork net = load_model(model_path);
    const FeatureTable table = load_features(features_path);
    const SplitData data = make_split(table, s, *net.standardizer);
    const KanNetwork pruned = prune(net, data.train, s.threshold);
    info("pruned " + std::to_string(net.active_edge_count() - pruned.active_edge_count()) + " of " +
         std::to_string(net.active_edge_count()) + " edges at threshold " + format_number(s.threshold, 6));
    save_model(pruned, out / "model_pruned.json", m);
    m.outputs = {(out / "model_pruned.json").string()};
    m.write(out);
}

void stage_finetune(const Settings& s, const fs::path& model_path, const fs::path& features_path,
                    const fs::path& out) {
    ensure_dir(out);
    const TrainConfig tc = s.train_config();
    Manifest m;
    m.subcommand = "finetune";
    m.config = {{"train", tc}, {"split", split_json(s)}};
    m.seeds = seeds_json(s.seed);
    m.input(model_path);
    m.input(features_path);
    KanNetwork net = load_model(model_path);
    const FeatureTable table = load_features(features_path);
    const SplitData data = make_split(table, s, *net.standardizer);
    const TrainReport report = finetune(net, data.train, data.val, tc);
    save_model(net, out / "model_finetuned.json", m);
    std::ostringstream csv;
    write_report_csv(report, csv);
    write_text(out / "finetune_report.csv", csv.str());
    m.outputs = {(out / "model_finetuned.json").string(), (out / "finetune_report.csv").string()};
    if (!report.val_acc.empty())
        info("fine-tuned validation accuracy " + format_number(100.0 * report.val_acc.back(), 2) + "%");
    m.write(out);
}

void stage_symbolify(const Settings& s, const fs::path& model_path, const fs::path& features_path,
                     const fs::path& out) {
    ensure_dir(out);
    Manifest m;
    m.subcommand = "symbolify";
    json lib = json::array();
    for (Primitive p : kDefaultLibrary) lib.push_back(std::string(primitive_name(p)));
    m.config = {{"points", s.symbolic_points}, {"library", lib}, {"split", split_json(s)}};
    m.seeds = seeds_json(s.seed);
    m.input(model_path);
    m.input(features_path);
    const KanNetwork net = load_model(model_path);
    const FeatureTable table = load_features(features_path);
    const SplitData data = make_split(table, s, *net.standardizer);
    info("fitting " + std::to_string(net.active_edge_count()) + " edges to the primitive library");
    const SymbolicModel model =
        symbolify(net, data.train, derive_seed(s.seed, "symbolic"), kDefaultLibrary, s.symbolic_points);
    json j = model;
    j["manifest_digest"] = m.digest();
    write_text(out / "formula.json", j.dump(1) + "\n");
    write_text(out / "formula.txt", render(model) + "\n\n" + render_legend(model));
    std::ostringstream csv;
    write_r2_csv(model, csv);
    write_text(out / "symbolic_r2.csv", csv.str());
    m.outputs = {(out / "formula.json").string(), (out / "formula.txt").string(),
                 (out / "symbolic_r2.csv").string()};
    m.write(out);
}

void stage_eval(const Settings& s, const fs::path& model_path, const fs::path& formula_path,
                const fs::path& features_path, const std::optional<fs::path>& reference,
                const fs::path& out) {
    ensure_dir(out);
    Manifest m;
    m.subcommand = "eval";
    m.config = {{"mode", s.mode}, {"split", split_json(s)}};
    m.seeds = seeds_json(s.seed);
    m.input(model_path);
    m.input(formula_path);
    m.input(features_path);
    if (reference) m.input(*reference);

    const KanNetwork net = load_model(model_path);
    const SymbolicModel sym = load_symbolic(formula_path);
    if (sym.widths != net.widths) throw FormatError("formula and model have different architectures");
    const FeatureTable table = load_features(features_path);
    const SplitData data = make_split(table, s, *net.standardizer);

    const std::vector<int> model_pred = predict(net, data.test);
    std::vector<int> xi_pred(data.test.size(), 0);
    std::size_t failures = 0;
    for (std::size_t r = 0; r < data.test.size(); ++r) {
        try {
            xi_pred[r] = classify(eval_expression(sym, data.test.row(r)));
        } catch (const EvaluationError& e) {
            ++failures;
            debug(std::string("test row ") + std::to_string(r) + ": " + e.what());
        }
    }
    EvaluationReport report = make_report(s.mode, model_pred, xi_pred, data.test_labels, sym);
    report.manifest_digest = m.digest();
    json j = to_json(report);
    j["xi_evaluation_errors"] = failures;
    if (reference) {
        const KanNetwork ref = load_model(*reference);
        const ConfusionMatrix cm = confusion(predict(ref, data.test), data.test_labels);
        const Metrics rm = metrics(cm);
        j["reference"] = {{"accuracy", percent(rm.accuracy)},
                          {"precision", percent(rm.precision)},
                          {"recall", percent(rm.recall)},
                          {"f1", percent(rm.f1)},
                          {"accuracy_drop", std::floor(100.0 * (rm.accuracy - report.model.accuracy) * 100.0 + 0.5 + 1e-9) / 100.0}};
    }
    write_text(out / "report.json", j.dump(2) + "\n");
    std::ostringstream csv;
    write_metrics_csv(report, csv);
    write_text(out / "metrics.csv", csv.str());
    m.outputs = {(out / "report.json").string(), (out / "metrics.csv").string()};
    info("model accuracy " + format_number(100.0 * report.model.accuracy, 2) + "%, xi accuracy " +
         format_number(100.0 * report.xi.accuracy, 2) + "%, gap " + format_number(report.gap(), 2) +
         (report.gap_flagged() ? " points (above threshold)" : " points"));
    m.write(out);
}

void run_pipeline(const Settings& s, const fs::path& out, bool csv) {
    const auto t0 = std::chrono::steady_clock::now();
    stage_gen_dataset(s, out, csv);
    stage_features(s, out / "dataset.bin", out);
    stage_train(s, out / "features.csv", out);
    fs::path model = out / "model_trained.json";
    std::optional<fs::path> reference;
    if (s.mode == "experiment2") {
        stage_prune(s, model, out / "features.csv", out);
        stage_finetune(s, out / "model_pruned.json", out / "features.csv", out);
        reference = model;
        model = out / "model_finetuned.json";
    }
    stage_symbolify(s, model, out / "features.csv", out);
    stage_eval(s, model, out / "formula.json", out / "features.csv", reference, out);
    Manifest m;
    m.subcommand = "pipeline";
    m.config = {{"mode", s.mode}, {"n", s.n}};
    m.seeds = seeds_json(s.seed);
    m.write(out);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    info("pipeline finished in " + format_number(secs, 1) + " s");
}

// ---- simulate / plot ----

struct Window {
    DisturbanceSchedule disturbances;
    std::optional<AttackSpec> attack;
};

Window sample_window(const Settings& s, std::string_view stream, bool attacked,
                     const std::optional<std::string>& kind) {
    AttackConfig ac = s.attack;
    if (kind) {
        const AttackKind k = attack_kind_from_string(*kind);
        ac.weights.fill(0.0);
        ac.weights[static_cast<std::size_t>(k)] = 1.0;
    }
    Rng rng(derive_seed(s.seed, stream));
    Window w;
    w.disturbances = sample_disturbances(rng, s.disturbance);
    if (attacked) w.attack = sample_attack_spec(rng, ac);
    return w;
}

void stage_simulate(const Settings& s, bool attacked, const std::optional<std::string>& kind,
                    const fs::path& out) {
    ensure_dir(out);
    Manifest m;
    m.subcommand = "simulate";
    m.config = {{"sim", s.sim}, {"attack", s.attack}, {"disturbance", s.disturbance},
                {"attacked", attacked}, {"kind", kind ? *kind : ""}};
    m.seeds = {{"seed", s.seed}, {"simulate", derive_seed(s.seed, "simulate")}};
    const Window w = sample_window(s, "simulate", attacked, kind);
    const TimeSeriesSample sample = simulate(s.sim, w.disturbances, w.attack, derive_seed(s.seed, "simulate"));
    std::ostringstream csv;
    write_trace_csv(csv, sample, s.sim.record_dt);
    write_text(out / "trace.csv", csv.str());
    json j = {{"label", sample.label}, {"disturbances", w.disturbances}, {"manifest_digest", m.digest()}};
    if (w.attack) {
        j["attack"] = *w.attack;
        j["summary"] = summary(*w.attack);
    }
    write_text(out / "window.json", j.dump(2) + "\n");
    m.outputs = {(out / "trace.csv").string(), (out / "window.json").string()};
    info("wrote " + (out / "trace.csv").string());
    m.write(out);
}

std::string svg_plot(const TimeSeriesSample& clean, const TimeSeriesSample& attacked, double record_dt,
                     const std::optional<AttackSpec>& spec) {
    const double width = 760, panel = 200, left = 80, right = 20, top = 40, gap = 30;
    const double plot_w = width - left - right;
    const double height = top + kNumSignals * (panel + gap) + 20;
    const double horizon = record_dt * kNumSteps;
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                  "font-family=\"sans-serif\" font-size=\"12\">\n",
                  width, height);
    os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">"
       << (spec ? "normal vs attacked: " + summary(*spec) : std::string("normal window")) << "</text>\n";
    const char* units[kNumSignals] = {"pu", "Hz", "Hz"};
    for (std::size_t k = 0; k < kNumSignals; ++k) {
        const double y0 = top + k * (panel + gap);
        double lo = 0.0, hi = 0.0;
        for (const auto* s : {&clean, &attacked})
            for (double v : s->signals[k]) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        if (hi - lo < 1e-12) {
            lo -= 1e-3;
            hi += 1e-3;
        }
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
        auto px = [&](double t) { return left + plot_w * t / horizon; };
        auto py = [&](double v) { return y0 + panel * (hi - v) / (hi - lo); };
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#888\"/>\n",
                      left, y0, plot_w, panel);
        os << buf;
        os << "<text x=\"10\" y=\"" << y0 + panel / 2 << "\">" << signal_label(kAllSignals[k]) << " ["
           << units[k] << "]</text>\n";
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\">%.3g</text>\n", left - 60,
                      y0 + 10, hi);
        os << buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\">%.3g</text>\n", left - 60,
                      y0 + panel, lo);
        os << buf;
        if (spec) {
            std::snprintf(buf, sizeof buf,
                          "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#999\" "
                          "stroke-dasharray=\"4,3\"/>\n",
                          px(spec->onset), y0, px(spec->onset), y0 + panel);
            os << buf;
        }
        const std::pair<const TimeSeriesSample*, const char*> series[] = {{&clean, "#1f77b4"},
                                                                           {&attacked, "#d62728"}};
        for (const auto& [s, color] : series) {
            if (s == &attacked && !spec) continue;
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
            for (std::size_t i = 0; i < kNumSteps; ++i) {
                std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(record_dt * static_cast<double>(i)),
                              py(s->signals[k][i]));
                os << buf;
            }
            os << "\"/>\n";
        }
    }
    const double yl = top + kNumSignals * (panel + gap) - gap + 18;
    os << "<text x=\"" << left << "\" y=\"" << yl << "\">time [s]; blue: normal, red: attacked</text>\n";
    os << "</svg>\n";
    return os.str();
}

void stage_plot(const Settings& s, const std::optional<std::string>& kind, bool attacked, const fs::path& out) {
    ensure_dir(out);
    Manifest m;
    m.subcommand = "plot";
    m.config = {{"sim", s.sim}, {"attack", s.attack}, {"disturbance", s.disturbance},
                {"attacked", attacked}, {"kind", kind ? *kind : ""}};
    m.seeds = {{"seed", s.seed}, {"plot", derive_seed(s.seed, "plot")}};
    const Window w = sample_window(s, "plot", attacked, kind);
    const TimeSeriesSample clean = simulate(s.sim, w.disturbances, std::nullopt, derive_seed(s.seed, "plot"));
    const TimeSeriesSample hit = w.attack ? simulate(s.sim, w.disturbances, w.attack, derive_seed(s.seed, "plot")) : clean;
    write_text(out / "plot.svg", svg_plot(clean, hit, s.sim.record_dt, w.attack));
    m.outputs = {(out / "plot.svg").string()};
    info("wrote " + (out / "plot.svg").string());
    m.write(out);
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Interpretable FDIA detection for two-area AGC with Kolmogorov-Arnold networks", "agckan"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    std::map<const CLI::App*, std::vector<std::string>> flags;
    Settings defaults;

    std::string config_path;
    std::uint64_t seed = 0;
    std::size_t n = 2000;
    std::string arch, mode = "experiment1", out = ".";
    std::size_t epochs = 50;
    double lambda = 0.0, threshold = 0.01, fraction = 0.5;
    bool csv = false, attacked = false;
    std::string kind, dataset_in, features_in, model_in, formula_in, reference_in;

    struct Common {
        CLI::Option* config = nullptr;
        CLI::Option* seed = nullptr;
        CLI::Option* n = nullptr;
        CLI::Option* arch = nullptr;
        CLI::Option* epochs = nullptr;
        CLI::Option* lambda = nullptr;
        CLI::Option* threshold = nullptr;
        CLI::Option* mode = nullptr;
        CLI::Option* kind = nullptr;
        CLI::Option* reference = nullptr;
        CLI::Option* fraction = nullptr;
    };
    std::map<const CLI::App*, Common> common;

    auto add_sub = [&](const std::string& name, const std::string& desc, std::initializer_list<std::string> opts) {
        CLI::App* sub = app.add_subcommand(name, desc);
        Common& c = common[sub];
        auto& names = flags[sub];
        auto has = [&](const std::string& o) { return std::find(opts.begin(), opts.end(), o) != opts.end(); };
        c.config = sub->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
        names.push_back("--config");
        c.seed = sub->add_option("--seed", seed, "global seed");
        names.push_back("--seed");
        sub->add_option("--out", out, "output directory")->capture_default_str();
        names.push_back("--out");
        if (has("n")) {
            c.n = sub->add_option("--n", n, "number of windows")->check(CLI::Range(2, 100000000));
            c.fraction = sub->add_option("--fraction", fraction, "attacked fraction")->check(CLI::Range(0.0, 1.0));
            sub->add_flag("--csv", csv, "also write a long-format CSV of the dataset");
            names.insert(names.end(), {"--n", "--fraction", "--csv"});
        }
        if (has("arch")) {
            c.arch = sub->add_option("--arch", arch, "layer widths, e.g. 18,5,1");
            names.push_back("--arch");
        }
        if (has("epochs")) {
            c.epochs = sub->add_option("--epochs", epochs, "L-BFGS iterations");
            c.lambda = sub->add_option("--lambda", lambda, "sparsity weight")->check(CLI::NonNegativeNumber);
            names.insert(names.end(), {"--epochs", "--lambda"});
        }
        if (has("threshold")) {
            c.threshold = sub->add_option("--threshold", threshold, "pruning threshold")->check(CLI::NonNegativeNumber);
            names.push_back("--threshold");
        }
        if (has("mode")) {
            c.mode = sub->add_option("--mode", mode, "experiment1 or experiment2")
                         ->check(CLI::IsMember({"experiment1", "experiment2"}));
            names.push_back("--mode");
        }
        if (has("dataset")) {
            sub->add_option("--dataset", dataset_in, "dataset file (default <out>/dataset.bin)");
            names.push_back("--dataset");
        }
        if (has("features")) {
            sub->add_option("--features", features_in, "features CSV (default <out>/features.csv)");
            names.push_back("--features");
        }
        if (has("model")) {
            sub->add_option("--model", model_in, "model checkpoint");
            names.push_back("--model");
        }
        if (has("formula")) {
            sub->add_option("--formula", formula_in, "symbolic model (default <out>/formula.json)");
            c.reference = sub->add_option("--reference", reference_in, "unpruned model to compare against");
            names.insert(names.end(), {"--formula", "--reference"});
        }
        if (has("kind")) {
            c.kind = sub->add_option("--kind", kind, "attack kind")
                         ->check(CLI::IsMember({"step", "ramp", "pulse", "scaling", "combined"}));
            sub->add_flag("--attacked", attacked, "inject a sampled attack");
            names.insert(names.end(), {"--kind", "--attacked"});
        }
        names.insert(names.end(), {"--help"});
        return sub;
    };

    CLI::App* simulate_cmd = add_sub("simulate", "simulate one window and write its trace", {"kind"});
    CLI::App* gen_cmd = add_sub("gen-dataset", "generate a labeled dataset", {"n"});
    CLI::App* features_cmd = add_sub("features", "extract the 18 statistical features", {"dataset"});
    CLI::App* train_cmd = add_sub("train", "train a KAN", {"arch", "epochs", "mode", "features"});
    CLI::App* prune_cmd = add_sub("prune", "prune low-importance edges", {"threshold", "features", "model"});
    CLI::App* finetune_cmd = add_sub("finetune", "retrain the surviving edges", {"epochs", "mode", "features", "model"});
    CLI::App* symbolify_cmd = add_sub("symbolify", "fit edges to the primitive library", {"features", "model"});
    CLI::App* eval_cmd = add_sub("eval", "evaluate model and formula on the test split",
                                 {"mode", "features", "model", "formula"});
    CLI::App* pipeline_cmd =
        add_sub("pipeline", "run an experiment end to end", {"n", "arch", "epochs", "threshold", "mode"});
    CLI::App* plot_cmd = add_sub("plot", "write an SVG of normal vs attacked traces", {"kind"});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << '\n';
        std::vector<std::string> sub_names;
        for (const auto& [sub, names] : flags) sub_names.push_back(sub->get_name());
        const CLI::App* active = nullptr;
        for (int i = 1; i < argc; ++i) {
            const std::string tok = argv[i];
            for (const auto& [sub, names] : flags)
                if (sub->get_name() == tok) active = sub;
            if (!active && !tok.empty() && tok[0] != '-') {
                if (auto s = closest(tok, sub_names)) std::cerr << "did you mean '" << *s << "'?\n";
                break;
            }
            if (active && tok.rfind("--", 0) == 0) {
                const std::string name = tok.substr(0, tok.find('='));
                const auto& known = flags[active];
                if (std::find(known.begin(), known.end(), name) == known.end())
                    if (auto s = closest(name, known)) std::cerr << "did you mean '" << *s << "'?\n";
            }
        }
        std::cerr << "run 'agckan --help' for usage\n";
        return 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    const Common& c = common[sub];
    try {
        Settings s = defaults;
        if (c.config && c.config->count()) apply_config_file(s, config_path);
        if (c.seed->count()) s.seed = seed;
        if (c.n && c.n->count()) s.n = n;
        if (c.fraction && c.fraction->count()) {
            if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("--fraction must be in (0, 1)");
            s.attacked_fraction = fraction;
        }
        if (c.arch && c.arch->count()) s.kan.widths = parse_arch(arch);
        if (c.epochs && c.epochs->count()) s.train.epochs = epochs;
        if (c.lambda && c.lambda->count()) {
            s.train.lambda = lambda;
            s.lambda_given = true;
        }
        if (c.threshold && c.threshold->count()) s.threshold = threshold;
        if (c.mode && c.mode->count()) s.mode = mode;

        const fs::path outdir = out;
        auto or_default = [&](const std::string& given, const char* name) {
            return given.empty() ? outdir / name : fs::path(given);
        };
        // later stages reuse the seed recorded by train unless --seed is given
        auto adopt_model_seed = [&](const fs::path& model) {
            if (c.seed->count() || !fs::exists(model)) return;
            try {
                const json j = json::parse(read_file(model));
                if (j.contains("metadata") && j["metadata"].contains("seed"))
                    s.seed = j["metadata"]["seed"].get<std::uint64_t>();
            } catch (const json::exception&) {
                // load_model reports the problem
            }
        };

        if (sub == simulate_cmd) {
            stage_simulate(s, attacked || !kind.empty(),
                           kind.empty() ? std::nullopt : std::optional<std::string>(kind), outdir);
        } else if (sub == plot_cmd) {
            stage_plot(s, kind.empty() ? std::nullopt : std::optional<std::string>(kind), true, outdir);
        } else if (sub == gen_cmd) {
            stage_gen_dataset(s, outdir, csv);
        } else if (sub == features_cmd) {
            stage_features(s, or_default(dataset_in, "dataset.bin"), outdir);
        } else if (sub == train_cmd) {
            stage_train(s, or_default(features_in, "features.csv"), outdir);
        } else if (sub == prune_cmd) {
            const fs::path model = or_default(model_in, "model_trained.json");
            adopt_model_seed(model);
            stage_prune(s, model, or_default(features_in, "features.csv"), outdir);
        } else if (sub == finetune_cmd) {
            const fs::path model = or_default(model_in, "model_pruned.json");
            adopt_model_seed(model);
            if (!c.mode->count() && !s.lambda_given && fs::exists(model)) {
                const json j = json::parse(read_file(model), nullptr, false);
                if (!j.is_discarded() && j.contains("metadata") && j["metadata"].contains("mode"))
                    s.mode = j["metadata"]["mode"].get<std::string>();
            }
            stage_finetune(s, model, or_default(features_in, "features.csv"), outdir);
        } else if (sub == symbolify_cmd) {
            fs::path model = model_in;
            if (model.empty())
                model = fs::exists(outdir / "model_finetuned.json") ? outdir / "model_finetuned.json"
                                                                     : outdir / "model_trained.json";
            adopt_model_seed(model);
            stage_symbolify(s, model, or_default(features_in, "features.csv"), outdir);
        } else if (sub == eval_cmd) {
            fs::path model = model_in;
            if (model.empty())
                model = fs::exists(outdir / "model_finetuned.json") ? outdir / "model_finetuned.json"
                                                                     : outdir / "model_trained.json";
            adopt_model_seed(model);
            std::optional<fs::path> reference;
            if (!reference_in.empty()) reference = fs::path(reference_in);
            stage_eval(s, model, or_default(formula_in, "formula.json"), or_default(features_in, "features.csv"),
                       reference, outdir);
        } else if (sub == pipeline_cmd) {
            run_pipeline(s, outdir, csv);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace agckan::cli
