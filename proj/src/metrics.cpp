#include "agckan/metrics.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "agckan/errors.hpp"

namespace agckan {

namespace {

constexpr int kReportVersion = 1;

nlohmann::json metrics_json(const Metrics& m) {
    return {{"accuracy", percent(m.accuracy)},
            {"precision", percent(m.precision)},
            {"recall", percent(m.recall)},
            {"f1", percent(m.f1)}};
}

nlohmann::json cm_json(const ConfusionMatrix& cm) {
    const auto p = cm.percentages();
    auto round2 = [](double v) { return std::floor(v * 100.0 + 0.5 + 1e-9) / 100.0; };
    return {{"tp", cm.tp},
            {"tn", cm.tn},
            {"fp", cm.fp},
            {"fn", cm.fn},
            {"percent", {{"tp", round2(p.tp)}, {"tn", round2(p.tn)}, {"fp", round2(p.fp)}, {"fn", round2(p.fn)}}}};
}

}  // namespace

ConfusionMatrix ConfusionMatrix::percentages() const {
    const double n = total();
    if (!(n > 0.0)) throw InvalidArgument("confusion matrix is empty");
    return {100.0 * tp / n, 100.0 * tn / n, 100.0 * fp / n, 100.0 * fn / n};
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) throw InvalidArgument("confusion: length mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int p = predictions[i], y = labels[i];
        if ((p != 0 && p != 1) || (y != 0 && y != 1))
            throw InvalidArgument("confusion: values must be 0 or 1");
        if (p == 1 && y == 1) cm.tp += 1;
        else if (p == 0 && y == 0) cm.tn += 1;
        else if (p == 1) cm.fp += 1;
        else cm.fn += 1;
    }
    return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
    if (cm.tp < 0 || cm.tn < 0 || cm.fp < 0 || cm.fn < 0)
        throw InvalidArgument("metrics: negative cell");
    const double n = cm.total();
    if (!(n > 0.0)) throw InvalidArgument("metrics: empty confusion matrix");
    Metrics m;
    m.accuracy = (cm.tp + cm.tn) / n;
    m.precision = cm.tp + cm.fp > 0.0 ? cm.tp / (cm.tp + cm.fp) : 0.0;
    m.recall = cm.tp + cm.fn > 0.0 ? cm.tp / (cm.tp + cm.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

double percent(double fraction, int digits) {
    const double scale = std::pow(10.0, digits);
    const double v = std::floor(std::abs(fraction) * 100.0 * scale + 0.5 + 1e-9) / scale;
    return fraction < 0.0 ? -v : v;
}

double EvaluationReport::gap() const { return 100.0 * std::abs(model.accuracy - xi.accuracy); }

EvaluationReport make_report(std::string experiment, std::span<const int> model_pred,
                             std::span<const int> xi_pred, std::span<const int> labels,
                             const SymbolicModel& model) {
    EvaluationReport r;
    r.experiment = std::move(experiment);
    r.model_cm = confusion(model_pred, labels);
    r.xi_cm = confusion(xi_pred, labels);
    r.model = metrics(r.model_cm);
    r.xi = metrics(r.xi_cm);
    r.edges = model.edges;
    r.formula = render(model);
    r.legend = render_legend(model);
    return r;
}

nlohmann::json to_json(const EvaluationReport& r) {
    nlohmann::json j;
    j["version"] = kReportVersion;
    j["experiment"] = r.experiment;
    j["model"] = {{"metrics", metrics_json(r.model)}, {"confusion", cm_json(r.model_cm)}};
    j["xi"] = {{"metrics", metrics_json(r.xi)}, {"confusion", cm_json(r.xi_cm)}};
    j["accuracy_gap"] = std::floor(r.gap() * 100.0 + 0.5 + 1e-9) / 100.0;
    j["gap_threshold"] = kGapThreshold;
    j["gap_flagged"] = r.gap_flagged();
    auto& edges = j["edges"] = nlohmann::json::array();
    for (const auto& e : r.edges)
        edges.push_back({{"layer", e.layer},
                         {"in", e.in},
                         {"out", e.out},
                         {"primitive", std::string(primitive_name(e.fit.prim))},
                         {"r2", e.fit.r2}});
    j["formula"] = r.formula;
    j["legend"] = r.legend;
    if (!r.manifest_digest.empty()) j["manifest_digest"] = r.manifest_digest;
    return j;
}

void write_metrics_csv(const EvaluationReport& r, std::ostream& os) {
    os << "approach,experiment,accuracy,precision,recall,f1\n";
    char buf[160];
    for (const auto& [name, m] : {std::pair<const char*, const Metrics&>{"kan", r.model},
                                  std::pair<const char*, const Metrics&>{"xi", r.xi}}) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.2f,%.2f,%.2f,%.2f\n", name, r.experiment.c_str(),
                      percent(m.accuracy), percent(m.precision), percent(m.recall), percent(m.f1));
        os << buf;
    }
}

void write_report(const EvaluationReport& r, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const auto json_path = dir / "report.json";
    std::ofstream js(json_path, std::ios::trunc);
    if (!js) throw IoError("cannot open " + json_path.string() + " for writing");
    js << to_json(r).dump(2) << '\n';
    if (!js) throw IoError("error writing " + json_path.string());
    const auto csv_path = dir / "metrics.csv";
    std::ofstream cs(csv_path, std::ios::trunc);
    if (!cs) throw IoError("cannot open " + csv_path.string() + " for writing");
    write_metrics_csv(r, cs);
    if (!cs) throw IoError("error writing " + csv_path.string());
}

}  // namespace agckan
