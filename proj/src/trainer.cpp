#include "agckan/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <numeric>
#include <optional>
#include <ostream>

#include <nlohmann/json.hpp>

#include "agckan/errors.hpp"

namespace agckan {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Objective restricted to the trainable coordinates.
class Problem {
public:
    Problem(const KanNetwork& net, const Batch& batch, double lambda)
        : work_(net), batch_(batch), obj_{LossKind::BceWithLogits, lambda}, mask_(trainable_mask(net)) {}

    double operator()(const std::vector<double>& x, std::vector<double>& g) {
        set_parameters(work_, x);
        const double f = evaluate_objective(work_, batch_, obj_, &g);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!mask_[i]) g[i] = 0.0;
        ++evaluations_;
        return f;
    }

    std::size_t evaluations() const { return evaluations_; }

private:
    KanNetwork work_;
    const Batch& batch_;
    Objective obj_;
    std::vector<char> mask_;
    std::size_t evaluations_ = 0;
};

struct Point {
    double alpha = 0.0;
    double f = 0.0;
    double dphi = 0.0;
    std::vector<double> g;
};

struct LineSearch {
    Problem& problem;
    const std::vector<double>& x0;
    const std::vector<double>& d;
    double f0;
    double dphi0;
    double c1;
    double c2;
    std::size_t budget;

    std::vector<double> trial;

    Point eval(double alpha) {
        trial.resize(x0.size());
        for (std::size_t i = 0; i < x0.size(); ++i) trial[i] = x0[i] + alpha * d[i];
        Point p;
        p.alpha = alpha;
        p.f = problem(trial, p.g);
        p.dphi = dot(p.g, d);
        --budget;
        return p;
    }

    bool armijo(const Point& p) const { return p.f <= f0 + c1 * p.alpha * dphi0; }
    bool curvature(const Point& p) const { return std::abs(p.dphi) <= -c2 * dphi0; }

    static double cubic_min(const Point& lo, const Point& hi) {
        const double d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (lo.alpha - hi.alpha);
        const double rad = d1 * d1 - lo.dphi * hi.dphi;
        if (!(rad >= 0.0)) return std::nan("");
        const double d2 = std::copysign(std::sqrt(rad), hi.alpha - lo.alpha);
        return hi.alpha -
               (hi.alpha - lo.alpha) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
    }

    std::optional<Point> zoom(Point lo, Point hi) {
        while (budget > 0) {
            const double a = std::min(lo.alpha, hi.alpha);
            const double b = std::max(lo.alpha, hi.alpha);
            const double margin = 0.1 * (b - a);
            if (b - a < 1e-14 * std::max(1.0, b)) return std::nullopt;
            double alpha = cubic_min(lo, hi);
            if (!std::isfinite(alpha) || alpha < a + margin || alpha > b - margin)
                alpha = 0.5 * (a + b);
            Point p = eval(alpha);
            if (!std::isfinite(p.f)) {
                hi = std::move(p);
                continue;
            }
            if (!armijo(p) || p.f >= lo.f) {
                hi = std::move(p);
            } else {
                if (curvature(p)) return p;
                if (p.dphi * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = std::move(p);
            }
        }
        return std::nullopt;
    }

    std::optional<Point> run(double alpha) {
        Point prev;
        prev.alpha = 0.0;
        prev.f = f0;
        prev.dphi = dphi0;
        for (std::size_t i = 0; budget > 0; ++i) {
            Point p = eval(alpha);
            if (!std::isfinite(p.f)) {
                // overshoot into a non-finite region: shrink towards the last good point
                return zoom(prev, std::move(p));
            }
            if (!armijo(p) || (i > 0 && p.f >= prev.f)) return zoom(prev, std::move(p));
            if (curvature(p)) return p;
            if (p.dphi >= 0.0) return zoom(std::move(p), prev);
            prev = std::move(p);
            alpha *= 2.0;
        }
        return std::nullopt;
    }
};

std::vector<double> lbfgs_direction(const std::vector<double>& g,
                                    const std::deque<std::vector<double>>& s,
                                    const std::deque<std::vector<double>>& y) {
    std::vector<double> q = g;
    const std::size_t m = s.size();
    std::vector<double> rho(m), alpha(m);
    for (std::size_t i = m; i-- > 0;) {
        rho[i] = 1.0 / dot(y[i], s[i]);
        alpha[i] = rho[i] * dot(s[i], q);
        for (std::size_t k = 0; k < q.size(); ++k) q[k] -= alpha[i] * y[i][k];
    }
    if (m > 0) {
        const double gamma = dot(s[m - 1], y[m - 1]) / dot(y[m - 1], y[m - 1]);
        for (double& v : q) v *= gamma;
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double beta = rho[i] * dot(y[i], q);
        for (std::size_t k = 0; k < q.size(); ++k) q[k] += s[i][k] * (alpha[i] - beta);
    }
    for (double& v : q) v = -v;
    return q;
}

TrainReport optimize(KanNetwork& net, const Batch& train_set, const Batch& val_set,
                     const TrainConfig& config) {
    validate(config);
    validate(net);
    if (train_set.size() == 0) throw InvalidArgument("train: empty training set");

    Problem problem(net, train_set, config.lambda);
    std::vector<double> x = get_parameters(net);
    std::vector<double> g;
    double f = problem(x, g);
    if (!std::isfinite(f)) throw InvalidArgument("train: objective is not finite at the start");

    std::deque<std::vector<double>> s_hist, y_hist;
    TrainReport report;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        bool fallback = false;
        const double gnorm = std::sqrt(dot(g, g));
        if (gnorm > 0.0) {
            std::vector<double> d = lbfgs_direction(g, s_hist, y_hist);
            double dphi0 = dot(g, d);
            if (!(dphi0 < 0.0)) {
                s_hist.clear();
                y_hist.clear();
                d = g;
                for (double& v : d) v = -v;
                dphi0 = -gnorm * gnorm;
            }
            const double alpha0 = s_hist.empty() ? std::min(1.0, 1.0 / gnorm) : 1.0;
            LineSearch ls{problem, x, d, f, dphi0, config.c1, config.c2, config.max_line_search, {}};
            std::optional<Point> step = ls.run(alpha0);

            if (step) {
                std::vector<double> s(x.size()), y(x.size());
                for (std::size_t i = 0; i < x.size(); ++i) {
                    s[i] = step->alpha * d[i];
                    y[i] = step->g[i] - g[i];
                    x[i] += s[i];
                }
                f = step->f;
                g = std::move(step->g);
                if (dot(s, y) > 1e-12 * std::sqrt(dot(y, y) * dot(s, s))) {
                    s_hist.push_back(std::move(s));
                    y_hist.push_back(std::move(y));
                    if (s_hist.size() > config.history) {
                        s_hist.pop_front();
                        y_hist.pop_front();
                    }
                }
            } else {
                // steepest descent with Armijo backtracking; memory is discarded
                fallback = true;
                s_hist.clear();
                y_hist.clear();
                std::vector<double> trial(x.size()), gt;
                double alpha = 1.0 / gnorm;
                for (int k = 0; k < 60; ++k, alpha *= 0.5) {
                    for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] - alpha * g[i];
                    const double ft = problem(trial, gt);
                    if (std::isfinite(ft) && ft <= f - config.c1 * alpha * gnorm * gnorm) {
                        x = trial;
                        f = ft;
                        g = gt;
                        break;
                    }
                }
            }
        }
        set_parameters(net, x);
        report.loss.push_back(f);
        report.train_acc.push_back(accuracy(net, train_set));
        report.val_acc.push_back(val_set.size() ? accuracy(net, val_set) : 0.0);
        report.fallback.push_back(fallback ? 1 : 0);
    }
    set_parameters(net, x);
    report.parameter_digest = parameter_digest(net);
    return report;
}

}  // namespace

void validate(const TrainConfig& c) {
    // zero epochs is allowed and leaves the network unchanged
    if (!(c.c1 > 0.0 && c.c1 < c.c2 && c.c2 < 1.0))
        throw InvalidArgument("Wolfe constants must satisfy 0 < c1 < c2 < 1");
    if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) throw InvalidArgument("lambda must be >= 0");
    if (c.history < 1) throw InvalidArgument("L-BFGS history must be >= 1");
    if (c.max_line_search < 2) throw InvalidArgument("line search budget must be >= 2");
}

std::size_t TrainReport::fallback_count() const {
    return static_cast<std::size_t>(std::count(fallback.begin(), fallback.end(), 1));
}

double bce_with_logits(std::span<const double> logits, std::span<const double> labels) {
    if (logits.size() != labels.size())
        throw InvalidArgument("bce_with_logits: length mismatch");
    if (logits.empty()) throw InvalidArgument("bce_with_logits: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i], y = labels[i];
        if (y != 0.0 && y != 1.0) throw InvalidArgument("bce_with_logits: labels must be 0 or 1");
        s += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    return s / static_cast<double>(logits.size());
}

std::vector<int> predict(const KanNetwork& net, const Batch& batch) {
    std::vector<int> out(batch.size());
    for (std::size_t r = 0; r < batch.size(); ++r) out[r] = forward(net, batch.row(r)) > 0.0 ? 1 : 0;
    return out;
}

double accuracy(const KanNetwork& net, const Batch& batch) {
    if (batch.size() == 0) return 0.0;
    const auto p = predict(net, batch);
    std::size_t hit = 0;
    for (std::size_t r = 0; r < batch.size(); ++r) hit += (p[r] == static_cast<int>(batch.targets[r]));
    return static_cast<double>(hit) / static_cast<double>(batch.size());
}

TrainReport train(KanNetwork& net, const Batch& train_set, const Batch& val_set,
                  const TrainConfig& config) {
    validate(config);
    if (config.grid_update && config.epochs > 0) update_grid(net, train_set);
    TrainReport r = optimize(net, train_set, val_set, config);
    net.metadata["train"] = {{"config", config}, {"report", r}};
    return r;
}

TrainReport finetune(KanNetwork& net, const Batch& train_set, const Batch& val_set,
                     const TrainConfig& config) {
    TrainReport r = optimize(net, train_set, val_set, config);
    net.metadata["finetune"] = {{"config", config}, {"report", r}};
    return r;
}

std::vector<std::vector<double>> edge_importance(const KanNetwork& net, const Batch& batch) {
    if (batch.size() == 0) throw InvalidArgument("edge_importance: empty batch");
    std::vector<std::vector<double>> score(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) score[l].assign(net.layers[l].edges.size(), 0.0);
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto acts = activations(net, batch.row(r));
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            const auto& layer = net.layers[l];
            for (std::size_t i = 0; i < layer.in_dim; ++i)
                for (std::size_t j = 0; j < layer.out_dim; ++j)
                    score[l][i * layer.out_dim + j] += std::abs(layer.edge(i, j).eval(acts[l][i]));
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& s : score)
        for (double& v : s) v *= inv;
    return score;
}

bool has_active_path(const KanNetwork& net) {
    std::vector<char> reach(net.widths.front(), 1);
    for (const auto& layer : net.layers) {
        std::vector<char> next(layer.out_dim, 0);
        for (std::size_t i = 0; i < layer.in_dim; ++i) {
            if (!reach[i]) continue;
            for (std::size_t j = 0; j < layer.out_dim; ++j)
                if (layer.edge(i, j).active) next[j] = 1;
        }
        reach = std::move(next);
    }
    return std::any_of(reach.begin(), reach.end(), [](char c) { return c != 0; });
}

KanNetwork prune(const KanNetwork& net, const Batch& batch, double theta) {
    if (!(theta >= 0.0)) throw InvalidArgument("prune: threshold must be >= 0");
    const auto score = edge_importance(net, batch);
    KanNetwork out = net;

    auto deactivate = [](EdgeActivation& e) {
        e.active = false;
        std::fill(e.coef.begin(), e.coef.end(), 0.0);
        e.w_base = 0.0;
        e.w_spline = 0.0;
    };

    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        auto& layer = out.layers[l];
        for (std::size_t e = 0; e < layer.edges.size(); ++e)
            if (layer.edges[e].active && score[l][e] < theta) deactivate(layer.edges[e]);
    }
    // hidden nodes: the outputs of layer l-1 feed layer l
    for (std::size_t l = 1; l < out.layers.size(); ++l) {
        auto& prev = out.layers[l - 1];
        auto& next = out.layers[l];
        for (std::size_t h = 0; h < next.in_dim; ++h) {
            double best_in = 0.0, best_out = 0.0;
            for (std::size_t i = 0; i < prev.in_dim; ++i)
                best_in = std::max(best_in, score[l - 1][i * prev.out_dim + h]);
            for (std::size_t j = 0; j < next.out_dim; ++j)
                best_out = std::max(best_out, score[l][h * next.out_dim + j]);
            if (best_in < theta || best_out < theta) {
                for (std::size_t i = 0; i < prev.in_dim; ++i) deactivate(prev.edge(i, h));
                for (std::size_t j = 0; j < next.out_dim; ++j) deactivate(next.edge(h, j));
            }
        }
    }
    if (!has_active_path(out))
        throw DegenerateNetwork("pruning at threshold " + std::to_string(theta) +
                                " leaves no path from input to output");
    out.metadata["prune"] = {{"threshold", theta}, {"active_edges", out.active_edge_count()}};
    return out;
}

std::uint64_t parameter_digest(const KanNetwork& net) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& l : net.layers)
        for (const auto& e : l.edges) {
            feed(e.active ? 1 : 0);
            feed(std::bit_cast<std::uint64_t>(e.grid.lo));
            feed(std::bit_cast<std::uint64_t>(e.grid.hi));
            for (double c : e.coef) feed(std::bit_cast<std::uint64_t>(c));
            feed(std::bit_cast<std::uint64_t>(e.w_base));
            feed(std::bit_cast<std::uint64_t>(e.w_spline));
        }
    return h;
}

void write_report_csv(const TrainReport& r, std::ostream& os) {
    os << "epoch,loss,train_acc,val_acc\n";
    char buf[128];
    for (std::size_t i = 0; i < r.loss.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.6f,%.6f\n", i + 1, r.loss[i], r.train_acc[i],
                      r.val_acc[i]);
        os << buf;
    }
}

void to_json(nlohmann::json& j, const TrainReport& r) {
    std::vector<int> fb(r.fallback.begin(), r.fallback.end());
    char digest[17];
    std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(r.parameter_digest));
    j = {{"loss", r.loss},
         {"train_acc", r.train_acc},
         {"val_acc", r.val_acc},
         {"fallback", fb},
         {"parameter_digest", digest}};
}

void from_json(const nlohmann::json& j, TrainReport& r) {
    r.loss = j.at("loss").get<std::vector<double>>();
    r.train_acc = j.at("train_acc").get<std::vector<double>>();
    r.val_acc = j.at("val_acc").get<std::vector<double>>();
    const auto fb = j.at("fallback").get<std::vector<int>>();
    r.fallback.assign(fb.begin(), fb.end());
    r.parameter_digest = std::stoull(j.at("parameter_digest").get<std::string>(), nullptr, 16);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs},   {"history", c.history}, {"c1", c.c1},
         {"c2", c.c2},           {"lambda", c.lambda},   {"seed", c.seed},
         {"max_line_search", c.max_line_search}, {"grid_update", c.grid_update}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.epochs = j.value("epochs", d.epochs);
    c.history = j.value("history", d.history);
    c.c1 = j.value("c1", d.c1);
    c.c2 = j.value("c2", d.c2);
    c.lambda = j.value("lambda", d.lambda);
    c.seed = j.value("seed", d.seed);
    c.max_line_search = j.value("max_line_search", d.max_line_search);
    c.grid_update = j.value("grid_update", d.grid_update);
    validate(c);
}

}  // namespace agckan
