#include "agckan/kan.hpp"

#include <algorithm>
#include <fstream>

#include <Eigen/Dense>

#include "agckan/errors.hpp"

namespace agckan {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "agckan-kan";

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double quantile_sorted(const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

struct EdgeCache {
    LocalBasis basis;
    double base = 0.0;
    double spline = 0.0;
    double phi = 0.0;
    double dphi = 0.0;
};

}  // namespace

double EdgeActivation::spline(double x) const {
    const LocalBasis b = local_basis(x, grid);
    double s = 0.0;
    for (std::size_t r = 0; r < b.count; ++r) s += coef[b.first + r] * b.value[r];
    return s;
}

double EdgeActivation::eval(double x) const {
    if (!active) return 0.0;
    return w_base * silu(x) + w_spline * spline(x);
}

double EdgeActivation::eval(double x, double& dfdx) const {
    if (!active) {
        dfdx = 0.0;
        return 0.0;
    }
    const LocalBasis b = local_basis(x, grid);
    double s = 0.0, ds = 0.0;
    for (std::size_t r = 0; r < b.count; ++r) {
        s += coef[b.first + r] * b.value[r];
        ds += coef[b.first + r] * b.deriv[r];
    }
    dfdx = w_base * silu_deriv(x) + w_spline * ds;
    return w_base * silu(x) + w_spline * s;
}

std::size_t KanNetwork::active_edge_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
        for (const auto& e : l.edges) n += e.active ? 1 : 0;
    return n;
}

KanNetwork make_network(const KanConfig& config, Rng& rng) {
    if (config.widths.size() < 2) throw InvalidArgument("KAN needs at least two widths");
    for (std::size_t w : config.widths)
        if (w == 0) throw InvalidArgument("KAN widths must be positive");
    if (config.widths.back() != 1) throw InvalidArgument("KAN output width must be 1");

    const SplineGrid grid = SplineGrid::uniform(config.grid_lo, config.grid_hi,
                                                config.grid_intervals, config.spline_order);
    KanNetwork net;
    net.widths = config.widths;
    for (std::size_t l = 0; l + 1 < config.widths.size(); ++l) {
        KanLayer layer;
        layer.in_dim = config.widths[l];
        layer.out_dim = config.widths[l + 1];
        layer.edges.resize(layer.in_dim * layer.out_dim);
        for (auto& e : layer.edges) {
            e.grid = grid;
            e.coef.resize(grid.basis_count());
            for (double& c : e.coef) c = rng.normal(0.0, config.init_coef_sd);
            e.w_base = config.init_w_base;
            e.w_spline = config.init_w_spline;
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

void validate(const KanNetwork& net) {
    if (net.widths.size() != net.layers.size() + 1 || net.layers.empty())
        throw InvalidArgument("KAN: widths do not match layer count");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        if (layer.in_dim != net.widths[l] || layer.out_dim != net.widths[l + 1])
            throw InvalidArgument("KAN: layer dimensions do not match widths");
        if (layer.edges.size() != layer.in_dim * layer.out_dim)
            throw InvalidArgument("KAN: edge count does not match layer dimensions");
        for (const auto& e : layer.edges)
            if (e.coef.size() != e.grid.basis_count())
                throw InvalidArgument("KAN: coefficient count must equal G + k");
    }
    if (net.widths.back() != 1) throw InvalidArgument("KAN: output width must be 1");
}

std::vector<std::vector<double>> activations(const KanNetwork& net, std::span<const double> input) {
    if (input.size() != net.in_dim())
        throw InvalidArgument("forward: input has " + std::to_string(input.size()) +
                              " values, network expects " + std::to_string(net.in_dim()));
    std::vector<std::vector<double>> acts;
    acts.reserve(net.layers.size() + 1);
    acts.emplace_back(input.begin(), input.end());
    for (const auto& layer : net.layers) {
        const auto& in = acts.back();
        std::vector<double> out(layer.out_dim, 0.0);
        for (std::size_t i = 0; i < layer.in_dim; ++i)
            for (std::size_t j = 0; j < layer.out_dim; ++j) out[j] += layer.edge(i, j).eval(in[i]);
        acts.push_back(std::move(out));
    }
    return acts;
}

double forward(const KanNetwork& net, std::span<const double> input) {
    return activations(net, input).back()[0];
}

void Batch::add(std::span<const double> x, double y) {
    if (dim == 0 && targets.empty()) dim = x.size();
    if (x.size() != dim) throw InvalidArgument("batch: row dimension mismatch");
    inputs.insert(inputs.end(), x.begin(), x.end());
    targets.push_back(y);
}

Batch make_batch(std::span<const FeatureVector> rows, std::span<const int> labels) {
    if (rows.size() != labels.size()) throw InvalidArgument("make_batch: length mismatch");
    Batch b;
    b.dim = kNumFeatures;
    b.inputs.reserve(rows.size() * kNumFeatures);
    for (std::size_t r = 0; r < rows.size(); ++r) b.add(rows[r], static_cast<double>(labels[r]));
    return b;
}

std::size_t parameter_count(const KanNetwork& net) {
    std::size_t n = 0;
    for (const auto& l : net.layers)
        for (const auto& e : l.edges) n += e.coef.size() + 2;
    return n;
}

std::vector<double> get_parameters(const KanNetwork& net) {
    std::vector<double> p;
    p.reserve(parameter_count(net));
    for (const auto& l : net.layers)
        for (const auto& e : l.edges) {
            p.insert(p.end(), e.coef.begin(), e.coef.end());
            p.push_back(e.w_base);
            p.push_back(e.w_spline);
        }
    return p;
}

void set_parameters(KanNetwork& net, std::span<const double> p) {
    if (p.size() != parameter_count(net)) throw InvalidArgument("set_parameters: size mismatch");
    std::size_t k = 0;
    for (auto& l : net.layers)
        for (auto& e : l.edges) {
            for (double& c : e.coef) c = p[k++];
            e.w_base = p[k++];
            e.w_spline = p[k++];
        }
}

std::vector<char> trainable_mask(const KanNetwork& net) {
    std::vector<char> m;
    m.reserve(parameter_count(net));
    for (const auto& l : net.layers)
        for (const auto& e : l.edges) m.insert(m.end(), e.coef.size() + 2, e.active ? 1 : 0);
    return m;
}

double evaluate_objective(const KanNetwork& net, const Batch& batch, const Objective& obj,
                          std::vector<double>* grad) {
    if (batch.size() == 0) throw InvalidArgument("objective: empty batch");
    if (batch.dim != net.in_dim()) throw InvalidArgument("objective: batch dimension mismatch");

    const std::size_t n_layers = net.layers.size();
    std::vector<std::vector<std::size_t>> offset(n_layers);
    std::size_t total = 0;
    for (std::size_t l = 0; l < n_layers; ++l)
        for (const auto& e : net.layers[l].edges) {
            offset[l].push_back(total);
            total += e.coef.size() + 2;
        }
    if (grad) grad->assign(total, 0.0);

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const double penalty_scale = obj.sparsity * inv_n;

    std::vector<std::vector<double>> acts(n_layers + 1);
    std::vector<std::vector<EdgeCache>> cache(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        acts[l + 1].resize(net.layers[l].out_dim);
        cache[l].resize(net.layers[l].edges.size());
    }
    std::vector<double> delta, delta_in;

    double loss_sum = 0.0;
    double penalty_sum = 0.0;
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto x = batch.row(r);
        acts[0].assign(x.begin(), x.end());
        for (std::size_t l = 0; l < n_layers; ++l) {
            const auto& layer = net.layers[l];
            auto& out = acts[l + 1];
            std::fill(out.begin(), out.end(), 0.0);
            for (std::size_t i = 0; i < layer.in_dim; ++i) {
                const double a = acts[l][i];
                for (std::size_t j = 0; j < layer.out_dim; ++j) {
                    const std::size_t ei = i * layer.out_dim + j;
                    const auto& e = layer.edges[ei];
                    auto& c = cache[l][ei];
                    if (!e.active) {
                        c.phi = 0.0;
                        continue;
                    }
                    c.basis = local_basis(a, e.grid);
                    double s = 0.0, ds = 0.0;
                    for (std::size_t q = 0; q < c.basis.count; ++q) {
                        s += e.coef[c.basis.first + q] * c.basis.value[q];
                        ds += e.coef[c.basis.first + q] * c.basis.deriv[q];
                    }
                    c.base = silu(a);
                    c.spline = s;
                    c.phi = e.w_base * c.base + e.w_spline * s;
                    c.dphi = e.w_base * silu_deriv(a) + e.w_spline * ds;
                    out[j] += c.phi;
                    penalty_sum += std::abs(c.phi);
                }
            }
        }

        const double z = acts[n_layers][0];
        const double y = batch.targets[r];
        double dz = 0.0;
        if (obj.loss == LossKind::BceWithLogits) {
            loss_sum += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
            dz = sigmoid(z) - y;
        } else {
            loss_sum += 0.5 * (z - y) * (z - y);
            dz = z - y;
        }
        if (!grad) continue;

        delta.assign(1, dz * inv_n);
        for (std::size_t l = n_layers; l-- > 0;) {
            const auto& layer = net.layers[l];
            delta_in.assign(layer.in_dim, 0.0);
            for (std::size_t i = 0; i < layer.in_dim; ++i) {
                for (std::size_t j = 0; j < layer.out_dim; ++j) {
                    const std::size_t ei = i * layer.out_dim + j;
                    const auto& e = layer.edges[ei];
                    if (!e.active) continue;
                    const auto& c = cache[l][ei];
                    double g = delta[j];
                    if (penalty_scale != 0.0 && c.phi != 0.0)
                        g += c.phi > 0.0 ? penalty_scale : -penalty_scale;
                    double* gp = grad->data() + offset[l][ei];
                    for (std::size_t q = 0; q < c.basis.count; ++q)
                        gp[c.basis.first + q] += g * e.w_spline * c.basis.value[q];
                    const std::size_t nc = e.coef.size();
                    gp[nc] += g * c.base;
                    gp[nc + 1] += g * c.spline;
                    delta_in[i] += g * c.dphi;
                }
            }
            delta.swap(delta_in);
        }
    }
    return loss_sum * inv_n + obj.sparsity * penalty_sum * inv_n;
}

std::vector<double> gradient(const KanNetwork& net, const Batch& batch, LossKind loss) {
    std::vector<double> g;
    evaluate_objective(net, batch, Objective{loss, 0.0}, &g);
    return g;
}

double fit_edge_coefficients(EdgeActivation& edge, std::span<const double> xs,
                             std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.empty())
        throw InvalidArgument("fit_edge_coefficients: need matching non-empty samples");
    if (edge.w_spline == 0.0) throw InvalidArgument("fit_edge_coefficients: zero spline weight");
    const auto n = static_cast<Eigen::Index>(xs.size());
    const auto m = static_cast<Eigen::Index>(edge.grid.basis_count());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, m);
    Eigen::VectorXd b(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double x = xs[static_cast<std::size_t>(r)];
        const LocalBasis lb = local_basis(x, edge.grid);
        for (std::size_t q = 0; q < lb.count; ++q)
            A(r, static_cast<Eigen::Index>(lb.first + q)) = lb.value[q];
        b(r) = (ys[static_cast<std::size_t>(r)] - edge.w_base * silu(x)) / edge.w_spline;
    }
    const Eigen::VectorXd c = A.completeOrthogonalDecomposition().solve(b);
    for (Eigen::Index q = 0; q < m; ++q) edge.coef[static_cast<std::size_t>(q)] = c(q);
    const Eigen::VectorXd resid = (A * c - b) * edge.w_spline;
    return std::sqrt(resid.squaredNorm() / static_cast<double>(n));
}

void update_grid(KanNetwork& net, const Batch& batch) {
    if (batch.size() == 0) throw InvalidArgument("update_grid: empty batch");
    // node values per layer, per input node, over the batch
    std::vector<std::vector<std::vector<double>>> inputs(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        inputs[l].assign(net.layers[l].in_dim, std::vector<double>(batch.size()));
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto acts = activations(net, batch.row(r));
        for (std::size_t l = 0; l < net.layers.size(); ++l)
            for (std::size_t i = 0; i < net.layers[l].in_dim; ++i) inputs[l][i][r] = acts[l][i];
    }

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        for (std::size_t i = 0; i < layer.in_dim; ++i) {
            const auto& xs = inputs[l][i];
            std::vector<double> sorted = xs;
            std::sort(sorted.begin(), sorted.end());
            const double q_lo = quantile_sorted(sorted, 0.01);
            const double q_hi = quantile_sorted(sorted, 0.99);
            double span = q_hi - q_lo;
            if (!(span > 0.0)) span = std::max(1.0, std::abs(q_lo));
            const double new_lo = q_lo - 0.1 * span;
            const double new_hi = q_hi + 0.1 * span;

            for (std::size_t j = 0; j < layer.out_dim; ++j) {
                auto& e = layer.edge(i, j);
                if (e.grid.lo <= q_lo && e.grid.hi >= q_hi) continue;
                std::vector<double> target(xs.size());
                for (std::size_t r = 0; r < xs.size(); ++r) target[r] = e.spline(xs[r]);
                EdgeActivation refit = e;
                refit.grid = SplineGrid::uniform(new_lo, new_hi, e.grid.intervals, e.grid.order);
                refit.w_base = 0.0;
                refit.w_spline = 1.0;
                fit_edge_coefficients(refit, xs, target);
                e.grid = refit.grid;
                e.coef = refit.coef;
            }
        }
    }
}

nlohmann::json to_checkpoint(const KanNetwork& net) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["widths"] = net.widths;
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& layer : net.layers) {
        nlohmann::json jl{{"in_dim", layer.in_dim}, {"out_dim", layer.out_dim}};
        auto& edges = jl["edges"] = nlohmann::json::array();
        for (const auto& e : layer.edges) {
            edges.push_back({{"grid",
                              {{"lo", e.grid.lo},
                               {"hi", e.grid.hi},
                               {"intervals", e.grid.intervals},
                               {"order", e.grid.order}}},
                             {"coef", e.coef},
                             {"w_base", e.w_base},
                             {"w_spline", e.w_spline},
                             {"active", e.active}});
        }
        layers.push_back(std::move(jl));
    }
    if (net.standardizer) j["standardizer"] = *net.standardizer;
    j["metadata"] = net.metadata;
    return j;
}

KanNetwork from_checkpoint(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string()) != kCheckpointFormat)
            throw FormatError("not a KAN checkpoint");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion)
            throw FormatError("unsupported KAN checkpoint version " + std::to_string(version));
        KanNetwork net;
        net.widths = j.at("widths").get<std::vector<std::size_t>>();
        for (const auto& jl : j.at("layers")) {
            KanLayer layer;
            layer.in_dim = jl.at("in_dim").get<std::size_t>();
            layer.out_dim = jl.at("out_dim").get<std::size_t>();
            for (const auto& je : jl.at("edges")) {
                EdgeActivation e;
                const auto& g = je.at("grid");
                e.grid = SplineGrid::uniform(g.at("lo").get<double>(), g.at("hi").get<double>(),
                                             g.at("intervals").get<std::size_t>(),
                                             g.at("order").get<std::size_t>());
                e.coef = je.at("coef").get<std::vector<double>>();
                e.w_base = je.at("w_base").get<double>();
                e.w_spline = je.at("w_spline").get<double>();
                e.active = je.at("active").get<bool>();
                layer.edges.push_back(std::move(e));
            }
            net.layers.push_back(std::move(layer));
        }
        if (j.contains("standardizer")) net.standardizer = j.at("standardizer").get<StandardizerStats>();
        if (j.contains("metadata")) net.metadata = j.at("metadata");
        validate(net);
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed KAN checkpoint: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("invalid KAN checkpoint: ") + e.what());
    }
}

void save_checkpoint(const KanNetwork& net, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << to_checkpoint(net).dump(1) << '\n';
    if (!os) throw IoError("error writing " + path.string());
}

KanNetwork load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return from_checkpoint(j);
}

}  // namespace agckan
