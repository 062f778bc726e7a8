#include "agckan/symbolic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "agckan/errors.hpp"

namespace agckan {

namespace {

constexpr int kSymbolicVersion = 1;
constexpr const char* kSymbolicFormat = "agckan-symbolic";
constexpr double kTieTolerance = 1e-12;

template <Primitive P>
inline double prim_eval(double u) {
    if constexpr (P == Primitive::X) return u;
    else if constexpr (P == Primitive::X2) return u * u;
    else if constexpr (P == Primitive::X3) return u * u * u;
    else if constexpr (P == Primitive::X4) { const double s = u * u; return s * s; }
    else if constexpr (P == Primitive::Exp) return std::exp(u);
    else if constexpr (P == Primitive::Log) return std::log(std::abs(u) + 1e-8);
    else if constexpr (P == Primitive::Sqrt) return std::sqrt(std::abs(u));
    else if constexpr (P == Primitive::Tanh) return std::tanh(u);
    else if constexpr (P == Primitive::Sin) return std::sin(u);
    else if constexpr (P == Primitive::Tan) return std::tan(u);
    else return std::abs(u);
}

struct Candidate {
    double a = 1.0, b = 0.0, c = 0.0, d = 0.0;
    double r2 = -std::numeric_limits<double>::infinity();
};

// Sums for the closed-form (c, d) given f = prim(a x + b).
class AffineFitter {
public:
    AffineFitter(std::span<const double> xs, std::span<const double> ys) : xs_(xs) {
        const double n = static_cast<double>(ys.size());
        ymean_ = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
        yc_.resize(ys.size());
        for (std::size_t i = 0; i < ys.size(); ++i) {
            yc_[i] = ys[i] - ymean_;
            syy_ += yc_[i] * yc_[i];
        }
    }

    double ymean() const { return ymean_; }
    double syy() const { return syy_; }

    template <Primitive P>
    Candidate eval(double a, double b) const {
        Candidate out;
        out.a = a;
        out.b = b;
        const std::size_t n = xs_.size();
        const double f0 = prim_eval<P>(a * xs_[0] + b);
        double sg = 0.0, sgg = 0.0, sgy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = prim_eval<P>(a * xs_[i] + b) - f0;
            sg += g;
            sgg += g * g;
            sgy += g * yc_[i];
        }
        if (!std::isfinite(f0) || !std::isfinite(sgg) || !std::isfinite(sgy)) return out;
        const double var = sgg - sg * sg / static_cast<double>(n);
        if (!(var > 1e-300) || var <= 1e-14 * sgg) {
            out.c = 0.0;
            out.d = ymean_;
            out.r2 = 0.0;
            return out;
        }
        out.c = sgy / var;
        out.d = ymean_ - out.c * (f0 + sg / static_cast<double>(n));
        const double sse = std::max(0.0, syy_ - sgy * sgy / var);
        out.r2 = 1.0 - sse / syy_;
        if (!std::isfinite(out.c) || !std::isfinite(out.d)) out.r2 = -std::numeric_limits<double>::infinity();
        return out;
    }

private:
    std::span<const double> xs_;
    std::vector<double> yc_;
    double ymean_ = 0.0;
    double syy_ = 0.0;
};

// Among equal fits prefer the affine map closest to the identity.
bool better(const Candidate& cand, const Candidate& best) {
    if (cand.r2 > best.r2 + kTieTolerance) return true;
    if (cand.r2 < best.r2 - kTieTolerance) return false;
    const double dc = (cand.a - 1.0) * (cand.a - 1.0) + cand.b * cand.b;
    const double db = (best.a - 1.0) * (best.a - 1.0) + best.b * best.b;
    return dc < db;
}

template <Primitive P>
Candidate search(const AffineFitter& fitter) {
    Candidate best;
    for (int i = 0; i <= 40; ++i)
        for (int j = 0; j <= 40; ++j) {
            const Candidate c = fitter.eval<P>(-10.0 + 0.5 * i, -10.0 + 0.5 * j);
            if (better(c, best)) best = c;
        }
    for (double h = 0.25; h > 1e-5; h *= 0.5) {
        const double ca = best.a, cb = best.b;
        for (int i = -2; i <= 2; ++i)
            for (int j = -2; j <= 2; ++j) {
                if (i == 0 && j == 0) continue;
                const Candidate c = fitter.eval<P>(ca + h * i, cb + h * j);
                if (better(c, best)) best = c;
            }
    }
    return best;
}

Candidate search(Primitive p, const AffineFitter& f) {
    switch (p) {
        case Primitive::X: return f.eval<Primitive::X>(1.0, 0.0);
        case Primitive::X2: return search<Primitive::X2>(f);
        case Primitive::X3: return search<Primitive::X3>(f);
        case Primitive::X4: return search<Primitive::X4>(f);
        case Primitive::Exp: return search<Primitive::Exp>(f);
        case Primitive::Log: return search<Primitive::Log>(f);
        case Primitive::Sqrt: return search<Primitive::Sqrt>(f);
        case Primitive::Tanh: return search<Primitive::Tanh>(f);
        case Primitive::Sin: return search<Primitive::Sin>(f);
        case Primitive::Tan: return search<Primitive::Tan>(f);
        case Primitive::Abs: return search<Primitive::Abs>(f);
    }
    throw InvalidArgument("unknown primitive");
}

// ---- expression building ----

class Builder {
public:
    std::vector<ExprNode> nodes;

    std::size_t add(ExprNode n) {
        nodes.push_back(std::move(n));
        return nodes.size() - 1;
    }

    std::size_t var(std::size_t v) {
        ExprNode n;
        n.kind = ExprNode::Kind::Var;
        n.var = v;
        return add(n);
    }

    std::size_t sum() { return add(ExprNode{}); }

    std::size_t copy(std::size_t id) {
        ExprNode n = nodes[id];
        if (n.kind == ExprNode::Kind::Sum) {
            for (auto& t : n.terms) t.second = copy(t.second);
        } else if (n.kind == ExprNode::Kind::Apply) {
            n.child = copy(n.child);
        }
        return add(std::move(n));
    }

    // target += coef * subtree(u); Var terms with the same index are merged.
    void add_linear(std::size_t target, double coef, std::size_t u) {
        const ExprNode src = nodes[u];
        if (src.kind == ExprNode::Kind::Sum) {
            nodes[target].constant += coef * src.constant;
            for (const auto& t : src.terms) add_linear(target, coef * t.first, t.second);
            return;
        }
        if (src.kind == ExprNode::Kind::Var) {
            for (auto& t : nodes[target].terms) {
                const ExprNode& other = nodes[t.second];
                if (other.kind == ExprNode::Kind::Var && other.var == src.var) {
                    t.first += coef;
                    return;
                }
            }
        }
        const std::size_t c = copy(u);
        nodes[target].terms.emplace_back(coef, c);
    }

    void add_edge(std::size_t target, const FittedEdge& f, std::size_t u) {
        if (f.prim == Primitive::X) {
            add_linear(target, f.c * f.a, u);
            nodes[target].constant += f.c * f.b + f.d;
            return;
        }
        ExprNode ap;
        ap.kind = ExprNode::Kind::Apply;
        ap.prim = f.prim;
        ap.a = f.a;
        ap.b = f.b;
        ap.child = copy(u);
        const std::size_t id = add(ap);
        nodes[target].terms.emplace_back(f.c, id);
        nodes[target].constant += f.d;
    }

    std::size_t preorder(std::size_t id, std::vector<ExprNode>& out) const {
        const std::size_t me = out.size();
        out.push_back(nodes[id]);
        if (nodes[id].kind == ExprNode::Kind::Sum) {
            for (std::size_t k = 0; k < nodes[id].terms.size(); ++k) {
                const std::size_t c = preorder(nodes[id].terms[k].second, out);
                out[me].terms[k].second = c;
            }
        } else if (nodes[id].kind == ExprNode::Kind::Apply) {
            const std::size_t c = preorder(nodes[id].child, out);
            out[me].child = c;
        }
        return me;
    }
};

double eval_node(const Expression& e, std::size_t id, std::span<const double> fv) {
    const ExprNode& n = e.nodes[id];
    double v = 0.0;
    switch (n.kind) {
        case ExprNode::Kind::Var:
            v = fv[n.var];
            break;
        case ExprNode::Kind::Sum:
            v = n.constant;
            for (const auto& t : n.terms) v += t.first * eval_node(e, t.second, fv);
            break;
        case ExprNode::Kind::Apply:
            v = apply_primitive(n.prim, n.a * eval_node(e, n.child, fv) + n.b);
            break;
    }
    if (!std::isfinite(v))
        throw EvaluationError(static_cast<int>(id), "non-finite value at expression node " + std::to_string(id));
    return v;
}

bool is_compound(const Expression& e, std::size_t id) {
    const ExprNode& n = e.nodes[id];
    if (n.kind != ExprNode::Kind::Sum) return false;
    const bool has_const = n.constant != 0.0;
    return n.terms.size() + (has_const ? 1 : 0) > 1 || (n.terms.size() == 1 && n.terms[0].first != 1.0);
}

std::string render_node(const Expression& e, std::size_t id, int p);

std::string render_operand(const Expression& e, std::size_t id, int p) {
    std::string s = render_node(e, id, p);
    return is_compound(e, id) ? "(" + s + ")" : s;
}

std::string render_node(const Expression& e, std::size_t id, int p) {
    const ExprNode& n = e.nodes[id];
    switch (n.kind) {
        case ExprNode::Kind::Var:
            return "x" + std::to_string(n.var + 1);
        case ExprNode::Kind::Sum: {
            std::string out;
            auto append = [&out](bool negative, const std::string& body) {
                if (out.empty()) out = negative ? "-" + body : body;
                else out += (negative ? " - " : " + ") + body;
            };
            for (const auto& t : n.terms) {
                const std::string c = format_number(std::abs(t.first), p);
                const std::string operand = render_operand(e, t.second, p);
                append(t.first < 0.0 && c != "0", c == "1" ? operand : c + "*" + operand);
            }
            const std::string k = format_number(std::abs(n.constant), p);
            if (k != "0" || out.empty()) append(n.constant < 0.0 && k != "0", k);
            return out;
        }
        case ExprNode::Kind::Apply: {
            const std::string a = format_number(std::abs(n.a), p);
            const std::string u = render_operand(e, n.child, p);
            std::string inner = a == "1" ? u : a + "*" + u;
            if (n.a < 0.0 && a != "0") inner = "-" + inner;
            const std::string b = format_number(std::abs(n.b), p);
            const bool affine = b != "0";
            if (affine) inner += (n.b < 0.0 ? " - " : " + ") + b;
            const bool bare = !affine && inner.find_first_of(" *-(") == std::string::npos;
            switch (n.prim) {
                case Primitive::X: return "(" + inner + ")";
                case Primitive::X2: return (bare ? inner : "(" + inner + ")") + "^2";
                case Primitive::X3: return (bare ? inner : "(" + inner + ")") + "^3";
                case Primitive::X4: return (bare ? inner : "(" + inner + ")") + "^4";
                default: return std::string(primitive_name(n.prim)) + "(" + inner + ")";
            }
        }
    }
    return {};
}

void collect(const Expression& e, std::set<std::size_t>& vars, std::set<Primitive>& prims) {
    for (const auto& n : e.nodes) {
        if (n.kind == ExprNode::Kind::Var) vars.insert(n.var);
        if (n.kind == ExprNode::Kind::Apply) prims.insert(n.prim);
    }
}

}  // namespace

std::string_view primitive_name(Primitive p) {
    switch (p) {
        case Primitive::X: return "x";
        case Primitive::X2: return "x^2";
        case Primitive::X3: return "x^3";
        case Primitive::X4: return "x^4";
        case Primitive::Exp: return "exp";
        case Primitive::Log: return "log";
        case Primitive::Sqrt: return "sqrt";
        case Primitive::Tanh: return "tanh";
        case Primitive::Sin: return "sin";
        case Primitive::Tan: return "tan";
        case Primitive::Abs: return "abs";
    }
    return "?";
}

Primitive primitive_from_name(std::string_view name) {
    for (Primitive p : kDefaultLibrary)
        if (primitive_name(p) == name) return p;
    throw FormatError("unknown primitive '" + std::string(name) + "'");
}

double apply_primitive(Primitive p, double u) {
    switch (p) {
        case Primitive::X: return prim_eval<Primitive::X>(u);
        case Primitive::X2: return prim_eval<Primitive::X2>(u);
        case Primitive::X3: return prim_eval<Primitive::X3>(u);
        case Primitive::X4: return prim_eval<Primitive::X4>(u);
        case Primitive::Exp: return prim_eval<Primitive::Exp>(u);
        case Primitive::Log: return prim_eval<Primitive::Log>(u);
        case Primitive::Sqrt: return prim_eval<Primitive::Sqrt>(u);
        case Primitive::Tanh: return prim_eval<Primitive::Tanh>(u);
        case Primitive::Sin: return prim_eval<Primitive::Sin>(u);
        case Primitive::Tan: return prim_eval<Primitive::Tan>(u);
        case Primitive::Abs: return prim_eval<Primitive::Abs>(u);
    }
    throw InvalidArgument("unknown primitive");
}

bool near_pole(Primitive p, double u) { return p == Primitive::Tan && std::abs(std::cos(u)) < 1e-6; }

FittedEdge fit_primitive(std::span<const double> xs, std::span<const double> ys, Primitive prim) {
    if (xs.size() != ys.size()) throw InvalidArgument("fit_primitive: length mismatch");
    if (xs.size() < 10) throw InvalidArgument("fit_primitive: need at least 10 samples");
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
            throw InvalidArgument("fit_primitive: non-finite sample");

    AffineFitter fitter(xs, ys);
    FittedEdge out;
    out.prim = prim;
    if (fitter.syy() / static_cast<double>(ys.size()) < 1e-12) {
        out.a = 1.0;
        out.b = 0.0;
        out.c = 0.0;
        out.d = fitter.ymean();
        out.r2 = 1.0;
        return out;
    }
    const Candidate best = search(prim, fitter);
    if (!std::isfinite(best.r2)) {
        out.c = 0.0;
        out.d = fitter.ymean();
        out.r2 = 0.0;
        return out;
    }
    out.a = best.a;
    out.b = best.b;
    out.c = best.c;
    out.d = best.d;
    out.r2 = best.r2;
    return out;
}

FittedEdge fit_best(std::span<const double> xs, std::span<const double> ys,
                    std::span<const Primitive> library) {
    if (library.empty()) throw InvalidArgument("fit_best: empty library");
    FittedEdge best;
    bool have = false;
    for (Primitive p : library) {
        const FittedEdge f = fit_primitive(xs, ys, p);
        if (!have || f.r2 > best.r2 + 1e-9) {
            best = f;
            have = true;
        }
    }
    return best;
}

Expression compose(const std::vector<std::size_t>& widths, const std::vector<SymbolicEdge>& edges) {
    if (widths.size() < 2) throw InvalidArgument("compose: need at least two widths");
    Builder b;
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < widths[0]; ++i) current.push_back(b.var(i));
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        std::vector<std::size_t> next;
        for (std::size_t j = 0; j < widths[l + 1]; ++j) next.push_back(b.sum());
        for (const auto& e : edges) {
            if (e.layer != l) continue;
            if (e.in >= widths[l] || e.out >= widths[l + 1])
                throw InvalidArgument("compose: edge index out of range");
            b.add_edge(next[e.out], e.fit, current[e.in]);
        }
        current = std::move(next);
    }
    Expression expr;
    b.preorder(current.front(), expr.nodes);
    return expr;
}

SymbolicModel symbolify(const KanNetwork& net, const Batch& batch, std::uint64_t seed,
                        std::span<const Primitive> library, std::size_t points) {
    validate(net);
    if (batch.size() == 0) throw InvalidArgument("symbolify: empty batch");
    std::vector<std::size_t> rows(batch.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (rows.size() > points) {
        Rng rng(seed);
        for (std::size_t k = 0; k < points; ++k) std::swap(rows[k], rows[k + rng.index(rows.size() - k)]);
        rows.resize(points);
        std::sort(rows.begin(), rows.end());
    }

    struct Samples {
        std::vector<double> xs, ys;
    };
    std::vector<std::vector<Samples>> samples(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) samples[l].resize(net.layers[l].edges.size());
    for (std::size_t r : rows) {
        const auto acts = activations(net, batch.row(r));
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            const auto& layer = net.layers[l];
            for (std::size_t i = 0; i < layer.in_dim; ++i)
                for (std::size_t j = 0; j < layer.out_dim; ++j) {
                    const auto& e = layer.edge(i, j);
                    if (!e.active) continue;
                    auto& s = samples[l][i * layer.out_dim + j];
                    s.xs.push_back(acts[l][i]);
                    s.ys.push_back(e.eval(acts[l][i]));
                }
        }
    }

    SymbolicModel model;
    model.widths = net.widths;
    model.standardizer = net.standardizer;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        for (std::size_t i = 0; i < layer.in_dim; ++i)
            for (std::size_t j = 0; j < layer.out_dim; ++j) {
                if (!layer.edge(i, j).active) continue;
                const auto& s = samples[l][i * layer.out_dim + j];
                SymbolicEdge se{l, i, j, fit_best(s.xs, s.ys, library), false};
                for (double x : s.xs)
                    if (near_pole(se.fit.prim, se.fit.a * x + se.fit.b)) se.pole = true;
                model.edges.push_back(se);
            }
    }
    model.expr = compose(model.widths, model.edges);
    return model;
}

double eval_expression(const Expression& expr, std::span<const double> fv) {
    if (expr.nodes.empty()) throw InvalidArgument("eval_expression: empty expression");
    for (const auto& n : expr.nodes)
        if (n.kind == ExprNode::Kind::Var && n.var >= fv.size())
            throw InvalidArgument("eval_expression: feature vector too short");
    return eval_node(expr, 0, fv);
}

double eval_expression(const SymbolicModel& model, std::span<const double> fv) {
    if (!model.widths.empty() && fv.size() != model.widths.front())
        throw InvalidArgument("eval_expression: expected " + std::to_string(model.widths.front()) +
                              " features, got " + std::to_string(fv.size()));
    return eval_expression(model.expr, fv);
}

std::string format_number(double v, int digits) {
    const double scale = std::pow(10.0, digits);
    double r = std::floor(std::abs(v) * scale + 0.5 + 1e-9) / scale;
    if (r == 0.0) return "0";
    if (v < 0.0) r = -r;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, r);
    std::string s = buf;
    if (s.find('.') != std::string::npos) {
        while (s.back() == '0') s.pop_back();
        if (s.back() == '.') s.pop_back();
    }
    return s;
}

std::string render(const Expression& expr, int precision) {
    if (expr.nodes.empty()) return "0";
    return render_node(expr, 0, precision);
}

std::string render(const SymbolicModel& model, int precision) {
    return render(model.expr, precision);
}

std::string render_legend(const SymbolicModel& model) {
    std::set<std::size_t> vars;
    std::set<Primitive> prims;
    collect(model.expr, vars, prims);
    std::string out;
    for (std::size_t v : vars) {
        out += "x" + std::to_string(v + 1) + " = ";
        out += v < kNumFeatures ? feature_label(v) : "input " + std::to_string(v + 1);
        out += '\n';
    }
    if (prims.count(Primitive::Log)) out += "note: log(u) is evaluated as log(|u| + 1e-8)\n";
    if (prims.count(Primitive::Sqrt)) out += "note: sqrt(u) is evaluated as sqrt(|u|)\n";
    const auto poles = std::count_if(model.edges.begin(), model.edges.end(),
                                     [](const SymbolicEdge& e) { return e.pole; });
    if (poles > 0)
        out += "note: tan is evaluated within 1e-6 of a pole on " + std::to_string(poles) + " edge(s)\n";
    return out;
}

void to_json(nlohmann::json& j, const SymbolicModel& m) {
    j = nlohmann::json::object();
    j["format"] = kSymbolicFormat;
    j["version"] = kSymbolicVersion;
    j["widths"] = m.widths;
    auto& edges = j["edges"] = nlohmann::json::array();
    for (const auto& e : m.edges)
        edges.push_back({{"layer", e.layer},
                         {"in", e.in},
                         {"out", e.out},
                         {"primitive", std::string(primitive_name(e.fit.prim))},
                         {"a", e.fit.a},
                         {"b", e.fit.b},
                         {"c", e.fit.c},
                         {"d", e.fit.d},
                         {"r2", e.fit.r2},
                         {"pole", e.pole}});
    if (m.standardizer) j["standardizer"] = *m.standardizer;
    j["expression"] = render(m, 6);
}

void from_json(const nlohmann::json& j, SymbolicModel& m) {
    try {
        if (j.value("format", std::string()) != kSymbolicFormat)
            throw FormatError("not a symbolic model file");
        const int version = j.at("version").get<int>();
        if (version != kSymbolicVersion)
            throw FormatError("unsupported symbolic model version " + std::to_string(version));
        m = SymbolicModel{};
        m.widths = j.at("widths").get<std::vector<std::size_t>>();
        for (const auto& je : j.at("edges")) {
            SymbolicEdge e;
            e.layer = je.at("layer").get<std::size_t>();
            e.in = je.at("in").get<std::size_t>();
            e.out = je.at("out").get<std::size_t>();
            e.fit.prim = primitive_from_name(je.at("primitive").get<std::string>());
            e.fit.a = je.at("a").get<double>();
            e.fit.b = je.at("b").get<double>();
            e.fit.c = je.at("c").get<double>();
            e.fit.d = je.at("d").get<double>();
            e.fit.r2 = je.at("r2").get<double>();
            e.pole = je.value("pole", false);
            m.edges.push_back(e);
        }
        if (j.contains("standardizer")) m.standardizer = j.at("standardizer").get<StandardizerStats>();
        m.expr = compose(m.widths, m.edges);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed symbolic model: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("invalid symbolic model: ") + e.what());
    }
}

void save_symbolic(const SymbolicModel& m, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << nlohmann::json(m).dump(1) << '\n';
    if (!os) throw IoError("error writing " + path.string());
}

SymbolicModel load_symbolic(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return j.get<SymbolicModel>();
}

void write_r2_csv(const SymbolicModel& m, std::ostream& os) {
    os << "layer,in,out,primitive,a,b,c,d,r2\n";
    char buf[256];
    for (const auto& e : m.edges) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.layer, e.in,
                      e.out, std::string(primitive_name(e.fit.prim)).c_str(), e.fit.a, e.fit.b, e.fit.c,
                      e.fit.d, e.fit.r2);
        os << buf;
    }
}

}  // namespace agckan
