#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agckan/kan.hpp"

namespace agckan {

enum class Primitive { X, X2, X3, X4, Exp, Log, Sqrt, Tanh, Sin, Tan, Abs };

inline constexpr std::array<Primitive, 11> kDefaultLibrary{
    Primitive::X,   Primitive::X2,   Primitive::X3,   Primitive::X4,  Primitive::Exp, Primitive::Log,
    Primitive::Sqrt, Primitive::Tanh, Primitive::Sin, Primitive::Tan, Primitive::Abs};

std::string_view primitive_name(Primitive p);
Primitive primitive_from_name(std::string_view name);

/// Guarded evaluation: log(|u| + 1e-8), sqrt(|u|); the rest are direct.
double apply_primitive(Primitive p, double u);
/// tan is flagged where |cos(u)| < 1e-6.
bool near_pole(Primitive p, double u);

/// c * f(a*x + b) + d
struct FittedEdge {
    Primitive prim = Primitive::X;
    double a = 1.0;
    double b = 0.0;
    double c = 0.0;
    double d = 0.0;
    double r2 = 0.0;

    double eval(double x) const { return c * apply_primitive(prim, a * x + b) + d; }
};

/// Grid search of (a, b) over [-10, 10]^2 (41 x 41), closed-form (c, d) for each
/// candidate, then local 5 x 5 refinements halving the pitch down to 1e-5.
/// Needs at least 10 samples.
FittedEdge fit_primitive(std::span<const double> xs, std::span<const double> ys, Primitive prim);

/// Best fit over the library; ties (R² within 1e-9) go to the earlier entry.
FittedEdge fit_best(std::span<const double> xs, std::span<const double> ys,
                    std::span<const Primitive> library = kDefaultLibrary);

/// Expression tree stored as an arena; node ids are preorder positions.
struct ExprNode {
    enum class Kind { Sum, Var, Apply };
    Kind kind = Kind::Sum;
    // Sum: constant + sum(coef * child)
    double constant = 0.0;
    std::vector<std::pair<double, std::size_t>> terms;
    // Var
    std::size_t var = 0;
    // Apply: prim(a * child + b)
    Primitive prim = Primitive::X;
    double a = 1.0;
    double b = 0.0;
    std::size_t child = 0;
};

struct Expression {
    std::vector<ExprNode> nodes;  ///< nodes[0] is the root
    std::size_t size() const { return nodes.size(); }
};

struct SymbolicEdge {
    std::size_t layer = 0;
    std::size_t in = 0;
    std::size_t out = 0;
    FittedEdge fit;
    bool pole = false;  ///< tan evaluated near a pole on the fitting samples
};

struct SymbolicModel {
    std::vector<std::size_t> widths;
    std::vector<SymbolicEdge> edges;  ///< active edges only
    std::optional<StandardizerStats> standardizer;
    Expression expr;
};

/// Builds the expression by substituting each node's symbolic input into its
/// outgoing edges; the x primitive is folded into linear terms.
Expression compose(const std::vector<std::size_t>& widths, const std::vector<SymbolicEdge>& edges);

/// Fits every active edge on up to `points` rows of the batch, chosen by `seed`.
SymbolicModel symbolify(const KanNetwork& net, const Batch& batch, std::uint64_t seed,
                        std::span<const Primitive> library = kDefaultLibrary,
                        std::size_t points = 1000);

/// Evaluates the expression on standardized features. Throws EvaluationError with
/// the node id when an intermediate value is not finite.
double eval_expression(const SymbolicModel& model, std::span<const double> fv);
double eval_expression(const Expression& expr, std::span<const double> fv);
inline int classify(double logit) { return logit > 0.0 ? 1 : 0; }

/// Display-only rounding; evaluation always uses full precision.
std::string render(const SymbolicModel& model, int precision = 2);
std::string render(const Expression& expr, int precision = 2);
/// Feature-name legend and guard notes for the variables in use.
std::string render_legend(const SymbolicModel& model);

/// Half-up rounding to `digits` decimals, formatted without trailing zeros.
std::string format_number(double v, int digits);

void to_json(nlohmann::json& j, const SymbolicModel& m);
void from_json(const nlohmann::json& j, SymbolicModel& m);
void save_symbolic(const SymbolicModel& m, const std::filesystem::path& path);
SymbolicModel load_symbolic(const std::filesystem::path& path);
/// layer,in,out,primitive,a,b,c,d,r2
void write_r2_csv(const SymbolicModel& m, std::ostream& os);

}  // namespace agckan
