#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "agckan/bspline.hpp"
#include "agckan/features.hpp"
#include "agckan/rng.hpp"

namespace agckan {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_deriv(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

/// One learnable univariate function: w_b * silu(x) + w_s * sum_i c_i B_i(x).
struct EdgeActivation {
    SplineGrid grid;
    std::vector<double> coef;
    double w_base = 1.0;
    double w_spline = 1.0;
    bool active = true;

    double spline(double x) const;
    double eval(double x) const;
    /// Value and d/dx.
    double eval(double x, double& dfdx) const;
};

/// Dense n x m layer; node j sums edge(i, j)(input_i) over i.
struct KanLayer {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::vector<EdgeActivation> edges;  ///< row-major by input: edges[i * out_dim + j]

    EdgeActivation& edge(std::size_t i, std::size_t j) { return edges[i * out_dim + j]; }
    const EdgeActivation& edge(std::size_t i, std::size_t j) const { return edges[i * out_dim + j]; }
};

struct KanConfig {
    std::vector<std::size_t> widths{kNumFeatures, 5, 1};
    std::size_t grid_intervals = 5;
    std::size_t spline_order = 3;
    double grid_lo = -3.0;
    double grid_hi = 3.0;
    double init_coef_sd = 0.1;
    double init_w_base = 1.0;
    double init_w_spline = 1.0;
};

struct KanNetwork {
    std::vector<std::size_t> widths;
    std::vector<KanLayer> layers;
    std::optional<StandardizerStats> standardizer;
    nlohmann::json metadata = nlohmann::json::object();

    std::size_t in_dim() const { return widths.front(); }
    std::size_t active_edge_count() const;
};

KanNetwork make_network(const KanConfig& config, Rng& rng);

/// Throws InvalidArgument if widths and layers disagree or the output is not scalar.
void validate(const KanNetwork& net);

/// Input must already be standardized; returns the logit.
double forward(const KanNetwork& net, std::span<const double> input);

/// Node values of every layer for one input: result[0] is the input itself,
/// result.back() the output.
std::vector<std::vector<double>> activations(const KanNetwork& net, std::span<const double> input);

/// Row-major inputs with one target per row.
struct Batch {
    std::size_t dim = 0;
    std::vector<double> inputs;
    std::vector<double> targets;

    std::size_t size() const { return targets.size(); }
    std::span<const double> row(std::size_t r) const {
        return {inputs.data() + r * dim, dim};
    }
    void add(std::span<const double> x, double y);
};

Batch make_batch(std::span<const FeatureVector> rows, std::span<const int> labels);

enum class LossKind { BceWithLogits, SquaredError };

struct Objective {
    LossKind loss = LossKind::BceWithLogits;
    /// Weight of the L1 penalty: sum over active edges of mean |activation| on the batch.
    double sparsity = 0.0;
};

// Flat parameter vector: per layer, per edge (row-major), [coef..., w_base, w_spline].
std::size_t parameter_count(const KanNetwork& net);
std::vector<double> get_parameters(const KanNetwork& net);
void set_parameters(KanNetwork& net, std::span<const double> params);
/// 1 for parameters of active edges, 0 for pruned ones.
std::vector<char> trainable_mask(const KanNetwork& net);

/// Objective value; fills `grad` (resized) with its exact gradient when non-null.
/// Inactive edges get zero gradient.
double evaluate_objective(const KanNetwork& net, const Batch& batch, const Objective& obj,
                          std::vector<double>* grad);

/// Gradient of the mean loss (no penalty).
std::vector<double> gradient(const KanNetwork& net, const Batch& batch, LossKind loss);

/// Re-fits spline coefficients so the edge approximates ys at xs (least squares),
/// keeping w_base and w_spline. Returns the RMS residual.
double fit_edge_coefficients(EdgeActivation& edge, std::span<const double> xs,
                             std::span<const double> ys);

/// Moves each edge's grid to cover the 1%..99% quantiles of its inputs on the
/// batch (padded by 10% of that range) when the current grid does not already
/// cover them, then re-fits coefficients to preserve the edge outputs.
void update_grid(KanNetwork& net, const Batch& batch);

nlohmann::json to_checkpoint(const KanNetwork& net);
KanNetwork from_checkpoint(const nlohmann::json& j);
void save_checkpoint(const KanNetwork& net, const std::filesystem::path& path);
KanNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace agckan
