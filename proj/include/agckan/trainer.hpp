#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agckan/kan.hpp"

namespace agckan {

struct TrainConfig {
    std::size_t epochs = 50;      ///< one epoch = one full-batch L-BFGS iteration
    std::size_t history = 10;
    double c1 = 1e-4;
    double c2 = 0.9;
    double lambda = 0.0;          ///< sparsity weight
    std::uint64_t seed = 0;
    std::size_t max_line_search = 25;
    /// train() moves spline grids onto the data range before iterating; finetune() never does.
    bool grid_update = true;
};

void validate(const TrainConfig& config);

struct TrainReport {
    std::vector<double> loss;       ///< objective after each iteration
    std::vector<double> train_acc;
    std::vector<double> val_acc;
    std::vector<char> fallback;     ///< 1 where the Wolfe search failed
    std::uint64_t parameter_digest = 0;

    std::size_t fallback_count() const;
};

/// Mean of max(z,0) - z*y + log1p(exp(-|z|)).
double bce_with_logits(std::span<const double> logits, std::span<const double> labels);

/// Fraction of rows where [logit > 0] equals the target.
double accuracy(const KanNetwork& net, const Batch& batch);
std::vector<int> predict(const KanNetwork& net, const Batch& batch);

/// L-BFGS with strong-Wolfe line search; only parameters of active edges move.
/// `val` may be empty, in which case validation accuracy is reported as 0.
TrainReport train(KanNetwork& net, const Batch& train_set, const Batch& val_set,
                  const TrainConfig& config);
/// Same mechanics as train; kept separate so pipelines read naturally.
TrainReport finetune(KanNetwork& net, const Batch& train_set, const Batch& val_set,
                     const TrainConfig& config);

/// Mean |edge(x_in)| over the batch for every edge, flattened per layer, row-major.
std::vector<std::vector<double>> edge_importance(const KanNetwork& net, const Batch& batch);

/// Deactivates edges scoring below theta and hidden nodes whose best incoming or
/// outgoing edge scores below theta. Throws DegenerateNetwork when no
/// input-to-output path survives.
KanNetwork prune(const KanNetwork& net, const Batch& batch, double theta);

/// True if some input reaches the output through active edges.
bool has_active_path(const KanNetwork& net);

std::uint64_t parameter_digest(const KanNetwork& net);

void write_report_csv(const TrainReport& report, std::ostream& os);
void to_json(nlohmann::json& j, const TrainReport& r);
void from_json(const nlohmann::json& j, TrainReport& r);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace agckan
