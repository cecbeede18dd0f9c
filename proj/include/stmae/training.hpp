#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stmae/data.hpp"
#include "stmae/masking.hpp"
#include "stmae/metrics.hpp"
#include "stmae/model.hpp"
#include "stmae/params.hpp"

namespace stmae {

/// full: walk spatial + patch temporal masking. NT: spatial only. NS: temporal
/// only. U: uniform edge sampling + per-step temporal masking. baseline: no
/// pretraining.
enum class Variant { full, NT, NS, U, baseline };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
inline const std::vector<Variant> kAllVariants = {Variant::baseline, Variant::NT, Variant::NS,
                                                  Variant::U, Variant::full};

/// Every hyperparameter of a run. JSON keys match the field names except
/// lambda ("lambda"), walk_p ("p") and walk_q ("q").
struct RunConfig {
    // masking / pretext
    double p_s = 0.3;
    double p_t = 0.3;
    std::size_t patch_length = 2;
    double walk_p = 1.0;
    double walk_q = 1.0;
    std::size_t walk_length = 8;
    double lambda = 1.0;
    bool negative_sampling = false;
    bool mask_per_window = false;  // one plan per window instead of per batch
    Variant variant = Variant::full;

    // optimization
    std::size_t pretrain_epochs = 100;
    std::size_t finetune_epochs = 100;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::size_t max_train_windows = 0;  // 0 keeps every training window

    // model
    GraphMode graph_mode = GraphMode::predefined;
    std::size_t history = 12;
    std::size_t horizon = 12;
    std::size_t hidden_dim = 16;
    std::size_t node_embed_dim = 8;
    std::size_t topk = 8;

    // synthetic data (generate / train without an input directory)
    SynthConfig data;

    /// Throws std::invalid_argument naming the offending key.
    void validate() const;
    WalkConfig walk() const;
    EncoderConfig encoder(std::size_t n_nodes, std::size_t n_features) const;

    nlohmann::json to_json() const;
    /// Starts from defaults; unknown keys and out-of-range values are rejected
    /// with the key name.
    static RunConfig from_json(const nlohmann::json& j);
    /// Applies one "key=value" assignment (value parsed as JSON, falling back
    /// to a bare string).
    void set(const std::string& key, const std::string& value);
};

// Losses --------------------------------------------------------------------

/// Mean absolute error over all elements.
Tensor loss_pred(const Tensor& prediction, const Tensor& target);

/// -mean log A_uv over masked pairs (read with u < v), per window when A is
/// batched. Negative pairs, when given, add -log(1 - A_uv) terms to the same
/// mean. Zero (constant) when there are no masked edges.
Tensor loss_spatial(const Tensor& reconstructed_adjacency, const EdgeSet& masked,
                    const EdgeSet& negatives = {});

/// Mean |X_hat - X| over positions inside masked patches; zero when no patch
/// is masked. Tensors are [H, N, C] or [B, H, N, C].
Tensor loss_temporal(const Tensor& reconstruction, const Tensor& target,
                     const std::vector<bool>& patch_mask, std::size_t patch_length);

/// lambda * l_spatial + l_temporal.
Tensor loss_pretrain(const Tensor& l_spatial, const Tensor& l_temporal, double lambda);

/// Up to `count` distinct non-adjacent pairs drawn uniformly.
EdgeSet sample_negative_pairs(const Graph& g, std::size_t count, Rng& rng);

// Steps ---------------------------------------------------------------------

/// How many times each sampler ran.
struct SamplerAudit {
    std::size_t walk_spatial = 0;
    std::size_t uniform_spatial = 0;
    std::size_t patch_temporal = 0;
    std::size_t uniform_temporal = 0;
};

struct MaskStreams {
    Rng spatial;
    Rng temporal;
    Rng negative;

    static MaskStreams from_seed(std::uint64_t seed);
};

/// Samples the step's masks according to cfg.variant.
MaskPlan sample_mask_plan(const Graph& mask_graph, const RunConfig& cfg, MaskStreams& streams,
                          SamplerAudit* audit = nullptr);

/// Parameters updated in each stage.
ParameterTree pretrain_parameters(Model& model);
ParameterTree finetune_parameters(Model& model);

struct PretrainLoss {
    Tensor total;
    Tensor spatial;
    Tensor temporal;
};

/// Masked forward pass and reconstruction losses for a fixed plan. `x` is
/// [H, N, C] or [B, H, N, C]; `mask_graph` is the graph the plan was drawn
/// on (the predefined graph, or the learned-graph snapshot in adaptive mode).
PretrainLoss pretrain_loss(const Model& model, const Tensor& x, const Graph& mask_graph,
                           const MaskPlan& plan, double lambda, const EdgeSet& negatives = {});

struct StepResult {
    double loss = 0.0;
    double loss_spatial = 0.0;
    double loss_temporal = 0.0;
    std::vector<MaskPlan> plans;  // one, or one per window with mask_per_window
};

/// Fresh mask plan(s), masked forward, both reconstruction losses, one
/// optimizer step over pretrain_parameters. With mask_per_window every
/// window of a batched `x` gets its own plan and the losses are averaged.
StepResult pretrain_step(const Tensor& x, const Graph& mask_graph, Model& model, Adam& optimizer,
                         const RunConfig& cfg, MaskStreams& streams, SamplerAudit* audit = nullptr);

/// Unmasked forecast, L_pred, one optimizer step over finetune_parameters.
double finetune_step(const Tensor& x, const Tensor& y, const Graph& g, Model& model,
                     Adam& optimizer);

/// Graph that spatial masks are drawn on this epoch: the predefined graph, or
/// the top-k sparsified learned adjacency in adaptive mode.
Graph mask_graph_for_epoch(const Model& model, const Graph& g);

// Runs ----------------------------------------------------------------------

struct CurveRow {
    std::string stage;  // "pretrain" or "finetune"
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_mae;
};

std::string curve_csv(const std::vector<CurveRow>& rows);

struct PreparedData {
    Split split;
    Normalization norm;
    Graph graph;
    std::size_t n_nodes = 0;
    std::size_t n_features = 0;
};

/// z-score (fit on the first 60% of steps), windows, 6:2:2 split.
PreparedData prepare(const Dataset& raw, std::size_t history, std::size_t horizon);

/// Forward pass over `windows` without recording gradients.
MetricReport evaluate(const Model& model, const Graph& g, const std::vector<WindowPair>& windows,
                      const Normalization& norm, std::size_t batch_size = 64);

struct TwoStageResult {
    Model model;  // best validation-MAE checkpoint
    std::vector<CurveRow> curve;
    MetricReport val_report;
    MetricReport test_report;
    std::size_t best_epoch = 0;
    SamplerAudit audit;
    double pretrain_spatial_sum = 0.0;   // summed over every pretraining step
    double pretrain_temporal_sum = 0.0;
    std::size_t pretrain_steps = 0;
};

/// Pretraining (skipped for the baseline variant), then fine-tuning with
/// per-epoch validation; keeps the best validation-MAE parameters.
TwoStageResult run_two_stage(const RunConfig& cfg, const PreparedData& data);

/// Pretraining stage only, on an already initialized model.
std::vector<CurveRow> run_pretraining(const RunConfig& cfg, const PreparedData& data, Model& model,
                                      TwoStageResult* stats = nullptr);

/// Fine-tuning stage only; returns the best validation checkpoint.
Model run_finetuning(const RunConfig& cfg, const PreparedData& data, Model model,
                     std::vector<CurveRow>& curve, std::size_t* best_epoch = nullptr);

struct SearchGrid {
    std::vector<double> p;
    std::vector<double> q;
    std::vector<double> lambda;
    std::vector<double> p_s;
    std::vector<double> p_t;
};

struct GridCell {
    RunConfig config;
    double val_mae = 0.0;
};

struct GridSearchResult {
    RunConfig best;
    std::vector<GridCell> cells;  // declaration order
};

/// One run per cell (nested in the order p, q, lambda, p_s, p_t); picks the
/// lowest validation MAE, ties to lower p_s, then lower p_t, then the earlier
/// cell. Empty grid axes fall back to the base config's value.
GridSearchResult grid_search(const PreparedData& data, const RunConfig& base,
                             const SearchGrid& grid);

}  // namespace stmae
