#include "stmae/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "stmae/csv.hpp"

namespace stmae {

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_indices(order, rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < n; i += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
    return batches;
}

std::vector<WindowPair> training_windows(const RunConfig& cfg, const PreparedData& data) {
    if (cfg.max_train_windows > 0) return subsample_windows(data.split.train, cfg.max_train_windows);
    return data.split.train;
}

/// Flat indices of pairs (u, v), u < v, in every [N, N] slice of `a`.
std::vector<std::size_t> pair_indices(const Tensor& a, const EdgeSet& pairs) {
    const std::size_t n = a.shape().back();
    const std::size_t slices = a.numel() / (n * n);
    std::vector<std::size_t> idx;
    idx.reserve(slices * pairs.size());
    for (std::size_t b = 0; b < slices; ++b)
        for (const auto& [u, v] : pairs) {
            if (u >= n || v >= n) throw std::invalid_argument("loss_spatial: edge out of range");
            idx.push_back(b * n * n + u * n + v);
        }
    return idx;
}

}  // namespace

// Losses --------------------------------------------------------------------

Tensor loss_pred(const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape())
        throw ShapeError("loss_pred: prediction " + shape_str(prediction.shape()) + " vs target " +
                         shape_str(target.shape()));
    return mean(abs(sub(prediction, target)));
}

Tensor loss_spatial(const Tensor& reconstructed_adjacency, const EdgeSet& masked,
                    const EdgeSet& negatives) {
    const Tensor& a = reconstructed_adjacency;
    if (a.rank() < 2 || a.dim(a.rank() - 1) != a.dim(a.rank() - 2))
        throw ShapeError("loss_spatial: expected [.., N, N], got " + shape_str(a.shape()));
    if (masked.empty()) return Tensor::scalar(0.0);
    const auto pos = pair_indices(a, masked);
    Tensor terms = neg(log(take(a, pos)));
    if (!negatives.empty()) {
        const auto negs = pair_indices(a, negatives);
        Tensor neg_terms = neg(log(shift(neg(take(a, negs)), 1.0)));
        terms = concat({terms, neg_terms}, 0);
    }
    return mean(terms);
}

Tensor loss_temporal(const Tensor& reconstruction, const Tensor& target,
                     const std::vector<bool>& patch_mask, std::size_t patch_length) {
    if (reconstruction.shape() != target.shape())
        throw ShapeError("loss_temporal: reconstruction " + shape_str(reconstruction.shape()) +
                         " vs target " + shape_str(target.shape()));
    if (reconstruction.rank() != 3 && reconstruction.rank() != 4)
        throw ShapeError("loss_temporal: expected [H,N,C] or [B,H,N,C], got " +
                         shape_str(reconstruction.shape()));
    const bool batched = reconstruction.rank() == 4;
    const std::size_t steps = reconstruction.dim(batched ? 1 : 0);
    if (patch_length < 1 || patch_mask.size() * patch_length != steps)
        throw ShapeError("loss_temporal: " + std::to_string(patch_mask.size()) +
                         " patches of length " + std::to_string(patch_length) + " do not cover " +
                         std::to_string(steps) + " steps");
    const auto step_mask = expand_patch_mask(patch_mask, patch_length);
    const std::size_t batch = batched ? reconstruction.dim(0) : 1;
    const std::size_t per_step = reconstruction.numel() / (batch * steps);
    std::vector<std::size_t> idx;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < steps; ++t)
            if (step_mask[t])
                for (std::size_t i = 0; i < per_step; ++i) idx.push_back((b * steps + t) * per_step + i);
    if (idx.empty()) return Tensor::scalar(0.0);
    return mean(abs(sub(take(reconstruction, idx), take(target, idx))));
}

Tensor loss_pretrain(const Tensor& l_spatial, const Tensor& l_temporal, double lambda) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    return add(scale(l_spatial, lambda), l_temporal);
}

EdgeSet sample_negative_pairs(const Graph& g, std::size_t count, Rng& rng) {
    std::vector<EdgeKey> pool;
    for (std::size_t u = 0; u < g.n_nodes(); ++u)
        for (std::size_t v = u + 1; v < g.n_nodes(); ++v)
            if (!g.has_edge(u, v)) pool.emplace_back(u, v);
    count = std::min(count, pool.size());
    EdgeSet out;
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + uniform_index(rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
        out.insert(pool[i]);
    }
    return out;
}

// Steps ---------------------------------------------------------------------

MaskStreams MaskStreams::from_seed(std::uint64_t seed) {
    return {make_stream(seed, "spatial-mask"), make_stream(seed, "temporal-mask"),
            make_stream(seed, "negative-pairs")};
}

MaskPlan sample_mask_plan(const Graph& mask_graph, const RunConfig& cfg, MaskStreams& streams,
                          SamplerAudit* audit) {
    MaskPlan plan;
    plan.p_s = cfg.p_s;
    plan.p_t = cfg.p_t;
    plan.patch_length = cfg.patch_length;
    const std::size_t n_patches = cfg.history / cfg.patch_length;
    plan.patch_mask.assign(n_patches, false);

    switch (cfg.variant) {
        case Variant::full:
        case Variant::NT: {
            auto sm = sample_spatial_mask(mask_graph, cfg.p_s, cfg.walk(), streams.spatial);
            plan.masked_edges = std::move(sm.edges);
            plan.walks = std::move(sm.walks);
            if (audit) ++audit->walk_spatial;
            break;
        }
        case Variant::U:
            plan.masked_edges = sample_uniform_spatial_mask(mask_graph, cfg.p_s, streams.spatial);
            if (audit) ++audit->uniform_spatial;
            break;
        case Variant::NS:
        case Variant::baseline:
            break;
    }
    switch (cfg.variant) {
        case Variant::full:
        case Variant::NS:
            plan.patch_mask = sample_temporal_mask(n_patches, cfg.p_t, streams.temporal);
            if (audit) ++audit->patch_temporal;
            break;
        case Variant::U:
            plan.patch_length = 1;
            plan.patch_mask = sample_uniform_temporal_mask(cfg.history, cfg.p_t, streams.temporal);
            if (audit) ++audit->uniform_temporal;
            break;
        case Variant::NT:
        case Variant::baseline:
            break;
    }
    return plan;
}

ParameterTree pretrain_parameters(Model& model) {
    return model.params().subset({param_group::embed, param_group::encoder,
                                  param_group::spatial_decoder, param_group::temporal_decoder,
                                  param_group::mask_token, param_group::node_embeddings});
}

ParameterTree finetune_parameters(Model& model) {
    return model.params().subset({param_group::embed, param_group::encoder,
                                  param_group::predictor, param_group::node_embeddings});
}

PretrainLoss pretrain_loss(const Model& model, const Tensor& x, const Graph& mask_graph,
                           const MaskPlan& plan, double lambda, const EdgeSet& negatives) {
    Tensor x_emb = model.embed_input(x);
    Tensor x_masked = apply_temporal_mask(x_emb, plan.patch_mask, plan.patch_length,
                                          model.params().get(param_group::mask_token));
    Tensor adj = model.config().graph_mode == GraphMode::adaptive
                     ? mask_adjacency(model.adjacency(mask_graph), plan.masked_edges)
                     : apply_spatial_mask(mask_graph, plan.masked_edges);
    Tensor state = model.encoder_forward(x_masked, adj);

    Tensor l_spatial = plan.masked_edges.empty()
                           ? Tensor::scalar(0.0)
                           : loss_spatial(model.spatial_decoder(state), plan.masked_edges, negatives);
    Tensor l_temporal = std::any_of(plan.patch_mask.begin(), plan.patch_mask.end(),
                                    [](bool b) { return b; })
                            ? loss_temporal(model.temporal_decoder(state), x, plan.patch_mask,
                                            plan.patch_length)
                            : Tensor::scalar(0.0);
    return {loss_pretrain(l_spatial, l_temporal, lambda), l_spatial, l_temporal};
}

StepResult pretrain_step(const Tensor& x, const Graph& mask_graph, Model& model, Adam& optimizer,
                         const RunConfig& cfg, MaskStreams& streams, SamplerAudit* audit) {
    StepResult r;
    const bool split = cfg.mask_per_window && x.rank() == 4;
    const std::size_t parts = split ? x.dim(0) : 1;
    std::vector<Tensor> totals, spatial, temporal;
    ParameterTree trainable = pretrain_parameters(model);
    trainable.zero_grad();
    for (std::size_t i = 0; i < parts; ++i) {
        MaskPlan plan = sample_mask_plan(mask_graph, cfg, streams, audit);
        EdgeSet negatives;
        if (cfg.negative_sampling && !plan.masked_edges.empty())
            negatives = sample_negative_pairs(mask_graph, plan.masked_edges.size(), streams.negative);
        const Tensor xi = split ? reshape(slice(x, 0, i, 1), {x.dim(1), x.dim(2), x.dim(3)}) : x;
        auto losses = pretrain_loss(model, xi, mask_graph, plan, cfg.lambda, negatives);
        totals.push_back(reshape(losses.total, {1}));
        spatial.push_back(reshape(losses.spatial, {1}));
        temporal.push_back(reshape(losses.temporal, {1}));
        r.plans.push_back(std::move(plan));
    }
    Tensor total = mean(concat(totals, 0));
    total.backward();
    optimizer.step(trainable);
    r.loss = total.item();
    {
        NoGradGuard no_grad;
        r.loss_spatial = mean(concat(spatial, 0)).item();
        r.loss_temporal = mean(concat(temporal, 0)).item();
    }
    return r;
}

double finetune_step(const Tensor& x, const Tensor& y, const Graph& g, Model& model,
                     Adam& optimizer) {
    ParameterTree trainable = finetune_parameters(model);
    trainable.zero_grad();
    Tensor loss = loss_pred(model.forecast(x, g), y);
    loss.backward();
    optimizer.step(trainable);
    return loss.item();
}

Graph mask_graph_for_epoch(const Model& model, const Graph& g) {
    if (model.config().graph_mode != GraphMode::adaptive) return g;
    NoGradGuard no_grad;
    const std::size_t n = model.config().n_nodes;
    if (n < 2) return Graph(n, {});
    return sparsify_topk(model.adjacency(g), std::min(model.config().topk, n - 1));
}

// Runs ----------------------------------------------------------------------

std::string curve_csv(const std::vector<CurveRow>& rows) {
    std::ostringstream out;
    out << "stage,epoch,train_loss,val_mae\n";
    for (const auto& r : rows) {
        out << r.stage << ',' << r.epoch << ',' << csv::format_double(r.train_loss) << ',';
        if (r.val_mae) out << csv::format_double(*r.val_mae);
        out << '\n';
    }
    return out.str();
}

PreparedData prepare(const Dataset& raw, std::size_t history, std::size_t horizon) {
    auto [normalized, norm] = zscore_fit_apply(raw, 0.6);
    PreparedData out;
    out.split = chrono_split(make_windows(normalized, history, horizon));
    out.norm = std::move(norm);
    out.graph = raw.graph;
    out.n_nodes = raw.n_nodes;
    out.n_features = raw.n_features;
    return out;
}

MetricReport evaluate(const Model& model, const Graph& g, const std::vector<WindowPair>& windows,
                      const Normalization& norm, std::size_t batch_size) {
    if (windows.empty()) throw std::invalid_argument("evaluate: no windows");
    NoGradGuard no_grad;
    std::vector<double> pred, target;
    Shape y_shape = windows.front().y.shape();
    for (std::size_t i = 0; i < windows.size(); i += batch_size) {
        std::vector<std::size_t> which(std::min(batch_size, windows.size() - i));
        std::iota(which.begin(), which.end(), i);
        Batch b = stack_windows(windows, which);
        Tensor yhat = model.forecast(b.x, g);
        pred.insert(pred.end(), yhat.data().begin(), yhat.data().end());
        target.insert(target.end(), b.y.data().begin(), b.y.data().end());
    }
    y_shape.insert(y_shape.begin(), windows.size());
    return metrics(Tensor::from(y_shape, std::move(pred)), Tensor::from(y_shape, std::move(target)),
                   &norm);
}

std::vector<CurveRow> run_pretraining(const RunConfig& cfg, const PreparedData& data, Model& model,
                                      TwoStageResult* stats) {
    const auto train = training_windows(cfg, data);
    MaskStreams streams = MaskStreams::from_seed(cfg.seed);
    Rng shuffle = make_stream(cfg.seed, "shuffle-pretrain");
    Adam optimizer(AdamConfig{.lr = cfg.lr});
    SamplerAudit local_audit;
    SamplerAudit* audit = stats ? &stats->audit : &local_audit;

    std::vector<CurveRow> curve;
    for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
        const Graph mask_graph = mask_graph_for_epoch(model, data.graph);
        double total = 0.0;
        std::size_t steps = 0;
        for (const auto& which : epoch_batches(train.size(), cfg.batch_size, shuffle)) {
            Batch b = stack_windows(train, which);
            auto r = pretrain_step(b.x, mask_graph, model, optimizer, cfg, streams, audit);
            total += r.loss;
            ++steps;
            if (stats) {
                stats->pretrain_spatial_sum += r.loss_spatial;
                stats->pretrain_temporal_sum += r.loss_temporal;
                ++stats->pretrain_steps;
            }
        }
        curve.push_back({"pretrain", epoch, total / static_cast<double>(steps), std::nullopt});
    }
    return curve;
}

Model run_finetuning(const RunConfig& cfg, const PreparedData& data, Model model,
                     std::vector<CurveRow>& curve, std::size_t* best_epoch) {
    const auto train = training_windows(cfg, data);
    Rng shuffle = make_stream(cfg.seed, "shuffle-finetune");
    Adam optimizer(AdamConfig{.lr = cfg.lr});
    Model best = model.clone();
    double best_val = std::numeric_limits<double>::infinity();
    if (best_epoch) *best_epoch = 0;
    for (std::size_t epoch = 1; epoch <= cfg.finetune_epochs; ++epoch) {
        double total = 0.0;
        std::size_t steps = 0;
        for (const auto& which : epoch_batches(train.size(), cfg.batch_size, shuffle)) {
            Batch b = stack_windows(train, which);
            total += finetune_step(b.x, b.y, data.graph, model, optimizer);
            ++steps;
        }
        const double val = evaluate(model, data.graph, data.split.val, data.norm).mae;
        curve.push_back({"finetune", epoch, total / static_cast<double>(steps), val});
        if (val < best_val) {
            best_val = val;
            best = model.clone();
            if (best_epoch) *best_epoch = epoch;
        }
    }
    return best;
}

TwoStageResult run_two_stage(const RunConfig& cfg, const PreparedData& data) {
    cfg.validate();
    Rng init = make_stream(cfg.seed, "init");
    Model model(cfg.encoder(data.n_nodes, data.n_features), init);
    TwoStageResult result{model, {}, {}, {}, 0, {}, 0.0, 0.0, 0};
    if (cfg.variant != Variant::baseline && cfg.pretrain_epochs > 0)
        result.curve = run_pretraining(cfg, data, model, &result);
    result.model = run_finetuning(cfg, data, model, result.curve, &result.best_epoch);
    result.val_report = evaluate(result.model, data.graph, data.split.val, data.norm);
    result.test_report = evaluate(result.model, data.graph, data.split.test, data.norm);
    for (auto* r : {&result.val_report, &result.test_report}) {
        r->variant = to_string(cfg.variant);
        r->seed = cfg.seed;
    }
    return result;
}

GridSearchResult grid_search(const PreparedData& data, const RunConfig& base, const SearchGrid& grid) {
    auto axis = [](const std::vector<double>& values, double fallback) {
        return values.empty() ? std::vector<double>{fallback} : values;
    };
    const auto ps = axis(grid.p, base.walk_p), qs = axis(grid.q, base.walk_q),
               lambdas = axis(grid.lambda, base.lambda), pss = axis(grid.p_s, base.p_s),
               pts = axis(grid.p_t, base.p_t);

    GridSearchResult out;
    for (double p : ps)
        for (double q : qs)
            for (double lambda : lambdas)
                for (double p_s : pss)
                    for (double p_t : pts) {
                        RunConfig cfg = base;
                        cfg.walk_p = p;
                        cfg.walk_q = q;
                        cfg.lambda = lambda;
                        cfg.p_s = p_s;
                        cfg.p_t = p_t;
                        auto run = run_two_stage(cfg, data);
                        out.cells.push_back({cfg, run.val_report.mae});
                    }
    const GridCell* best = &out.cells.front();
    for (const auto& cell : out.cells) {
        const auto key = [](const GridCell& c) {
            return std::tuple(c.val_mae, c.config.p_s, c.config.p_t);
        };
        if (key(cell) < key(*best)) best = &cell;
    }
    out.best = best->config;
    return out;
}

}  // namespace stmae
