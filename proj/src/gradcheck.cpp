#include "stmae/gradcheck.hpp"

#include <functional>

#include "stmae/graph.hpp"
#include "stmae/masking.hpp"
#include "stmae/model.hpp"
#include "stmae/rng.hpp"
#include "stmae/training.hpp"

namespace stmae {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(numel_of(shape));
    for (auto& x : v) x = lo + (hi - lo) * uniform01(rng);
    return Tensor::from(std::move(shape), std::move(v));
}

// Values kept at least 0.2 away from zero so kinks (relu, abs) stay out of
// the finite-difference stencil.
Tensor off_zero_tensor(Rng& rng, Shape shape) {
    Tensor t = random_tensor(rng, std::move(shape), 0.2, 1.0);
    auto d = t.mutable_data();
    for (auto& x : d)
        if (uniform01(rng) < 0.5) x = -x;
    return t;
}

/// sum(f(inputs) * R) with a fixed random R, so every output entry carries a
/// distinct weight.
class Suite {
public:
    explicit Suite(std::uint64_t seed) : rng_(make_stream(seed, "gradcheck")) {}

    Rng& rng() { return rng_; }

    void check(const std::string& name, ParameterTree params,
               const std::function<Tensor(ParameterTree&)>& f) {
        ParameterTree probe = params.deep_copy();
        Shape out_shape;
        {
            NoGradGuard no_grad;
            out_shape = f(probe).shape();
        }
        Tensor weights = random_tensor(rng_, out_shape);
        auto objective = [&](ParameterTree& p) { return sum(mul(f(p), weights)); };
        cases_.push_back({name, finite_diff_check(objective, params)});
    }

    void check_scalar(const std::string& name, ParameterTree params,
                      const std::function<Tensor(ParameterTree&)>& f) {
        cases_.push_back({name, finite_diff_check(f, params)});
    }

    std::vector<GradCheckCase> take_cases() { return std::move(cases_); }

private:
    Rng rng_;
    std::vector<GradCheckCase> cases_;
};

ParameterTree tree(std::initializer_list<std::pair<const char*, Tensor>> entries) {
    ParameterTree t;
    for (const auto& [name, value] : entries) t.add(name, value);
    return t;
}

void kernel_cases(Suite& s) {
    Rng& r = s.rng();
    s.check("matmul", tree({{"a", random_tensor(r, {2, 3, 4})}, {"b", random_tensor(r, {4, 5})}}),
            [](ParameterTree& p) { return matmul(p.get("a"), p.get("b")); });
    s.check("bmm", tree({{"a", random_tensor(r, {2, 3, 4})}, {"b", random_tensor(r, {2, 4, 2})}}),
            [](ParameterTree& p) { return bmm(p.get("a"), p.get("b")); });
    s.check("bmm_shared", tree({{"a", random_tensor(r, {3, 4})}, {"b", random_tensor(r, {2, 4, 2})}}),
            [](ParameterTree& p) { return bmm(p.get("a"), p.get("b")); });
    s.check("add_broadcast",
            tree({{"a", random_tensor(r, {2, 3, 4})}, {"b", random_tensor(r, {4})}}),
            [](ParameterTree& p) { return add(p.get("a"), p.get("b")); });
    s.check("sub_broadcast",
            tree({{"a", random_tensor(r, {3, 1})}, {"b", random_tensor(r, {1, 4})}}),
            [](ParameterTree& p) { return sub(p.get("a"), p.get("b")); });
    s.check("mul_broadcast",
            tree({{"a", random_tensor(r, {2, 3, 4})}, {"b", random_tensor(r, {3, 1})}}),
            [](ParameterTree& p) { return mul(p.get("a"), p.get("b")); });
    s.check("div", tree({{"a", random_tensor(r, {3, 4})}, {"b", random_tensor(r, {3, 4}, 0.5, 2.0)}}),
            [](ParameterTree& p) { return div(p.get("a"), p.get("b")); });
    s.check("scale", tree({{"x", random_tensor(r, {3, 4})}}),
            [](ParameterTree& p) { return scale(p.get("x"), -2.5); });
    s.check("shift", tree({{"x", random_tensor(r, {3, 4})}}),
            [](ParameterTree& p) { return mul(shift(p.get("x"), 0.7), p.get("x")); });
    s.check("neg", tree({{"x", random_tensor(r, {3, 4})}}),
            [](ParameterTree& p) { return neg(p.get("x")); });
    s.check("sigmoid", tree({{"x", random_tensor(r, {3, 4}, -4.0, 4.0)}}),
            [](ParameterTree& p) { return sigmoid(p.get("x")); });
    s.check("tanh", tree({{"x", random_tensor(r, {3, 4}, -3.0, 3.0)}}),
            [](ParameterTree& p) { return tanh(p.get("x")); });
    s.check("relu", tree({{"x", off_zero_tensor(r, {3, 4})}}),
            [](ParameterTree& p) { return relu(p.get("x")); });
    s.check("abs", tree({{"x", off_zero_tensor(r, {3, 4})}}),
            [](ParameterTree& p) { return abs(p.get("x")); });
    s.check("log", tree({{"x", random_tensor(r, {3, 4}, 0.2, 3.0)}}),
            [](ParameterTree& p) { return log(p.get("x")); });
    s.check("exp", tree({{"x", random_tensor(r, {3, 4})}}),
            [](ParameterTree& p) { return exp(p.get("x")); });
    s.check("square", tree({{"x", random_tensor(r, {3, 4})}}),
            [](ParameterTree& p) { return square(p.get("x")); });
    s.check("row_softmax", tree({{"x", random_tensor(r, {2, 3, 4}, -2.0, 2.0)}}),
            [](ParameterTree& p) { return row_softmax(p.get("x")); });
    s.check("concat", tree({{"a", random_tensor(r, {2, 3, 2})}, {"b", random_tensor(r, {2, 3, 3})}}),
            [](ParameterTree& p) { return concat({p.get("a"), p.get("b")}, 2); });
    s.check("slice", tree({{"x", random_tensor(r, {2, 5, 3})}}),
            [](ParameterTree& p) { return slice(p.get("x"), 1, 1, 3); });
    s.check("take", tree({{"x", random_tensor(r, {3, 4})}}), [](ParameterTree& p) {
        const std::size_t idx[] = {0, 5, 5, 11, 2};
        return take(p.get("x"), idx);
    });
    s.check("reshape", tree({{"x", random_tensor(r, {2, 6})}}),
            [](ParameterTree& p) { return reshape(p.get("x"), {3, 4}); });
    s.check("permute", tree({{"x", random_tensor(r, {2, 3, 4})}}), [](ParameterTree& p) {
        const std::size_t axes[] = {2, 0, 1};
        return permute(p.get("x"), axes);
    });
    s.check("transpose", tree({{"x", random_tensor(r, {2, 3, 4})}}),
            [](ParameterTree& p) { return transpose(p.get("x")); });
    s.check("broadcast_to", tree({{"x", random_tensor(r, {3, 1})}}),
            [](ParameterTree& p) { return broadcast_to(p.get("x"), {2, 3, 4}); });
    s.check("sum", tree({{"x", random_tensor(r, {3, 4})}}),
            [](ParameterTree& p) { return sum(square(p.get("x"))); });
    s.check("mean", tree({{"x", random_tensor(r, {3, 4})}}),
            [](ParameterTree& p) { return mean(square(p.get("x"))); });
    s.check("sum_last", tree({{"x", random_tensor(r, {2, 3, 4})}}),
            [](ParameterTree& p) { return sum_last(p.get("x"), false); });
    s.check("where", tree({{"a", random_tensor(r, {2, 3})}, {"b", random_tensor(r, {3})}}),
            [](ParameterTree& p) {
                const std::uint8_t pick[] = {1, 0, 1, 0, 0, 1};
                return where(pick, {2, 3}, p.get("a"), p.get("b"));
            });
    s.check("normalize_adjacency", tree({{"a", random_tensor(r, {4, 4}, 0.1, 1.0)}}),
            [](ParameterTree& p) { return normalize_adjacency(p.get("a")); });
    s.check("adaptive_adjacency", tree({{"e", random_tensor(r, {4, 3})}}),
            [](ParameterTree& p) { return adaptive_adjacency(p.get("e")); });
}

void model_cases(Suite& s, std::uint64_t seed) {
    const Graph g(4, {{0, 1, 1.0}, {1, 2, 0.8}, {2, 3, 0.6}, {0, 3, 0.9}, {0, 2, 0.5}});
    for (GraphMode mode : {GraphMode::predefined, GraphMode::adaptive}) {
        EncoderConfig cfg;
        cfg.n_nodes = 4;
        cfg.hidden_dim = 3;
        cfg.history = 4;
        cfg.horizon = 4;
        cfg.patch_length = 2;
        cfg.graph_mode = mode;
        cfg.node_embed_dim = 2;
        cfg.topk = 2;
        Rng init = make_stream(seed, "gradcheck-init", static_cast<std::uint64_t>(mode));
        // Weights of a larger scale than the default init exercise the
        // nonlinearities away from their linear regime.
        Model model(cfg, init);
        for (auto& [path, t] : model.params())
            for (auto& w : t.mutable_data()) w *= 2.0;
        Tensor x = random_tensor(s.rng(), {2, 4, 4, 1});
        Tensor y = random_tensor(s.rng(), {2, 4, 4, 1});
        const std::string tag = to_string(mode);

        s.check_scalar("L_pred/" + tag, finetune_parameters(model), [&](ParameterTree&) {
            return loss_pred(model.forecast(x, g), y);
        });

        MaskPlan plan;
        plan.masked_edges = {edge_key(0, 1), edge_key(2, 3)};
        plan.patch_mask = {false, true};
        plan.patch_length = 2;
        const Graph mask_graph = mode == GraphMode::adaptive ? mask_graph_for_epoch(model, g) : g;
        if (mode == GraphMode::adaptive) {
            plan.masked_edges.clear();
            plan.masked_edges.insert(edge_key(mask_graph.edges()[0].u, mask_graph.edges()[0].v));
        }
        s.check_scalar("L_pretrain/" + tag, pretrain_parameters(model), [&](ParameterTree&) {
            return pretrain_loss(model, x, mask_graph, plan, 1.0).total;
        });
    }
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed) {
    Suite s(seed);
    kernel_cases(s);
    model_cases(s, seed);
    return s.take_cases();
}

}  // namespace stmae
