#include "stmae/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace stmae {

namespace {

/// Adds a leading batch axis of 1 when `x` has the unbatched rank.
std::pair<Tensor, bool> as_batch(const Tensor& x, std::size_t unbatched_rank, const char* op) {
    if (x.rank() == unbatched_rank) {
        Shape s = x.shape();
        s.insert(s.begin(), 1);
        return {reshape(x, std::move(s)), false};
    }
    if (x.rank() == unbatched_rank + 1) return {x, true};
    throw ShapeError(std::string(op) + ": unexpected input rank " + shape_str(x.shape()));
}

Tensor unbatch(const Tensor& x, bool was_batched) {
    if (was_batched) return x;
    Shape s(x.shape().begin() + 1, x.shape().end());
    return reshape(x, std::move(s));
}

void expect_dims(const char* op, const Tensor& x, std::initializer_list<std::size_t> tail) {
    const Shape& s = x.shape();
    bool ok = s.size() >= tail.size();
    std::size_t i = s.size() - tail.size();
    for (auto d : tail) ok = ok && s[i++] == d;
    if (!ok) {
        Shape want(tail);
        throw ShapeError(std::string(op) + ": expected trailing dims " + shape_str(want) +
                         ", got " + shape_str(s));
    }
}

}  // namespace

std::string to_string(GraphMode mode) {
    return mode == GraphMode::predefined ? "predefined" : "adaptive";
}

GraphMode graph_mode_from_string(const std::string& s) {
    if (s == "predefined") return GraphMode::predefined;
    if (s == "adaptive") return GraphMode::adaptive;
    throw std::invalid_argument("graph_mode must be 'predefined' or 'adaptive', got '" + s + "'");
}

void EncoderConfig::validate() const {
    if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
    if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
    if (history < 1 || horizon < 1) throw std::invalid_argument("history and horizon must be >= 1");
    if (n_nodes < 1) throw std::invalid_argument("n_nodes must be >= 1");
    if (patch_length < 1 || history % patch_length != 0)
        throw std::invalid_argument("history " + std::to_string(history) +
                                    " is not divisible by patch_length " +
                                    std::to_string(patch_length));
    if (graph_mode == GraphMode::adaptive && node_embed_dim < 1)
        throw std::invalid_argument("node_embed_dim must be >= 1");
}

nlohmann::json EncoderConfig::to_json() const {
    return {{"hidden_dim", hidden_dim}, {"input_dim", input_dim},
            {"history", history},       {"horizon", horizon},
            {"n_nodes", n_nodes},       {"graph_mode", to_string(graph_mode)},
            {"node_embed_dim", node_embed_dim}, {"topk", topk},
            {"patch_length", patch_length}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.history = j.at("history").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.n_nodes = j.at("n_nodes").get<std::size_t>();
    c.graph_mode = graph_mode_from_string(j.at("graph_mode").get<std::string>());
    c.node_embed_dim = j.at("node_embed_dim").get<std::size_t>();
    c.topk = j.at("topk").get<std::size_t>();
    c.patch_length = j.at("patch_length").get<std::size_t>();
    c.validate();
    return c;
}

Model::Model(const EncoderConfig& config) : config_(config) { config_.validate(); }

Model::Model(const EncoderConfig& config, Rng& rng) : Model(config) { register_params(&rng); }

Model Model::zeros(const EncoderConfig& config) {
    Model m(config);
    m.register_params(nullptr);
    return m;
}

Model Model::clone() const {
    Model m(config_);
    m.params_ = params_.deep_copy();
    return m;
}

void Model::register_params(Rng* rng) {
    const std::size_t d = config_.hidden_dim, c = config_.input_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    auto make = [&](const std::string& path, Shape shape) {
        std::vector<double> v(numel_of(shape), 0.0);
        if (rng)
            for (auto& x : v) x = (2.0 * uniform01(*rng) - 1.0) * bound;
        params_.add(path, Tensor::from(std::move(shape), std::move(v)));
    };
    make("embed.weight", {c, d});
    make("embed.bias", {d});
    for (const char* gate : {"update", "reset", "candidate"}) {
        make(std::string("encoder.") + gate + ".weight", {2 * d, d});
        make(std::string("encoder.") + gate + ".bias", {d});
    }
    make("predictor.hidden.weight", {d, d});
    make("predictor.hidden.bias", {d});
    make("predictor.out.weight", {d, config_.horizon * c});
    make("predictor.out.bias", {config_.horizon * c});
    make("decoder.spatial.weight", {d, d});
    make("decoder.temporal.weight", {d, config_.history * c});
    make("decoder.temporal.bias", {config_.history * c});
    make("mask_token", {d});
    if (config_.graph_mode == GraphMode::adaptive)
        make("graph.node_embeddings", {config_.n_nodes, config_.node_embed_dim});
}

Tensor Model::embed_input(const Tensor& x) const {
    expect_dims("embed_input", x, {config_.n_nodes, config_.input_dim});
    if (x.rank() != 3 && x.rank() != 4)
        throw ShapeError("embed_input: expected [H,N,C] or [B,H,N,C], got " + shape_str(x.shape()));
    return add(matmul(x, params_.get("embed.weight")), params_.get("embed.bias"));
}

Tensor Model::gc_gate(const Tensor& mixed, const std::string& gate) const {
    return add(matmul(mixed, params_.get("encoder." + gate + ".weight")),
               params_.get("encoder." + gate + ".bias"));
}

Tensor Model::encoder_forward(const Tensor& x_emb, const Tensor& adjacency) const {
    const std::size_t n = config_.n_nodes, d = config_.hidden_dim;
    auto [x, batched] = as_batch(x_emb, 3, "encoder_forward");
    expect_dims("encoder_forward", x, {n, d});
    if (adjacency.shape() != Shape{n, n})
        throw ShapeError("encoder_forward: adjacency " + shape_str(adjacency.shape()) +
                         " does not match " + std::to_string(n) + " nodes");
    const std::size_t batch = x.dim(0), steps = x.dim(1);
    const Tensor prop = normalize_adjacency(adjacency);

    Tensor h = Tensor::zeros({batch, n, d});
    for (std::size_t t = 0; t < steps; ++t) {
        Tensor xt = reshape(slice(x, 1, t, 1), {batch, n, d});
        Tensor mixed = bmm(prop, concat({xt, h}, 2));
        Tensor z = sigmoid(gc_gate(mixed, "update"));
        Tensor r = sigmoid(gc_gate(mixed, "reset"));
        Tensor cand = tanh(gc_gate(bmm(prop, concat({xt, mul(r, h)}, 2)), "candidate"));
        h = add(mul(z, h), mul(shift(neg(z), 1.0), cand));
    }
    return unbatch(h, batched);
}

Tensor Model::spatial_decoder(const Tensor& state) const {
    expect_dims("spatial_decoder", state, {config_.n_nodes, config_.hidden_dim});
    Tensor sw = matmul(state, params_.get("decoder.spatial.weight"));
    if (state.rank() == 2) return sigmoid(matmul(sw, transpose(sw)));
    return sigmoid(bmm(sw, transpose(sw)));
}

Tensor Model::temporal_decoder(const Tensor& state) const {
    auto [s, batched] = as_batch(state, 2, "temporal_decoder");
    expect_dims("temporal_decoder", s, {config_.n_nodes, config_.hidden_dim});
    const std::size_t b = s.dim(0);
    Tensor flat = add(matmul(s, params_.get("decoder.temporal.weight")),
                      params_.get("decoder.temporal.bias"));
    const std::size_t axes[] = {0, 2, 1, 3};
    Tensor out = permute(reshape(flat, {b, config_.n_nodes, config_.history, config_.input_dim}), axes);
    return unbatch(out, batched);
}

Tensor Model::predictor(const Tensor& state) const {
    auto [s, batched] = as_batch(state, 2, "predictor");
    expect_dims("predictor", s, {config_.n_nodes, config_.hidden_dim});
    const std::size_t b = s.dim(0);
    Tensor hidden = relu(add(matmul(s, params_.get("predictor.hidden.weight")),
                             params_.get("predictor.hidden.bias")));
    Tensor flat = add(matmul(hidden, params_.get("predictor.out.weight")),
                      params_.get("predictor.out.bias"));
    const std::size_t axes[] = {0, 2, 1, 3};
    Tensor out = permute(reshape(flat, {b, config_.n_nodes, config_.horizon, config_.input_dim}), axes);
    return unbatch(out, batched);
}

Tensor Model::adjacency(const Graph& g) const {
    if (config_.graph_mode == GraphMode::adaptive)
        return adaptive_adjacency(params_.get("graph.node_embeddings"));
    if (g.n_nodes() != config_.n_nodes)
        throw ShapeError("graph has " + std::to_string(g.n_nodes()) + " nodes, model expects " +
                         std::to_string(config_.n_nodes));
    return g.adjacency_tensor();
}

Tensor Model::forecast(const Tensor& x, const Graph& g) const {
    return predictor(encoder_forward(embed_input(x), adjacency(g)));
}

void save_model(const Model& model, const std::filesystem::path& stem) {
    auto bin = stem;
    bin += ".bin";
    auto manifest = stem;
    manifest += ".json";
    model.params().save(bin);
    std::ostringstream fp;
    fp << std::hex << model.params().fingerprint();
    nlohmann::json j{{"encoder", model.config().to_json()},
                     {"checkpoint", bin.filename().string()},
                     {"fingerprint", fp.str()}};
    std::ofstream out(manifest);
    if (!out) throw std::runtime_error("cannot write " + manifest.string());
    out << j.dump(2) << '\n';
}

Model load_model(const std::filesystem::path& stem) {
    auto manifest = stem;
    manifest += ".json";
    std::ifstream in(manifest);
    if (!in) throw std::runtime_error("cannot open model manifest " + manifest.string());
    nlohmann::json j = nlohmann::json::parse(in);
    Model model = Model::zeros(EncoderConfig::from_json(j.at("encoder")));
    model.params().load_into(stem.parent_path() / j.at("checkpoint").get<std::string>());
    return model;
}

}  // namespace stmae
