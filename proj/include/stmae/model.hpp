#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "stmae/graph.hpp"
#include "stmae/params.hpp"
#include "stmae/rng.hpp"
#include "stmae/tensor.hpp"

namespace stmae {

enum class GraphMode { predefined, adaptive };

std::string to_string(GraphMode mode);
GraphMode graph_mode_from_string(const std::string& s);

struct EncoderConfig {
    std::size_t hidden_dim = 16;  // D
    std::size_t input_dim = 1;    // C
    std::size_t history = 12;     // H
    std::size_t horizon = 12;     // F
    std::size_t n_nodes = 0;      // N
    GraphMode graph_mode = GraphMode::predefined;
    std::size_t node_embed_dim = 8;
    std::size_t topk = 8;
    std::size_t patch_length = 2;

    void validate() const;
    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
};

/// Parameter path prefixes, grouped by what each training stage updates.
namespace param_group {
inline const std::string embed = "embed.";
inline const std::string encoder = "encoder.";
inline const std::string predictor = "predictor.";
inline const std::string spatial_decoder = "decoder.spatial.";
inline const std::string temporal_decoder = "decoder.temporal.";
inline const std::string mask_token = "mask_token";
inline const std::string node_embeddings = "graph.node_embeddings";
}  // namespace param_group

/// Graph-convolutional GRU encoder with an MLP forecasting head and the two
/// pretraining decoders.
///
/// Every forward method accepts either a single window ([H, N, C] and so on)
/// or a batch with a leading axis, and returns the matching rank.
class Model {
public:
    /// Initializes every weight uniform in [-1/sqrt(D), 1/sqrt(D)].
    Model(const EncoderConfig& config, Rng& rng);
    /// Zero-initialized parameters, for tests that set weights by hand.
    static Model zeros(const EncoderConfig& config);
    /// Copies share parameter storage; clone() does not.
    Model clone() const;

    const EncoderConfig& config() const { return config_; }
    ParameterTree& params() { return params_; }
    const ParameterTree& params() const { return params_; }
    Tensor& param(const std::string& path) { return params_.get(path); }

    /// x [.., H, N, C] -> [.., H, N, D]: value * W_e + b_e at every (t, n).
    Tensor embed_input(const Tensor& x) const;

    /// Gated recurrence over the H steps with one-hop propagation through
    /// normalize_adjacency(adjacency). Returns the last hidden state
    /// [.., N, D]; h_0 = 0.
    Tensor encoder_forward(const Tensor& x_emb, const Tensor& adjacency) const;

    /// sigmoid((S W)(S W)^T): [.., N, D] -> [.., N, N].
    Tensor spatial_decoder(const Tensor& state) const;
    /// Per-node affine map D -> H*C reshaped to [.., H, N, C].
    Tensor temporal_decoder(const Tensor& state) const;
    /// Two-layer MLP D -> D (relu) -> F*C reshaped to [.., F, N, C].
    Tensor predictor(const Tensor& state) const;

    /// Adjacency fed to the encoder: the graph's weights in predefined mode,
    /// or adaptive_adjacency of the node embeddings in adaptive mode.
    Tensor adjacency(const Graph& g) const;

    /// predictor(encoder_forward(embed_input(x), adjacency(g))), no masking.
    Tensor forecast(const Tensor& x, const Graph& g) const;

private:
    explicit Model(const EncoderConfig& config);
    void register_params(Rng* rng);
    Tensor gc_gate(const Tensor& mixed, const std::string& gate) const;

    EncoderConfig config_;
    ParameterTree params_;
};

/// Writes checkpoint `<stem>.bin` and manifest `<stem>.json` (EncoderConfig
/// plus parameter fingerprint).
void save_model(const Model& model, const std::filesystem::path& stem);
Model load_model(const std::filesystem::path& stem);

}  // namespace stmae
