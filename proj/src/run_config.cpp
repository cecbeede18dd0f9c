#include <functional>
#include <map>
#include <stdexcept>

#include "stmae/training.hpp"

namespace stmae {

namespace {

using json = nlohmann::json;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
    throw std::invalid_argument("config key '" + key + "': " + why);
}

double as_double(const std::string& key, const json& v) {
    if (!v.is_number()) bad(key, "expected a number, got " + v.dump());
    return v.get<double>();
}

std::size_t as_count(const std::string& key, const json& v) {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_number_integer()) bad(key, "must be nonnegative, got " + v.dump());
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d >= 0 && d == static_cast<double>(static_cast<std::size_t>(d)))
            return static_cast<std::size_t>(d);
    }
    bad(key, "expected a nonnegative integer, got " + v.dump());
}

bool as_bool(const std::string& key, const json& v) {
    if (!v.is_boolean()) bad(key, "expected true or false, got " + v.dump());
    return v.get<bool>();
}

std::string as_string(const std::string& key, const json& v) {
    if (!v.is_string()) bad(key, "expected a string, got " + v.dump());
    return v.get<std::string>();
}

using Setter = std::function<void(RunConfig&, const std::string&, const json&)>;

const std::map<std::string, Setter>& data_setters() {
    static const std::map<std::string, Setter> table = {
        {"n_nodes", [](RunConfig& c, auto& k, auto& v) { c.data.n_nodes = as_count(k, v); }},
        {"n_steps", [](RunConfig& c, auto& k, auto& v) { c.data.n_steps = as_count(k, v); }},
        {"n_features", [](RunConfig& c, auto& k, auto& v) { c.data.n_features = as_count(k, v); }},
        {"seed", [](RunConfig& c, auto& k, auto& v) { c.data.seed = as_count(k, v); }},
        {"coupling", [](RunConfig& c, auto& k, auto& v) { c.data.coupling = as_double(k, v); }},
        {"season_amplitude", [](RunConfig& c, auto& k, auto& v) { c.data.season_amplitude = as_double(k, v); }},
        {"noise_std", [](RunConfig& c, auto& k, auto& v) { c.data.noise_std = as_double(k, v); }},
        {"season_period", [](RunConfig& c, auto& k, auto& v) { c.data.season_period = as_count(k, v); }},
        {"epsilon", [](RunConfig& c, auto& k, auto& v) { c.data.epsilon = as_double(k, v); }},
        {"base_level", [](RunConfig& c, auto& k, auto& v) { c.data.base_level = as_double(k, v); }},
    };
    return table;
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"p_s", [](RunConfig& c, auto& k, auto& v) { c.p_s = as_double(k, v); }},
        {"p_t", [](RunConfig& c, auto& k, auto& v) { c.p_t = as_double(k, v); }},
        {"patch_length", [](RunConfig& c, auto& k, auto& v) { c.patch_length = as_count(k, v); }},
        {"p", [](RunConfig& c, auto& k, auto& v) { c.walk_p = as_double(k, v); }},
        {"q", [](RunConfig& c, auto& k, auto& v) { c.walk_q = as_double(k, v); }},
        {"walk_length", [](RunConfig& c, auto& k, auto& v) { c.walk_length = as_count(k, v); }},
        {"lambda", [](RunConfig& c, auto& k, auto& v) { c.lambda = as_double(k, v); }},
        {"negative_sampling", [](RunConfig& c, auto& k, auto& v) { c.negative_sampling = as_bool(k, v); }},
        {"mask_per_window", [](RunConfig& c, auto& k, auto& v) { c.mask_per_window = as_bool(k, v); }},
        {"variant", [](RunConfig& c, auto& k, auto& v) {
             try {
                 c.variant = variant_from_string(as_string(k, v));
             } catch (const std::invalid_argument& e) {
                 bad(k, e.what());
             }
         }},
        {"pretrain_epochs", [](RunConfig& c, auto& k, auto& v) { c.pretrain_epochs = as_count(k, v); }},
        {"finetune_epochs", [](RunConfig& c, auto& k, auto& v) { c.finetune_epochs = as_count(k, v); }},
        {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.batch_size = as_count(k, v); }},
        {"lr", [](RunConfig& c, auto& k, auto& v) { c.lr = as_double(k, v); }},
        {"seed", [](RunConfig& c, auto& k, auto& v) { c.seed = as_count(k, v); }},
        {"max_train_windows", [](RunConfig& c, auto& k, auto& v) { c.max_train_windows = as_count(k, v); }},
        {"graph_mode", [](RunConfig& c, auto& k, auto& v) {
             try {
                 c.graph_mode = graph_mode_from_string(as_string(k, v));
             } catch (const std::invalid_argument& e) {
                 bad(k, e.what());
             }
         }},
        {"history", [](RunConfig& c, auto& k, auto& v) { c.history = as_count(k, v); }},
        {"horizon", [](RunConfig& c, auto& k, auto& v) { c.horizon = as_count(k, v); }},
        {"hidden_dim", [](RunConfig& c, auto& k, auto& v) { c.hidden_dim = as_count(k, v); }},
        {"node_embed_dim", [](RunConfig& c, auto& k, auto& v) { c.node_embed_dim = as_count(k, v); }},
        {"topk", [](RunConfig& c, auto& k, auto& v) { c.topk = as_count(k, v); }},
    };
    return table;
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::NT: return "NT";
        case Variant::NS: return "NS";
        case Variant::U: return "U";
        case Variant::baseline: return "baseline";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    for (Variant v : kAllVariants)
        if (to_string(v) == s) return v;
    throw std::invalid_argument("unknown variant '" + s + "' (expected full, NT, NS, U or baseline)");
}

void RunConfig::validate() const {
    if (!(p_s >= 0.0 && p_s < 1.0)) bad("p_s", "must be in [0, 1)");
    if (!(p_t >= 0.0 && p_t < 1.0)) bad("p_t", "must be in [0, 1)");
    if (patch_length < 1) bad("patch_length", "must be >= 1");
    if (history < 1) bad("history", "must be >= 1");
    if (horizon < 1) bad("horizon", "must be >= 1");
    if (history % patch_length != 0)
        bad("patch_length", "must divide history (" + std::to_string(history) + ")");
    if (!(walk_p > 0.0)) bad("p", "must be > 0");
    if (!(walk_q > 0.0)) bad("q", "must be > 0");
    if (walk_length < 2) bad("walk_length", "must be >= 2");
    if (!(lambda >= 0.0)) bad("lambda", "must be >= 0");
    if (batch_size < 1) bad("batch_size", "must be >= 1");
    if (!(lr > 0.0)) bad("lr", "must be > 0");
    if (hidden_dim < 1) bad("hidden_dim", "must be >= 1");
    if (node_embed_dim < 1) bad("node_embed_dim", "must be >= 1");
    if (topk < 1) bad("topk", "must be >= 1");
    if (data.n_nodes < 2) bad("data.n_nodes", "must be >= 2");
    if (data.n_steps < 200) bad("data.n_steps", "must be >= 200");
    if (data.n_features < 1) bad("data.n_features", "must be >= 1");
    if (!(data.coupling >= 0.0 && data.coupling < 1.0)) bad("data.coupling", "must be in [0, 1)");
    if (!(data.noise_std >= 0.0)) bad("data.noise_std", "must be >= 0");
    if (data.season_period < 1) bad("data.season_period", "must be >= 1");
    if (!(data.epsilon >= 0.0 && data.epsilon < 1.0)) bad("data.epsilon", "must be in [0, 1)");
}

WalkConfig RunConfig::walk() const {
    return WalkConfig{walk_p, walk_q, walk_length, seed};
}

EncoderConfig RunConfig::encoder(std::size_t n_nodes, std::size_t n_features) const {
    EncoderConfig e;
    e.hidden_dim = hidden_dim;
    e.input_dim = n_features;
    e.history = history;
    e.horizon = horizon;
    e.n_nodes = n_nodes;
    e.graph_mode = graph_mode;
    e.node_embed_dim = node_embed_dim;
    e.topk = topk;
    e.patch_length = patch_length;
    return e;
}

nlohmann::json RunConfig::to_json() const {
    return {
        {"p_s", p_s},
        {"p_t", p_t},
        {"patch_length", patch_length},
        {"p", walk_p},
        {"q", walk_q},
        {"walk_length", walk_length},
        {"lambda", lambda},
        {"negative_sampling", negative_sampling},
        {"mask_per_window", mask_per_window},
        {"variant", to_string(variant)},
        {"pretrain_epochs", pretrain_epochs},
        {"finetune_epochs", finetune_epochs},
        {"batch_size", batch_size},
        {"lr", lr},
        {"seed", seed},
        {"max_train_windows", max_train_windows},
        {"graph_mode", to_string(graph_mode)},
        {"history", history},
        {"horizon", horizon},
        {"hidden_dim", hidden_dim},
        {"node_embed_dim", node_embed_dim},
        {"topk", topk},
        {"data",
         {{"n_nodes", data.n_nodes},
          {"n_steps", data.n_steps},
          {"n_features", data.n_features},
          {"seed", data.seed},
          {"coupling", data.coupling},
          {"season_amplitude", data.season_amplitude},
          {"noise_std", data.noise_std},
          {"season_period", data.season_period},
          {"epsilon", data.epsilon},
          {"base_level", data.base_level}}},
    };
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    RunConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "data") {
            if (!value.is_object()) bad("data", "expected an object");
            for (const auto& [dk, dv] : value.items()) {
                auto it = data_setters().find(dk);
                if (it == data_setters().end()) bad("data." + dk, "unknown key");
                it->second(c, "data." + dk, dv);
            }
            continue;
        }
        auto it = setters().find(key);
        if (it == setters().end()) bad(key, "unknown key");
        it->second(c, key, value);
    }
    c.validate();
    return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error&) {
        parsed = value;
    }
    json j = to_json();
    if (key.rfind("data.", 0) == 0) {
        const std::string sub = key.substr(5);
        if (!data_setters().count(sub)) bad(key, "unknown key");
        j["data"][sub] = parsed;
    } else {
        if (!setters().count(key)) bad(key, "unknown key");
        j[key] = parsed;
    }
    *this = from_json(j);
}

}  // namespace stmae
