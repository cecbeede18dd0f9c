#include "stmae/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "stmae/csv.hpp"
#include "stmae/experiments.hpp"
#include "stmae/gradcheck.hpp"

namespace stmae {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Raised for problems with the configuration or flags (exit code 1).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + file.string());
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

std::vector<double> parse_ratios(const std::string& list, const std::string& flag) {
    std::vector<double> out;
    std::size_t row = 0;
    for (const auto& cell : csv::split(list)) {
        try {
            out.push_back(csv::parse_cell(cell, flag, 0, row++));
        } catch (const std::exception& e) {
            throw ConfigError(flag + ": " + e.what());
        }
        if (out.back() < 0.2 || out.back() > 0.8)
            throw ConfigError(flag + ": " + cell + " is outside [0.2, 0.8]");
    }
    return out;
}

struct Common {
    std::string config;
    std::string out = ".";
    std::vector<std::string> overrides;
    std::string data_dir;
};

void add_common(CLI::App* cmd, Common& c, bool with_data = true) {
    cmd->add_option("--config", c.config, "JSON run config (defaults when omitted)");
    cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
    cmd->add_option("--set", c.overrides, "Override a config key, key=value (repeatable)")
        ->allow_extra_args(false);
    if (with_data)
        cmd->add_option("--data", c.data_dir,
                        "Dataset directory (values.csv, edges.csv, meta.json); synthetic when omitted");
}

class Runner {
public:
    Runner(std::string command, const Common& common) : command_(std::move(command)), common_(common) {}

    RunConfig& config() { return cfg_; }
    const fs::path& out() const { return out_; }

    void load() {
        try {
            cfg_ = load_config(common_.config, common_.overrides);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        out_ = common_.out;
        fs::create_directories(out_);
    }

    Dataset dataset() const {
        if (!common_.data_dir.empty()) return load_csv(DatasetFiles::in_directory(common_.data_dir));
        return synthesize(cfg_.data);
    }

    PreparedData prepared() const { return prepare(dataset(), cfg_.history, cfg_.horizon); }

    void emit(const std::string& name, const std::string& text) {
        write_file(out_ / name, text);
        artifacts_[name] = fnv1a_hex(text);
    }

    void emit_model(const std::string& stem, const Model& model) {
        save_model(model, out_ / stem);
        for (const char* ext : {".bin", ".json"}) {
            const std::string name = stem + ext;
            artifacts_[name] = fnv1a_hex(read_file(out_ / name));
        }
    }

    void note(const std::string& key, json value) { extra_[key] = std::move(value); }

    void write_manifest() {
        json m{{"command", command_},
               {"config", cfg_.to_json()},
               {"seed", cfg_.seed},
               {"data", common_.data_dir.empty() ? json("synthetic") : json(common_.data_dir)},
               {"artifacts", artifacts_}};
        for (auto& [k, v] : extra_.items()) m[k] = v;
        write_file(out_ / "manifest.json", m.dump(2) + "\n");
    }

private:
    std::string command_;
    Common common_;
    RunConfig cfg_;
    fs::path out_;
    json artifacts_ = json::object();
    json extra_ = json::object();
};

void check_model_matches(const Model& model, const PreparedData& data) {
    const auto& c = model.config();
    if (c.n_nodes != data.n_nodes || c.input_dim != data.n_features)
        throw std::runtime_error("checkpoint expects " + std::to_string(c.n_nodes) + " nodes and " +
                                 std::to_string(c.input_dim) + " features, dataset has " +
                                 std::to_string(data.n_nodes) + " and " +
                                 std::to_string(data.n_features));
}

void emit_report(Runner& r, const std::string& stem, const MetricReport& report) {
    r.emit(stem + ".json", report.to_json().dump(2) + "\n");
    r.emit(stem + "_per_step.csv", per_step_table(report));
}

void print_summary(const std::string& label, const MetricReport& m) {
    std::cout << label << ": MAE " << csv::format_double(m.mae) << "  RMSE "
              << csv::format_double(m.rmse) << "  MAPE "
              << (m.mape_percent ? csv::format_double(*m.mape_percent) + "%" : std::string("n/a"))
              << '\n';
}

}  // namespace

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!path.empty()) {
        const std::string text = read_file(path);
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
            json j;
            try {
                j = json::parse(text);
            } catch (const json::parse_error& e) {
                throw std::invalid_argument(path.string() + ": " + e.what());
            }
            cfg = RunConfig::from_json(j);
        }
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("override '" + o + "' is not key=value");
        cfg.set(o.substr(0, eq), o.substr(eq + 1));
    }
    return cfg;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
    std::vector<std::uint64_t> seeds;
    for (const auto& cell : csv::split(list)) {
        std::uint64_t v = 0;
        const auto* end = cell.data() + cell.size();
        auto [ptr, ec] = std::from_chars(cell.data(), end, v);
        if (cell.empty() || ec != std::errc() || ptr != end)
            throw std::invalid_argument("--seeds: '" + cell + "' is not a nonnegative integer");
        seeds.push_back(v);
    }
    if (seeds.empty()) throw std::invalid_argument("--seeds: empty list");
    return seeds;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Spatial-temporal masked autoencoder pretraining for traffic forecasting"};
    app.require_subcommand(1);

    Common common;
    std::optional<std::uint64_t> gen_seed;
    std::string checkpoint, split = "test", seeds_arg = "0", ps_arg = "0.2,0.5,0.8",
                            pt_arg = "0.2,0.5,0.8";

    auto* generate = app.add_subcommand("generate", "Write a synthetic dataset (values, edges, meta)");
    add_common(generate, common, false);
    generate->add_option("--seed", gen_seed, "Data seed (overrides data.seed)");

    auto* pretrain = app.add_subcommand("pretrain", "Masked pretraining only; writes a checkpoint");
    add_common(pretrain, common);

    auto* finetune = app.add_subcommand("finetune", "Fine-tune a pretrained checkpoint");
    add_common(finetune, common);
    finetune->add_option("--checkpoint", checkpoint, "Checkpoint stem (without .bin/.json)")
        ->required();

    auto* train = app.add_subcommand("train", "Pretraining followed by fine-tuning");
    add_common(train, common);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Metrics of a checkpoint on a split");
    add_common(evaluate_cmd, common);
    evaluate_cmd->add_option("--checkpoint", checkpoint, "Checkpoint stem")->required();
    evaluate_cmd->add_option("--split", split, "val or test")
        ->check(CLI::IsMember({"val", "test"}))
        ->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "Variant ablation table");
    add_common(ablate, common);
    ablate->add_option("--seeds", seeds_arg, "Comma-separated seeds")->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "Masking-ratio sensitivity heatmap");
    add_common(sweep, common);
    sweep->add_option("--seeds", seeds_arg, "Comma-separated seeds")->capture_default_str();
    sweep->add_option("--ps", ps_arg, "Spatial ratios")->capture_default_str();
    sweep->add_option("--pt", pt_arg, "Temporal ratios")->capture_default_str();

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (gradcheck->parsed()) {
            double worst = 0.0;
            for (const auto& c : run_gradcheck_suite()) {
                std::cout << std::left << std::setw(24) << c.name << ' '
                          << csv::format_double(c.result.max_rel_error) << '\n';
                worst = std::max(worst, c.result.max_rel_error);
            }
            std::cout << "max relative error: " << csv::format_double(worst) << '\n';
            return worst < kGradCheckTolerance ? kExitOk : kExitRuntimeError;
        }

        CLI::App* sub = app.get_subcommands().front();
        Runner r(sub->get_name(), common);
        r.load();
        RunConfig& cfg = r.config();

        std::vector<std::uint64_t> seeds;
        std::vector<double> ps_grid, pt_grid;
        try {
            if (ablate->parsed() || sweep->parsed()) seeds = parse_seeds(seeds_arg);
            if (sweep->parsed()) {
                ps_grid = parse_ratios(ps_arg, "--ps");
                pt_grid = parse_ratios(pt_arg, "--pt");
            }
            if (gen_seed) cfg.data.seed = *gen_seed;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }

        if (generate->parsed()) {
            const Dataset data = synthesize(cfg.data);
            const auto files = DatasetFiles::in_directory(r.out());
            save_csv(data, files);
            for (const auto& f : {files.values, files.edges, files.meta})
                r.emit(f.filename().string(), read_file(f));
            std::cout << "wrote " << data.n_nodes << " nodes x " << data.n_steps << " steps, "
                      << data.graph.n_edges() << " edges to " << r.out().string() << '\n';
        } else if (pretrain->parsed()) {
            const PreparedData data = r.prepared();
            Rng init = make_stream(cfg.seed, "init");
            Model model(cfg.encoder(data.n_nodes, data.n_features), init);
            const auto curve = run_pretraining(cfg, data, model);
            r.emit_model("pretrained", model);
            r.emit("curve.csv", curve_csv(curve));
            if (!curve.empty())
                std::cout << "final pretrain loss " << csv::format_double(curve.back().train_loss)
                          << '\n';
        } else if (finetune->parsed()) {
            const PreparedData data = r.prepared();
            Model model = load_model(checkpoint);
            check_model_matches(model, data);
            std::vector<CurveRow> curve;
            std::size_t best_epoch = 0;
            Model best = run_finetuning(cfg, data, model, curve, &best_epoch);
            auto report = evaluate(best, data.graph, data.split.test, data.norm);
            report.variant = to_string(cfg.variant);
            report.seed = cfg.seed;
            r.emit_model("model", best);
            r.emit("curve.csv", curve_csv(curve));
            emit_report(r, "metrics", report);
            r.note("best_epoch", best_epoch);
            print_summary("test", report);
        } else if (train->parsed()) {
            const PreparedData data = r.prepared();
            auto result = run_two_stage(cfg, data);
            r.emit_model("model", result.model);
            r.emit("curve.csv", curve_csv(result.curve));
            emit_report(r, "metrics", result.test_report);
            emit_report(r, "val_metrics", result.val_report);
            r.note("best_epoch", result.best_epoch);
            print_summary("val", result.val_report);
            print_summary("test", result.test_report);
        } else if (evaluate_cmd->parsed()) {
            const PreparedData data = r.prepared();
            Model model = load_model(checkpoint);
            check_model_matches(model, data);
            auto report = evaluate(model, data.graph,
                                   split == "val" ? data.split.val : data.split.test, data.norm);
            report.variant = to_string(cfg.variant);
            report.seed = cfg.seed;
            emit_report(r, "metrics", report);
            std::cout << report.to_json().dump(2) << '\n';
        } else if (ablate->parsed()) {
            const PreparedData data = r.prepared();
            const auto table = run_ablation(data, cfg, seeds);
            r.emit("ablation.csv", ablation_csv(table));
            r.emit("ablation_summary.csv", ablation_summary_csv(table));
            r.note("seeds", seeds);
            std::cout << ablation_summary_csv(table);
        } else if (sweep->parsed()) {
            const PreparedData data = r.prepared();
            const auto map = sensitivity_sweep(data, cfg, ps_grid, pt_grid, seeds);
            r.emit("heatmap.csv", heatmap_csv(map));
            r.emit("sweep.json", map.to_json().dump(2) + "\n");
            r.note("seeds", seeds);
            std::cout << heatmap_csv(map) << "argmin p_s=" << csv::format_double(map.p_s[map.argmin_s])
                      << " p_t=" << csv::format_double(map.p_t[map.argmin_t]) << " val MAE "
                      << csv::format_double(map.val_mae[map.argmin_s][map.argmin_t]) << '\n';
        }
        r.write_manifest();
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntimeError;
    }
}

}  // namespace stmae
