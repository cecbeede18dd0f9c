#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stmae/cli.hpp"

using namespace stmae;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "stmae");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("stmae_test_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::vector<std::string> kSmall = {
    "--set", "data.n_nodes=5",      "--set", "data.n_steps=220",   "--set", "history=4",
    "--set", "horizon=4",           "--set", "hidden_dim=3",       "--set", "walk_length=4",
    "--set", "pretrain_epochs=1",   "--set", "finetune_epochs=1",  "--set", "max_train_windows=16"};

std::vector<std::string> with_small(std::vector<std::string> args) {
    args.insert(args.end(), kSmall.begin(), kSmall.end());
    return args;
}

}  // namespace

TEST_CASE("config loading") {
    const fs::path dir = scratch("config");
    CHECK(load_config("", {}).to_json() == RunConfig().to_json());
    std::ofstream(dir / "empty.json").close();
    CHECK(load_config(dir / "empty.json", {}).to_json() == RunConfig().to_json());
    std::ofstream(dir / "c.json") << R"({"lambda": 4, "p_s": 0.5})";
    RunConfig c = load_config(dir / "c.json", {"p_s=0.6"});
    CHECK(c.lambda == 4.0);
    CHECK(c.p_s == 0.6);
    CHECK_THROWS_AS(load_config(dir / "c.json", {"p_t=1.0"}), std::invalid_argument);
    CHECK_THROWS_AS(load_config(dir / "missing.json", {}), std::exception);

    CHECK(parse_seeds("0,3,7") == std::vector<std::uint64_t>{0, 3, 7});
    CHECK_THROWS(parse_seeds("1,x"));
    CHECK_THROWS(parse_seeds(""));
    fs::remove_all(dir);
}

TEST_CASE("generate is byte-identical for a fixed seed") {
    const fs::path a = scratch("gen_a"), b = scratch("gen_b");
    REQUIRE(cli({"generate", "--seed", "7", "--out", a.string(), "--set", "data.n_steps=300"}) == kExitOk);
    REQUIRE(cli({"generate", "--seed", "7", "--out", b.string(), "--set", "data.n_steps=300"}) == kExitOk);
    for (const char* f : {"values.csv", "edges.csv", "meta.json"}) {
        CHECK(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(manifest["command"] == "generate");
    CHECK(manifest["artifacts"].contains("values.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("exit");
    CHECK(cli({"train", "--out", dir.string(), "--set", "bogus=1"}) == kExitConfigError);
    CHECK(cli({"train", "--out", dir.string(), "--set", "p_t=1.0"}) == kExitConfigError);
    CHECK(cli({"no-such-command"}) == kExitConfigError);
    CHECK(cli({"evaluate", "--out", dir.string(), "--checkpoint", (dir / "nothing").string()}) ==
          kExitRuntimeError);
    CHECK(cli({"--help"}) == kExitOk);
    fs::remove_all(dir);
}

TEST_CASE("train, then evaluate and fine-tune from its checkpoint") {
    const fs::path data = scratch("pipeline_data"), out = scratch("pipeline_out");
    REQUIRE(cli(with_small({"generate", "--out", data.string()})) == kExitOk);
    REQUIRE(cli(with_small({"train", "--data", data.string(), "--out", out.string()})) == kExitOk);
    for (const char* f : {"model.bin", "model.json", "curve.csv", "metrics.json",
                          "metrics_per_step.csv", "val_metrics.json", "manifest.json"})
        CHECK(fs::exists(out / f));
    auto metrics = nlohmann::json::parse(slurp(out / "metrics.json"));
    CHECK(metrics["per_step"].size() == 4);

    const fs::path eval = scratch("pipeline_eval");
    CHECK(cli(with_small({"evaluate", "--data", data.string(), "--out", eval.string(), "--checkpoint",
                          (out / "model").string(), "--split", "test"})) == kExitOk);
    CHECK(slurp(eval / "metrics.json") == slurp(out / "metrics.json"));

    const fs::path pre = scratch("pipeline_pre"), fine = scratch("pipeline_fine");
    CHECK(cli(with_small({"pretrain", "--data", data.string(), "--out", pre.string()})) == kExitOk);
    CHECK(fs::exists(pre / "pretrained.bin"));
    CHECK(cli(with_small({"finetune", "--data", data.string(), "--out", fine.string(),
                          "--checkpoint", (pre / "pretrained").string()})) == kExitOk);
    CHECK(fs::exists(fine / "metrics.json"));
    for (const auto& d : {data, out, eval, pre, fine}) fs::remove_all(d);
}

TEST_CASE("train twice gives identical metric bytes") {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    REQUIRE(cli(with_small({"train", "--out", a.string()})) == kExitOk);
    REQUIRE(cli(with_small({"train", "--out", b.string()})) == kExitOk);
    CHECK(slurp(a / "metrics.json") == slurp(b / "metrics.json"));
    CHECK(slurp(a / "model.bin") == slurp(b / "model.bin"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("ablate and sweep outputs") {
    const fs::path dir = scratch("ablate");
    REQUIRE(cli(with_small({"ablate", "--out", dir.string(), "--seeds", "0,1"})) == kExitOk);
    std::istringstream table(slurp(dir / "ablation.csv"));
    std::string line;
    std::getline(table, line);
    CHECK(line == "variant,seed,mae,rmse,mape");
    std::size_t rows = 0;
    while (std::getline(table, line)) ++rows;
    CHECK(rows == 10);
    CHECK(fs::exists(dir / "ablation_summary.csv"));

    const fs::path sw = scratch("sweep");
    REQUIRE(cli(with_small({"sweep", "--out", sw.string(), "--ps", "0.2,0.8", "--pt", "0.5"})) ==
            kExitOk);
    auto j = nlohmann::json::parse(slurp(sw / "sweep.json"));
    CHECK(j["val_mae"].size() == 2);
    CHECK(cli(with_small({"sweep", "--out", sw.string(), "--ps", "0.1"})) == kExitConfigError);
    fs::remove_all(dir);
    fs::remove_all(sw);
}
