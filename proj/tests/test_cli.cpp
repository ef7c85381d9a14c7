#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "feduaa/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    CliResult r;
    r.code = feduaa::run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

std::string slurp(const fs::path& path) {
    std::ifstream f(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const char* kSmallConfig = R"json({
  "data": {
    "seed": 5,
    "input_dim": 6,
    "separation": 4.0,
    "clients": [
      {"client_id": "a", "k": 3, "samples": 80},
      {"client_id": "b", "k": 3, "samples": 60, "feature_shift": 1.0}
    ]
  },
  "train": {"rounds": 2, "hidden": [6], "anneal_rounds": 4, "seed": 5}
})json";

}  // namespace

TEST_CASE("cli: generate writes one csv per client plus the manifest") {
    const fs::path dir = fresh_dir("feduaa_cli_gen");
    const fs::path cfg = dir / "config.json";
    write_file(cfg, "{}"); // all defaults: the 5-client benchmark

    const auto r = cli({"generate", "--config", cfg.string(), "--out", (dir / "out").string()});
    CHECK(r.code == 0);
    int csvs = 0;
    for (const auto& entry : fs::directory_iterator(dir / "out")) {
        if (entry.path().extension() == ".csv" && entry.path().filename() != "manifest.csv") ++csvs;
    }
    CHECK(csvs == 5);
    CHECK(fs::exists(dir / "out" / "manifest.csv"));
    CHECK(fs::exists(dir / "out" / "resolved_config.json"));
    fs::remove_all(dir);
}

TEST_CASE("cli: generate is byte-deterministic and rejects duplicate ids") {
    const fs::path dir = fresh_dir("feduaa_cli_gen_det");
    const fs::path cfg = dir / "config.json";
    write_file(cfg, kSmallConfig);

    CHECK(cli({"generate", "--config", cfg.string(), "--out", (dir / "o1").string()}).code == 0);
    CHECK(cli({"generate", "--config", cfg.string(), "--out", (dir / "o2").string()}).code == 0);
    CHECK(slurp(dir / "o1" / "client_a.csv") == slurp(dir / "o2" / "client_a.csv"));
    CHECK(slurp(dir / "o1" / "client_b.csv") == slurp(dir / "o2" / "client_b.csv"));
    CHECK(slurp(dir / "o1" / "manifest.csv") == slurp(dir / "o2" / "manifest.csv"));

    write_file(cfg, R"json({"data": {"clients": [
        {"client_id": "dup", "k": 3, "samples": 80},
        {"client_id": "dup", "k": 3, "samples": 80}
    ], "input_dim": 6}})json");
    const auto bad = cli({"generate", "--config", cfg.string(), "--out", (dir / "o3").string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("dup") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli: train writes artifacts, prints average_auc last, reruns identically") {
    const fs::path dir = fresh_dir("feduaa_cli_train");
    const fs::path cfg = dir / "config.json";
    write_file(cfg, kSmallConfig);

    const auto r1 = cli({"train", "--config", cfg.string(), "--out", (dir / "o1").string()});
    CHECK(r1.code == 0);
    const auto last_line_start = r1.out.rfind("average_auc=");
    REQUIRE(last_line_start != std::string::npos);
    CHECK(r1.out.substr(last_line_start).find("average_auc=") == 0);

    // 2 rounds x 2 clients data rows + header
    std::istringstream log(slurp(dir / "o1" / "rounds.csv"));
    std::string line;
    int rows = 0;
    while (std::getline(log, line)) ++rows;
    CHECK(rows == 1 + 2 * 2);

    const auto r2 = cli({"train", "--config", cfg.string(), "--out", (dir / "o2").string()});
    CHECK(r2.code == 0);
    for (const char* name : {"rounds.csv", "reports.csv", "eval.csv", "ckpt_a.txt", "ckpt_global.txt"}) {
        CHECK(slurp(dir / "o1" / name) == slurp(dir / "o2" / name));
    }
    // the echoed configs only differ in the output directory
    CHECK(slurp(dir / "o1" / "resolved_config.json") != "");
    fs::remove_all(dir);
}

TEST_CASE("cli: train consumes a generated manifest") {
    const fs::path dir = fresh_dir("feduaa_cli_manifest");
    const fs::path gen_cfg = dir / "gen.json";
    write_file(gen_cfg, kSmallConfig);
    REQUIRE(cli({"generate", "--config", gen_cfg.string(), "--out", (dir / "data").string()}).code == 0);

    const fs::path train_cfg = dir / "train.json";
    write_file(train_cfg, R"json({
      "data": {"manifest": "data/manifest.csv", "seed": 5},
      "train": {"rounds": 1, "hidden": [6], "seed": 5}
    })json");
    const auto r = cli({"train", "--config", train_cfg.string(), "--out", (dir / "out").string()});
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "out" / "eval.csv"));

    // a missing manifest is an io failure
    const fs::path broken = dir / "broken.json";
    write_file(broken, R"json({"data": {"manifest": "nope/manifest.csv"}})json");
    CHECK(cli({"train", "--config", broken.string(), "--out", (dir / "o2").string()}).code == 3);

    // manifest and inline clients cannot both be given
    const fs::path both = dir / "both.json";
    write_file(both, R"json({"data": {"manifest": "data/manifest.csv",
        "clients": [{"client_id": "a", "k": 3, "samples": 80}]}})json");
    const auto r2 = cli({"train", "--config", both.string(), "--out", (dir / "o3").string()});
    CHECK(r2.code == 2);
    CHECK(r2.err.find("mutually exclusive") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli: config validation failures exit 2 and name the key") {
    const fs::path dir = fresh_dir("feduaa_cli_badcfg");
    const fs::path cfg = dir / "config.json";

    write_file(cfg, R"json({"train": {"rounds": 2, "warmup": 5}})json");
    auto r = cli({"train", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("train.warmup") != std::string::npos);

    write_file(cfg, R"json({"ablation": {"head_variant": "softmax_ce", "aggregation_mode": "uaw"}})json");
    r = cli({"train", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == 2);

    write_file(cfg, "{ not json");
    r = cli({"train", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == 2);

    CHECK(cli({"train", "--config", (dir / "missing.json").string()}).code == 3);
    CHECK(cli({"train"}).code == 2);              // missing --config
    CHECK(cli({"frobnicate"}).code == 2);         // unknown command
    CHECK(cli({}).code == 2);                     // no command
    fs::remove_all(dir);
}

TEST_CASE("cli: a diverging run exits 4 and names the failing client") {
    const fs::path dir = fresh_dir("feduaa_cli_diverge");
    const fs::path cfg = dir / "config.json";
    write_file(cfg, R"json({
      "data": {"seed": 5, "input_dim": 6,
               "clients": [{"client_id": "a", "k": 3, "samples": 80}]},
      "train": {"rounds": 1, "hidden": [6], "lr": 1e308, "seed": 5},
      "ablation": {"head_variant": "softmax_ce", "aggregation_mode": "static_uniform"}
    })json");
    const auto r = cli({"train", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == 4);
    CHECK(r.err.find("client a") != std::string::npos);
    CHECK(r.err.find("round 0") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli: gradcheck passes, rejects zero cases, and catches a flipped gradient") {
    const auto ok = cli({"gradcheck", "--seed", "3", "--cases", "25"});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("PASS") != std::string::npos);
    CHECK(ok.out.find("l_ice") != std::string::npos);
    CHECK(ok.out.find("composed") != std::string::npos);

    CHECK(cli({"gradcheck", "--cases", "0"}).code == 2);

    const auto flipped = cli({"gradcheck", "--seed", "3", "--cases", "5", "--flip-tce-grad"});
    CHECK(flipped.code == 1);
    CHECK(flipped.out.find("FAIL") != std::string::npos);
}

TEST_CASE("cli: noise sweep emits one row per sigma per method") {
    const fs::path dir = fresh_dir("feduaa_cli_sweep");
    const fs::path cfg = dir / "config.json";
    write_file(cfg, kSmallConfig);

    const auto r = cli({"noise-sweep", "--config", cfg.string(), "--out", (dir / "out").string(),
                        "--sigmas", "0,0.5"});
    CHECK(r.code == 0);
    const std::string csv = slurp(dir / "out" / "noise_sweep.csv");
    std::istringstream ss(csv);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "sigma_sq,method,average_auc");
    int rows = 0;
    int uaw_rows = 0;
    while (std::getline(ss, line)) {
        ++rows;
        if (line.find(",uaw,") != std::string::npos) ++uaw_rows;
    }
    CHECK(rows == 2 * 3); // 2 sigmas x {uaw, static_uniform, none}
    CHECK(uaw_rows == 2);

    // the sigma=0 uaw row reproduces a plain training run's average exactly
    const auto train = cli({"train", "--config", cfg.string(), "--out", (dir / "t").string()});
    REQUIRE(train.code == 0);
    const auto pos = train.out.rfind("average_auc=");
    const std::string avg = train.out.substr(pos + 12, train.out.find('\n', pos) - pos - 12);
    CHECK(csv.find("0,uaw," + avg) != std::string::npos);
    fs::remove_all(dir);
}
