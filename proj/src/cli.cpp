#include "feduaa/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "feduaa/data.hpp"
#include "feduaa/errors.hpp"
#include "feduaa/federation.hpp"
#include "feduaa/model.hpp"

namespace feduaa {

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

// ---------------------------------------------------------------------------
// config document
// ---------------------------------------------------------------------------

void reject_unknown_keys(const json& obj, const std::string& section,
                         const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key)) {
            throw ConfigError("config: unknown key '" +
                              (section.empty() ? key : section + "." + key) + "'");
        }
    }
}

struct ResolvedConfig {
    json doc;             // fully defaulted document, echoed next to outputs
    GenSpec gen;          // used when no manifest is given
    std::string manifest; // empty when generating in-memory
    std::string config_dir;
    RunConfig run;
    std::vector<double> sigmas;
    std::string out_dir;
};

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
}

template <typename T>
T take(json& section, const std::string& key, T fallback) {
    if (!section.contains(key)) {
        section[key] = fallback;
        return fallback;
    }
    try {
        return section.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for '" + key + "'");
    }
}

ResolvedConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed_override,
                              const std::string& out_override) {
    json doc = load_config_file(path);
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    reject_unknown_keys(doc, "", {"data", "train", "ablation", "noise", "output"});

    ResolvedConfig rc;
    rc.config_dir = std::filesystem::path(path).parent_path().string();

    json& data = doc["data"];
    if (!data.is_object() && !data.is_null()) throw ConfigError("config: 'data' must be an object");
    if (data.is_null()) data = json::object();
    reject_unknown_keys(data, "data",
                        {"manifest", "seed", "input_dim", "separation", "stddev", "clients"});

    auto data_seed = take<std::uint64_t>(data, "seed", 0);
    if (seed_override) {
        data_seed = *seed_override;
        data["seed"] = data_seed;
    }

    if (data.contains("manifest")) {
        if (data.contains("clients")) {
            throw ConfigError("config: data.manifest and data.clients are mutually exclusive");
        }
        rc.manifest = take<std::string>(data, "manifest", "");
        if (rc.manifest.empty()) throw ConfigError("config: data.manifest must be a path");
    }

    rc.gen.seed = data_seed;
    rc.gen.input_dim = take<int>(data, "input_dim", 20);
    rc.gen.cluster_separation = take<double>(data, "separation", 6.0);
    rc.gen.cluster_stddev = take<double>(data, "stddev", 1.0);

    if (rc.manifest.empty()) {
        if (!data.contains("clients")) {
            const GenSpec def = default_benchmark(data_seed);
            json clients = json::array();
            for (const auto& c : def.clients) {
                clients.push_back({{"client_id", c.client_id},
                                   {"k", c.k},
                                   {"samples", c.samples},
                                   {"label_skew", c.label_skew},
                                   {"feature_shift", c.feature_shift},
                                   {"label_noise", c.label_noise}});
            }
            data["clients"] = clients;
        }
        for (json& c : data["clients"]) {
            if (!c.is_object()) throw ConfigError("config: each data.clients entry must be an object");
            reject_unknown_keys(c, "data.clients",
                                {"client_id", "k", "samples", "label_skew", "feature_shift", "label_noise"});
            ClientGenSpec cs;
            if (!c.contains("client_id")) throw ConfigError("config: data.clients entry missing client_id");
            cs.client_id = take<std::string>(c, "client_id", "");
            cs.k = take<int>(c, "k", 2);
            cs.samples = take<int>(c, "samples", 100);
            cs.label_skew = take<double>(c, "label_skew", 1.0);
            cs.feature_shift = take<double>(c, "feature_shift", 0.0);
            cs.label_noise = take<double>(c, "label_noise", 0.0);
            rc.gen.clients.push_back(std::move(cs));
        }
        rc.gen.validate();
    }

    json& train = doc["train"];
    if (train.is_null()) train = json::object();
    if (!train.is_object()) throw ConfigError("config: 'train' must be an object");
    reject_unknown_keys(train, "train",
                        {"rounds", "local_epochs", "lr", "batch_size", "temperature", "anneal_rounds",
                         "seed", "hidden", "parallel_clients"});
    rc.run.rounds = take<int>(train, "rounds", 100);
    rc.run.local_epochs = take<int>(train, "local_epochs", 1);
    rc.run.lr = take<double>(train, "lr", 0.01);
    rc.run.batch_size = take<int>(train, "batch_size", 32);
    rc.run.temperature = take<double>(train, "temperature", 0.05);
    rc.run.anneal_rounds = take<int>(train, "anneal_rounds", 50);
    rc.run.seed = take<std::uint64_t>(train, "seed", 0);
    rc.run.hidden_dims = take<std::vector<int>>(train, "hidden", {16});
    rc.run.parallel_clients = take<bool>(train, "parallel_clients", true);
    if (seed_override) {
        rc.run.seed = *seed_override;
        train["seed"] = rc.run.seed;
    }

    json& ablation = doc["ablation"];
    if (ablation.is_null()) ablation = json::object();
    if (!ablation.is_object()) throw ConfigError("config: 'ablation' must be an object");
    reject_unknown_keys(ablation, "ablation", {"head_variant", "aggregation_mode"});
    rc.run.head = parse_head_variant(take<std::string>(ablation, "head_variant", "tweu"));
    rc.run.aggregation = parse_aggregation_mode(take<std::string>(ablation, "aggregation_mode", "uaw"));
    rc.run.validate();

    json& noise = doc["noise"];
    if (noise.is_null()) noise = json::object();
    if (!noise.is_object()) throw ConfigError("config: 'noise' must be an object");
    reject_unknown_keys(noise, "noise", {"sigmas"});
    rc.sigmas = take<std::vector<double>>(noise, "sigmas", {0.0, 0.5, 1.0, 2.0});
    for (double s : rc.sigmas) {
        if (!(s >= 0.0)) throw ConfigError("config: noise.sigmas entries must be >= 0");
    }

    json& output = doc["output"];
    if (output.is_null()) output = json::object();
    if (!output.is_object()) throw ConfigError("config: 'output' must be an object");
    reject_unknown_keys(output, "output", {"directory"});
    rc.out_dir = take<std::string>(output, "directory", "out");
    if (!out_override.empty()) {
        rc.out_dir = out_override;
        output["directory"] = rc.out_dir;
    }

    rc.doc = std::move(doc);
    return rc;
}

void write_resolved_config(const ResolvedConfig& rc) {
    std::error_code ec;
    std::filesystem::create_directories(rc.out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + rc.out_dir);
    const auto path = std::filesystem::path(rc.out_dir) / "resolved_config.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << rc.doc.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

FederatedDataset dataset_from(const ResolvedConfig& rc) {
    if (!rc.manifest.empty()) {
        const std::filesystem::path m(rc.manifest);
        const auto resolved = m.is_absolute() ? m : std::filesystem::path(rc.config_dir) / m;
        if (!std::filesystem::exists(resolved)) {
            throw IoError("manifest not found: " + resolved.string());
        }
        return load_manifest(resolved.string(), rc.gen.seed);
    }
    return generate(rc.gen);
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_generate(const ResolvedConfig& rc, std::ostream& out) {
    const FederatedDataset data = generate(rc.gen);
    write_resolved_config(rc);

    const std::filesystem::path base(rc.out_dir);
    std::vector<ManifestEntry> entries;
    for (const auto& part : data.partitions) {
        const std::string name = "client_" + part.client_id + ".csv";
        write_partition_csv((base / name).string(), part);
        entries.push_back({part.client_id, name, part.k});
    }
    write_manifest((base / "manifest.csv").string(), entries);
    out << "wrote " << data.partitions.size() << " client csv files and manifest to " << rc.out_dir
        << "\n";
    return kExitOk;
}

int cmd_train(const ResolvedConfig& rc, std::ostream& out) {
    const FederatedDataset data = dataset_from(rc);
    write_resolved_config(rc);

    const RunResult result = run_experiment(rc.run, data, rc.out_dir);
    out << "trained " << rc.run.rounds << " rounds, " << data.partitions.size() << " clients ("
        << to_string(rc.run.head) << " + " << to_string(rc.run.aggregation) << ")\n";
    out << "average_auc="
        << (result.final_eval.average_auc ? format_double(*result.final_eval.average_auc) : "nan")
        << "\n";
    return kExitOk;
}

int cmd_noise_sweep(const ResolvedConfig& rc, std::ostream& out) {
    const FederatedDataset data = dataset_from(rc);
    write_resolved_config(rc);

    if (rc.run.head == HeadVariant::softmax_ce) {
        throw ConfigError("noise-sweep: head_variant must be eu or tweu (uaw arm needs uncertainty)");
    }

    struct Method {
        const char* label;
        AggregationMode mode;
    };
    const Method methods[] = {{"uaw", AggregationMode::uaw},
                              {"static_uniform", AggregationMode::static_uniform},
                              {"singleset", AggregationMode::none}};

    std::string csv = "sigma_sq,method,average_auc\n";
    for (const Method& method : methods) {
        RunConfig cfg = rc.run;
        cfg.aggregation = method.mode;
        const RunResult result = run_experiment(cfg, data, "");
        for (double sigma_sq : rc.sigmas) {
            std::vector<ClientEval> evals;
            for (const auto& client : result.federation.clients) {
                const auto noise_seed =
                    derive_seed(cfg.seed, "noise:" + client.client_id + ":" + format_double(sigma_sq));
                evals.push_back(evaluate_client_corrupted(client, cfg, client.data.test_idx,
                                                          NoiseSpec{sigma_sq}, noise_seed));
            }
            const EvalReport report = make_eval_report(std::move(evals));
            csv += format_double(sigma_sq) + "," + method.label + "," +
                   (report.average_auc ? format_double(*report.average_auc) : "") + "\n";
        }
    }

    const auto path = std::filesystem::path(rc.out_dir) / "noise_sweep.csv";
    std::ofstream file(path);
    if (!file) throw IoError("cannot open for writing: " + path.string());
    file << csv;
    if (!file) throw IoError("write failed: " + path.string());
    out << "wrote " << path.string() << "\n";
    return kExitOk;
}

// Combined tolerance: err = |a-f| / max(|a|, |f|, 1e-3), so err < 1e-4 means
// |a-f| <= max(1e-4 * max(|a|,|f|), 1e-7) -- relative 1e-4 with an absolute
// floor of 1e-7 for near-zero entries.
double grad_err(double analytic, double fd) {
    const double scale = std::max({std::fabs(analytic), std::fabs(fd), 1e-3});
    return std::fabs(analytic - fd) / scale;
}

int cmd_gradcheck(std::uint64_t seed, int cases, bool flip_tce_grad, std::ostream& out) {
    const double threshold = 1e-4;
    const double fd_step = 1e-5;

    struct Term {
        std::string name;
        double max_err = 0.0;
        std::uint64_t worst_seed = 0;
    };
    Term terms[5] = {{"l_ice"}, {"l_kl"}, {"l_tce"}, {"total"}, {"composed"}};

    for (int c = 0; c < cases; ++c) {
        const std::uint64_t case_seed = derive_seed(seed, "gradcheck:" + std::to_string(c));
        Rng rng(case_seed);
        const int k = 2 + static_cast<int>(rng.below(7));     // 2..8 classes
        const int batch = 1 + static_cast<int>(rng.below(4)); // 1..4 samples
        const int round = static_cast<int>(rng.below(100));
        LossConfig loss_cfg;
        loss_cfg.temperature = 0.05;
        loss_cfg.anneal_rounds = 50;

        Tensor2 logits(batch, k);
        for (auto& v : logits.data) v = rng.uniform(-4.0, 4.0);
        std::vector<int> labels(static_cast<std::size_t>(batch));
        for (auto& y : labels) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));

        TermGrads analytic = per_term_logit_grads(logits, labels, loss_cfg.temperature);
        if (flip_tce_grad) {
            for (auto& v : analytic.d_tce.data) v = -v;
        }
        const auto [breakdown, total_grad] = total_loss_and_grad(logits, labels, loss_cfg, round);
        (void)breakdown;

        // batch-sum losses as functions of the flattened logits
        auto with_logits = [&](const std::vector<double>& flat, auto&& per_sample) {
            const Tensor2 z(batch, k, flat);
            double sum = 0.0;
            for (int r = 0; r < batch; ++r) {
                const auto ev = dirichlet_outputs(evidence_from_logits(z.row_vec(r)), loss_cfg.temperature);
                sum += per_sample(ev, labels[static_cast<std::size_t>(r)]);
            }
            return sum;
        };
        const auto fd_ice = finite_diff_grad(
            [&](const std::vector<double>& flat) {
                return with_logits(flat, [](const EvidentialOutput& ev, int y) {
                    return loss_ice(ev.alpha, y);
                });
            },
            logits.data, fd_step);
        const auto fd_kl = finite_diff_grad(
            [&](const std::vector<double>& flat) {
                return with_logits(flat, [](const EvidentialOutput& ev, int y) {
                    return loss_kl(ev.alpha, y);
                });
            },
            logits.data, fd_step);
        const auto fd_tce = finite_diff_grad(
            [&](const std::vector<double>& flat) {
                return with_logits(flat, [](const EvidentialOutput& ev, int y) {
                    return loss_tce(ev.warmed, y);
                });
            },
            logits.data, fd_step);
        const auto fd_total = finite_diff_grad(
            [&](const std::vector<double>& flat) {
                const Tensor2 z(batch, k, flat);
                return total_loss_and_grad(z, labels, loss_cfg, round).first.total;
            },
            logits.data, fd_step);

        auto track = [&](Term& term, double analytic_v, double fd_v) {
            const double err = grad_err(analytic_v, fd_v);
            if (err > term.max_err) {
                term.max_err = err;
                term.worst_seed = case_seed;
            }
        };
        for (std::size_t i = 0; i < logits.data.size(); ++i) {
            track(terms[0], analytic.d_ice.data[i], fd_ice[i]);
            track(terms[1], analytic.d_kl.data[i], fd_kl[i]);
            track(terms[2], analytic.d_tce.data[i], fd_tce[i]);
            track(terms[3], total_grad.data[i], fd_total[i]);
        }

        // composed: same stack driven through the network, gradient w.r.t.
        // every model parameter
        {
            const int d = 3;
            ModelShape shape{{d, 4}, k};
            Rng init_rng(derive_seed(case_seed, "params"));
            const ModelParams params = init_params(shape, init_rng);
            Tensor2 x(batch, d);
            for (auto& v : x.data) v = init_rng.uniform(-2.0, 2.0);

            const Tensor2 z = mlp_forward(params, x);
            const auto [bd, dlogits] = total_loss_and_grad(z, labels, loss_cfg, round);
            (void)bd;
            const GradientVector g = mlp_backward(params, x, dlogits);

            std::vector<double> flat = params.encoder;
            flat.insert(flat.end(), params.head.begin(), params.head.end());
            const auto fd = finite_diff_grad(
                [&](const std::vector<double>& pv) {
                    ModelParams p = params;
                    p.encoder.assign(pv.begin(), pv.begin() + static_cast<std::ptrdiff_t>(params.encoder.size()));
                    p.head.assign(pv.begin() + static_cast<std::ptrdiff_t>(params.encoder.size()), pv.end());
                    const Tensor2 zz = mlp_forward(p, x);
                    return total_loss_and_grad(zz, labels, loss_cfg, round).first.total;
                },
                flat, fd_step);
            for (std::size_t i = 0; i < g.encoder.size(); ++i) track(terms[4], g.encoder[i], fd[i]);
            for (std::size_t i = 0; i < g.head.size(); ++i) {
                track(terms[4], g.head[i], fd[g.encoder.size() + i]);
            }
        }
    }

    out << "gradcheck: cases=" << cases << "\n";
    bool ok = true;
    std::uint64_t worst_seed = 0;
    double worst = 0.0;
    for (const auto& t : terms) {
        out << t.name << " max_err=" << format_double(t.max_err) << "\n";
        if (t.max_err >= threshold) {
            ok = false;
            if (t.max_err > worst) {
                worst = t.max_err;
                worst_seed = t.worst_seed;
            }
        }
    }
    if (!ok) {
        out << "FAIL (threshold " << format_double(threshold) << ", worst case seed " << worst_seed
            << ")\n";
        return kExitCheckFailed;
    }
    out << "PASS (threshold " << format_double(threshold) << ")\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"FedUAA: federated training with uncertainty-aware aggregation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::optional<std::uint64_t> seed_override;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (json)")->required();
        cmd->add_option("--seed", seed_override, "override every seed in the config");
        cmd->add_option("--out", out_override, "override output.directory");
    };

    auto* gen = app.add_subcommand("generate", "write the synthetic dataset csv files + manifest");
    add_common(gen);
    auto* train = app.add_subcommand("train", "run a federated experiment and write its artifacts");
    add_common(train);
    auto* sweep = app.add_subcommand("noise-sweep",
                                     "train uaw/static_uniform/singleset arms and evaluate under "
                                     "increasing test-time gaussian noise");
    add_common(sweep);
    std::string sigmas_arg;
    sweep->add_option("--sigmas", sigmas_arg, "comma-separated noise variances (overrides config)");

    auto* grad = app.add_subcommand("gradcheck", "analytic vs central-difference gradients");
    std::uint64_t grad_seed = 0;
    int grad_cases = 100;
    bool flip_tce = false;
    grad->add_option("--seed", grad_seed, "base seed");
    grad->add_option("--cases", grad_cases, "number of random cases");
    grad->add_flag("--flip-tce-grad", flip_tce, "negate the analytic tce gradient (harness self-test)")
        ->group(""); // hidden

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (grad->parsed()) {
            if (grad_cases < 1) {
                err << "usage error: --cases must be >= 1\n";
                return kExitConfig;
            }
            return cmd_gradcheck(grad_seed, grad_cases, flip_tce, out);
        }

        ResolvedConfig rc = resolve_config(config_path, seed_override, out_override);
        if (!sigmas_arg.empty()) {
            rc.sigmas.clear();
            std::stringstream ss(sigmas_arg);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                try {
                    rc.sigmas.push_back(std::stod(tok));
                } catch (const std::exception&) {
                    throw ConfigError("bad --sigmas entry '" + tok + "'");
                }
            }
            rc.doc["noise"]["sigmas"] = rc.sigmas;
        }

        if (gen->parsed()) return cmd_generate(rc, out);
        if (train->parsed()) return cmd_train(rc, out);
        if (sweep->parsed()) return cmd_noise_sweep(rc, out);
        err << "usage error: no command\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DomainError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ShapeError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
}

}  // namespace feduaa
