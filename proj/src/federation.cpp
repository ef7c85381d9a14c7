#include "feduaa/federation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>

#include "feduaa/errors.hpp"

namespace feduaa {

AggregationMode parse_aggregation_mode(const std::string& name) {
    if (name == "uaw") return AggregationMode::uaw;
    if (name == "static_uniform") return AggregationMode::static_uniform;
    if (name == "static_sample_count") return AggregationMode::static_sample_count;
    if (name == "none" || name == "singleset") return AggregationMode::none;
    throw ConfigError("unknown aggregation_mode '" + name + "'");
}

HeadVariant parse_head_variant(const std::string& name) {
    if (name == "softmax_ce") return HeadVariant::softmax_ce;
    if (name == "eu") return HeadVariant::eu;
    if (name == "tweu") return HeadVariant::tweu;
    throw ConfigError("unknown head_variant '" + name + "'");
}

std::string to_string(AggregationMode mode) {
    switch (mode) {
        case AggregationMode::uaw: return "uaw";
        case AggregationMode::static_uniform: return "static_uniform";
        case AggregationMode::static_sample_count: return "static_sample_count";
        case AggregationMode::none: return "none";
    }
    return "?";
}

std::string to_string(HeadVariant variant) {
    switch (variant) {
        case HeadVariant::softmax_ce: return "softmax_ce";
        case HeadVariant::eu: return "eu";
        case HeadVariant::tweu: return "tweu";
    }
    return "?";
}

void RunConfig::validate() const {
    if (rounds < 0) throw ConfigError("RunConfig: rounds must be >= 0");
    if (local_epochs < 1) throw ConfigError("RunConfig: local_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("RunConfig: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("RunConfig: lr must be positive");
    if (!(temperature > 0.0)) throw ConfigError("RunConfig: temperature must be positive");
    if (anneal_rounds < 1) throw ConfigError("RunConfig: anneal_rounds must be >= 1");
    for (int h : hidden_dims) {
        if (h < 1) throw ConfigError("RunConfig: hidden dimensions must be positive");
    }
    if (aggregation == AggregationMode::uaw && head == HeadVariant::softmax_ce) {
        throw ConfigError("RunConfig: uaw aggregation needs an uncertainty head (eu or tweu)");
    }
}

Federation make_federation(const FederatedDataset& data, const RunConfig& cfg) {
    cfg.validate();
    if (data.partitions.empty()) throw DomainError("make_federation: dataset has no partitions");

    const int input_dim = data.partitions.front().features.cols;
    std::vector<int> encoder_dims;
    encoder_dims.push_back(input_dim);
    for (int h : cfg.hidden_dims) encoder_dims.push_back(h);

    Federation fed;
    fed.server.encoder_dims = encoder_dims;
    fed.server.round = 0;

    for (const auto& part : data.partitions) {
        if (part.features.cols != input_dim) {
            throw ShapeError("make_federation: client " + part.client_id + " has input dimension " +
                             std::to_string(part.features.cols) + ", expected " +
                             std::to_string(input_dim));
        }
        ClientState client{part.client_id, part.k, {}, part,
                           Rng(derive_seed(cfg.seed, "client:" + part.client_id))};
        ModelShape shape{encoder_dims, part.k};
        client.params = init_params(shape, client.rng);
        fed.clients.push_back(std::move(client));
    }

    Rng server_rng(derive_seed(cfg.seed, "server"));
    ModelShape server_shape{encoder_dims, 1}; // head unused; only the encoder is kept
    fed.server.global_encoder = init_params(server_shape, server_rng).encoder;
    return fed;
}

void broadcast_encoder(const ServerState& server, std::vector<ClientState>& clients) {
    for (auto& client : clients) {
        if (client.params.encoder.size() != server.global_encoder.size()) {
            throw ShapeError("broadcast_encoder: client " + client.client_id +
                             " encoder length mismatch");
        }
        client.params.encoder = server.global_encoder;
    }
}

std::pair<LossBreakdown, Tensor2> head_loss(HeadVariant variant, const Tensor2& logits,
                                            const std::vector<int>& labels, const LossConfig& cfg,
                                            int round) {
    switch (variant) {
        case HeadVariant::tweu: return total_loss_and_grad(logits, labels, cfg, round);
        case HeadVariant::eu: return uce_loss_and_grad(logits, labels, cfg, round);
        case HeadVariant::softmax_ce: break;
    }

    if (static_cast<int>(labels.size()) != logits.rows) {
        throw ShapeError("head_loss: label count does not match logit rows");
    }
    if (logits.rows == 0) throw DomainError("head_loss: empty batch");
    const int k = logits.cols;
    const double inv_n = 1.0 / logits.rows;
    Tensor2 grad(logits.rows, k);
    double ce = 0.0;
    for (int r = 0; r < logits.rows; ++r) {
        const int label = labels[static_cast<std::size_t>(r)];
        if (label < 0 || label >= k) {
            throw DomainError("head_loss: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(k) + ")");
        }
        const double* z = logits.row(r);
        const double m = *std::max_element(z, z + k);
        double denom = 0.0;
        for (int j = 0; j < k; ++j) denom += std::exp(z[j] - m);
        ce += -(z[label] - m) + std::log(denom);
        for (int j = 0; j < k; ++j) {
            const double p = std::exp(z[j] - m) / denom;
            grad.at(r, j) = (p - ((j == label) ? 1.0 : 0.0)) * inv_n;
        }
    }
    LossBreakdown b;
    b.l_tce = ce * inv_n;
    b.total = b.l_tce;
    if (!std::isfinite(b.total)) throw NumericError("head_loss: non-finite cross-entropy");
    return {b, grad};
}

EvalScores evaluate_head(HeadVariant variant, const ModelParams& params, const Tensor2& features,
                         double temperature) {
    const Tensor2 logits = mlp_forward(params, features);
    const int k = logits.cols;

    EvalScores out;
    out.scores = Tensor2(logits.rows, k);
    out.predictions.resize(static_cast<std::size_t>(logits.rows));

    if (variant == HeadVariant::softmax_ce) {
        out.kind = ScoreKind::softmax_probs;
        for (int r = 0; r < logits.rows; ++r) {
            const double* z = logits.row(r);
            const double m = *std::max_element(z, z + k);
            double denom = 0.0;
            for (int j = 0; j < k; ++j) denom += std::exp(z[j] - m);
            for (int j = 0; j < k; ++j) out.scores.at(r, j) = std::exp(z[j] - m) / denom;
        }
    } else {
        out.kind = (variant == HeadVariant::tweu) ? ScoreKind::warmed_beliefs : ScoreKind::beliefs;
        out.uncertainty.resize(static_cast<std::size_t>(logits.rows));
        for (int r = 0; r < logits.rows; ++r) {
            const auto ev = dirichlet_outputs(evidence_from_logits(logits.row_vec(r)), temperature);
            out.uncertainty[static_cast<std::size_t>(r)] = ev.uncertainty;
            const auto& s = (variant == HeadVariant::tweu) ? ev.warmed : ev.beliefs;
            for (int j = 0; j < k; ++j) out.scores.at(r, j) = s[static_cast<std::size_t>(j)];
        }
    }

    for (int r = 0; r < logits.rows; ++r) {
        const double* s = out.scores.row(r);
        out.predictions[static_cast<std::size_t>(r)] =
            static_cast<int>(std::max_element(s, s + k) - s);
    }
    return out;
}

namespace {

std::optional<double> guarded_auc(const Tensor2& scores, const std::vector<int>& labels) {
    try {
        return multiclass_auc(scores, labels);
    } catch (const DomainError&) {
        return std::nullopt; // single-class or otherwise degenerate split
    }
}

std::vector<int> labels_at(const ClientPartition& part, const std::vector<int>& indices) {
    std::vector<int> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out[i] = part.labels[static_cast<std::size_t>(indices[i])];
    }
    return out;
}

ClientEval eval_on_features(const ClientState& client, const RunConfig& cfg,
                            const Tensor2& features, const std::vector<int>& labels) {
    const EvalScores scores = evaluate_head(cfg.head, client.params, features, cfg.temperature);

    ClientEval eval;
    eval.client_id = client.client_id;
    eval.auc = guarded_auc(scores.scores, labels);

    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (scores.predictions[i] == labels[i]) ++hits;
    }
    eval.accuracy = labels.empty() ? 0.0 : static_cast<double>(hits) / labels.size();

    if (!scores.uncertainty.empty()) {
        std::vector<UncertaintyRecord> records(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            records[i] = {scores.uncertainty[i], scores.predictions[i] == labels[i]};
        }
        const auto sep = uncertainty_separation(records);
        eval.mean_u_correct = sep.mean_correct;
        eval.mean_u_wrong = sep.mean_wrong;
    }
    return eval;
}

}  // namespace

ClientEval evaluate_client(const ClientState& client, const RunConfig& cfg,
                           const std::vector<int>& indices) {
    return eval_on_features(client, cfg, gather_rows(client.data.features, indices),
                            labels_at(client.data, indices));
}

ClientEval evaluate_client_corrupted(const ClientState& client, const RunConfig& cfg,
                                     const std::vector<int>& indices, const NoiseSpec& noise,
                                     std::uint64_t noise_seed) {
    const Tensor2 clean = gather_rows(client.data.features, indices);
    return eval_on_features(client, cfg, corrupt(clean, noise, noise_seed),
                            labels_at(client.data, indices));
}

namespace {

ClientRoundOutput local_round_impl(ClientState& client, const RunConfig& cfg, int round);

}  // namespace

ClientRoundOutput local_round(ClientState& client, const RunConfig& cfg, int round) {
    try {
        return local_round_impl(client, cfg, round);
    } catch (const NumericError& e) {
        throw NumericError("client " + client.client_id + ", round " + std::to_string(round) + ": " +
                           e.what());
    }
}

namespace {

ClientRoundOutput local_round_impl(ClientState& client, const RunConfig& cfg, int round) {
    const LossConfig loss_cfg = cfg.loss_config();
    const auto& part = client.data;

    LossBreakdown sum;
    std::size_t batches = 0;

    std::vector<int> order = part.train_idx;
    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        client.rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::vector<int> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Tensor2 x = gather_rows(part.features, batch_idx);
            const std::vector<int> y = labels_at(part, batch_idx);

            const Tensor2 logits = mlp_forward(client.params, x);
            auto [breakdown, dlogits] = head_loss(cfg.head, logits, y, loss_cfg, round);
            if (!std::isfinite(breakdown.total)) throw NumericError("non-finite training loss");
            const GradientVector grads = mlp_backward(client.params, x, dlogits);
            client.params = sgd_step(client.params, grads, cfg.lr);

            sum.l_ice += breakdown.l_ice;
            sum.l_kl += breakdown.l_kl;
            sum.l_uce += breakdown.l_uce;
            sum.l_tce += breakdown.l_tce;
            sum.total += breakdown.total;
            ++batches;
        }
    }

    ClientRoundOutput out;
    out.record.client_id = client.client_id;
    out.record.sample_count = static_cast<int>(part.train_idx.size());
    if (batches > 0) {
        const double inv = 1.0 / static_cast<double>(batches);
        out.record.loss = {sum.l_ice * inv, sum.l_kl * inv, sum.l_uce * inv, sum.l_tce * inv,
                           sum.total * inv};
    }
    if (!std::isfinite(out.record.loss.total)) throw NumericError("non-finite training loss");

    // Evaluation pass on the freshly updated model: predictions and
    // uncertainties over the training split feed the threshold search.
    const Tensor2 train_x = gather_rows(part.features, part.train_idx);
    const std::vector<int> train_y = labels_at(part, part.train_idx);
    const EvalScores train_scores = evaluate_head(cfg.head, client.params, train_x, cfg.temperature);

    double theta = 0.0;
    if (!train_scores.uncertainty.empty()) {
        const std::vector<int> mispredicted = misprediction_labels(train_scores.predictions, train_y);
        std::vector<UncertaintyRecord> records(train_y.size());
        for (std::size_t i = 0; i < train_y.size(); ++i) {
            records[i] = {train_scores.uncertainty[i], mispredicted[i] == 0};
        }
        theta = youden_theta(records);
        const auto sep = uncertainty_separation(records);
        out.record.mean_u_correct = sep.mean_correct;
        out.record.mean_u_wrong = sep.mean_wrong;
    }

    out.record.theta = theta;
    out.record.train_auc = guarded_auc(train_scores.scores, train_y);
    out.record.test_auc = evaluate_client(client, cfg, part.test_idx).auc;

    out.report.client_id = client.client_id;
    out.report.theta = theta;
    out.report.encoder_params = client.params.encoder;
    out.report.sample_count = static_cast<int>(part.train_idx.size());
    return out;
}

}  // namespace

AggregationWeights compute_weights(AggregationMode mode, const std::vector<ClientReport>& reports) {
    if (reports.empty()) throw DomainError("compute_weights: no reports");
    AggregationWeights w;
    switch (mode) {
        case AggregationMode::uaw: {
            std::vector<double> thetas(reports.size());
            for (std::size_t i = 0; i < reports.size(); ++i) thetas[i] = reports[i].theta;
            return softmax_weights(thetas);
        }
        case AggregationMode::static_uniform: {
            w.weights.assign(reports.size(), 1.0 / static_cast<double>(reports.size()));
            return w;
        }
        case AggregationMode::static_sample_count: {
            double total = 0.0;
            for (const auto& r : reports) {
                if (r.sample_count <= 0) {
                    throw DomainError("compute_weights: client " + r.client_id +
                                      " has no samples to weight by");
                }
                total += r.sample_count;
            }
            w.weights.resize(reports.size());
            for (std::size_t i = 0; i < reports.size(); ++i) {
                w.weights[i] = reports[i].sample_count / total;
            }
            return w;
        }
        case AggregationMode::none:
            w.weights.assign(reports.size(), 0.0); // marker: no aggregation happens
            return w;
    }
    throw ConfigError("compute_weights: unknown aggregation mode");
}

void apply_aggregation(ServerState& server, const std::vector<ClientReport>& reports,
                       const AggregationWeights& weights) {
    server.global_encoder = aggregate_encoders(reports, weights);
}

RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients, const RunConfig& cfg) {
    cfg.validate();
    if (clients.empty()) throw DomainError("run_round: no clients");

    const bool synchronized = cfg.aggregation != AggregationMode::none;
    if (synchronized) broadcast_encoder(server, clients);

    const int round = server.round;
    std::vector<ClientRoundOutput> outputs(clients.size());
    if (cfg.parallel_clients && clients.size() > 1) {
        std::vector<std::future<ClientRoundOutput>> futures;
        futures.reserve(clients.size());
        for (auto& client : clients) {
            futures.push_back(std::async(std::launch::async, [&client, &cfg, round] {
                return local_round(client, cfg, round);
            }));
        }
        for (std::size_t i = 0; i < futures.size(); ++i) outputs[i] = futures[i].get();
    } else {
        for (std::size_t i = 0; i < clients.size(); ++i) {
            outputs[i] = local_round(clients[i], cfg, round);
        }
    }

    std::vector<ClientReport> reports;
    reports.reserve(outputs.size());
    for (auto& o : outputs) reports.push_back(std::move(o.report));

    const AggregationWeights weights = compute_weights(cfg.aggregation, reports);
    if (synchronized) apply_aggregation(server, reports, weights);

    RoundRecord record;
    record.round = round;
    record.weights = weights.weights;
    record.thetas.reserve(reports.size());
    for (const auto& r : reports) record.thetas.push_back(r.theta);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        outputs[i].record.weight = weights.weights[i];
        record.clients.push_back(std::move(outputs[i].record));
    }

    server.round += 1;
    server.history.push_back(record);
    return record;
}

namespace {

std::string opt_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

}  // namespace

std::string round_log_csv(const std::vector<RoundRecord>& history) {
    std::string out = "round,client_id,l_ice,l_kl,l_uce,l_tce,total,theta,weight,train_auc,test_auc\n";
    for (const auto& round : history) {
        for (const auto& c : round.clients) {
            out += std::to_string(round.round) + "," + c.client_id + "," +
                   format_double(c.loss.l_ice) + "," + format_double(c.loss.l_kl) + "," +
                   format_double(c.loss.l_uce) + "," + format_double(c.loss.l_tce) + "," +
                   format_double(c.loss.total) + "," + format_double(c.theta) + "," +
                   format_double(c.weight) + "," + opt_cell(c.train_auc) + "," +
                   opt_cell(c.test_auc) + "\n";
        }
    }
    return out;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace

RunResult run_experiment(const RunConfig& cfg, const FederatedDataset& data,
                         const std::string& out_dir) {
    cfg.validate();
    RunResult result;
    result.federation = make_federation(data, cfg);

    for (int t = 0; t < cfg.rounds; ++t) {
        result.history.push_back(
            run_round(result.federation.server, result.federation.clients, cfg));
    }

    std::vector<ClientEval> evals;
    for (const auto& client : result.federation.clients) {
        evals.push_back(evaluate_client(client, cfg, client.data.test_idx));
    }
    result.final_eval = make_eval_report(std::move(evals));

    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create output directory: " + out_dir);
        const std::filesystem::path base(out_dir);

        write_text((base / "rounds.csv").string(), round_log_csv(result.history));

        std::string reports = "round,client_id,theta,weight,sample_count\n";
        for (const auto& round : result.history) {
            for (std::size_t i = 0; i < round.clients.size(); ++i) {
                const auto& c = round.clients[i];
                ClientReport r{c.client_id, c.theta, {}, c.sample_count};
                reports += report_csv_line(round.round, r, c.weight) + "\n";
            }
        }
        write_text((base / "reports.csv").string(), reports);

        write_eval_report_csv((base / "eval.csv").string(), result.final_eval);

        for (const auto& client : result.federation.clients) {
            save_checkpoint((base / ("ckpt_" + client.client_id + ".txt")).string(), client.params);
        }
        save_encoder_checkpoint((base / "ckpt_global.txt").string(),
                                result.federation.server.encoder_dims,
                                result.federation.server.global_encoder);
    }
    return result;
}

}  // namespace feduaa
