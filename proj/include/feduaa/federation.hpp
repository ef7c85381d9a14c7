#pragma once

#include <optional>
#include <string>
#include <vector>

#include "feduaa/data.hpp"
#include "feduaa/evidential.hpp"
#include "feduaa/metrics.hpp"
#include "feduaa/model.hpp"
#include "feduaa/rng.hpp"
#include "feduaa/uaw.hpp"

namespace feduaa {

enum class AggregationMode {
    uaw,                 // softmax over the clients' Youden thresholds
    static_uniform,      // 1/N
    static_sample_count, // proportional to train-split sizes
    none,                // no synchronization at all (independent training)
};

enum class HeadVariant {
    softmax_ce, // plain cross-entropy backbone
    eu,         // evidential stack without the temperature branch
    tweu,       // full stack
};

AggregationMode parse_aggregation_mode(const std::string& name);
HeadVariant parse_head_variant(const std::string& name);
std::string to_string(AggregationMode mode);
std::string to_string(HeadVariant variant);

struct RunConfig {
    int rounds = 100;
    int local_epochs = 1;
    double lr = 0.01;
    int batch_size = 32;
    double temperature = 0.05;
    int anneal_rounds = 50;
    AggregationMode aggregation = AggregationMode::uaw;
    HeadVariant head = HeadVariant::tweu;
    std::vector<int> hidden_dims = {16};
    std::uint64_t seed = 0;
    bool parallel_clients = true;

    LossConfig loss_config() const { return LossConfig{temperature, anneal_rounds}; }
    void validate() const;
};

struct ClientState {
    std::string client_id;
    int k = 0;
    ModelParams params; // encoder copy + private head
    ClientPartition data;
    Rng rng;
};

struct RoundClientRecord {
    std::string client_id;
    LossBreakdown loss; // per-sample means over the round's training batches
    double theta = 0.0;
    double weight = 0.0;
    std::optional<double> train_auc;
    std::optional<double> test_auc;
    std::optional<double> mean_u_correct;
    std::optional<double> mean_u_wrong;
    int sample_count = 0;
};

struct RoundRecord {
    int round = 0;
    std::vector<double> thetas;
    std::vector<double> weights;
    std::vector<RoundClientRecord> clients;
};

struct ServerState {
    std::vector<int> encoder_dims;
    std::vector<double> global_encoder;
    int round = 0;
    std::vector<RoundRecord> history;
};

struct Federation {
    ServerState server;
    std::vector<ClientState> clients;
};

// Builds per-client models (shared encoder shape, K_i-sized heads) and the
// initial global encoder. Every stream is derived from (seed, client_id) or
// (seed, "server"), never from position, so a client's trajectory does not
// depend on which siblings run next to it.
Federation make_federation(const FederatedDataset& data, const RunConfig& cfg);

// Round phases, composed by run_round but also useful separately.
void broadcast_encoder(const ServerState& server, std::vector<ClientState>& clients);

struct ClientRoundOutput {
    ClientReport report;
    RoundClientRecord record; // weight filled in by the server phase
};
ClientRoundOutput local_round(ClientState& client, const RunConfig& cfg, int round);

AggregationWeights compute_weights(AggregationMode mode, const std::vector<ClientReport>& reports);
void apply_aggregation(ServerState& server, const std::vector<ClientReport>& reports,
                       const AggregationWeights& weights);

RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients, const RunConfig& cfg);

// Per-variant loss dispatch. softmax_ce reports its cross-entropy in the
// l_tce slot so the breakdown identities still hold.
std::pair<LossBreakdown, Tensor2> head_loss(HeadVariant variant, const Tensor2& logits,
                                            const std::vector<int>& labels, const LossConfig& cfg,
                                            int round);

enum class ScoreKind { softmax_probs, beliefs, warmed_beliefs };

struct EvalScores {
    Tensor2 scores; // n x K, drives both predictions and AUC
    std::vector<int> predictions;
    std::vector<double> uncertainty; // empty for softmax_ce
    ScoreKind kind = ScoreKind::softmax_probs;
};

EvalScores evaluate_head(HeadVariant variant, const ModelParams& params, const Tensor2& features,
                         double temperature);

// Evaluates one client's current model on the given split indices.
ClientEval evaluate_client(const ClientState& client, const RunConfig& cfg,
                           const std::vector<int>& indices);
ClientEval evaluate_client_corrupted(const ClientState& client, const RunConfig& cfg,
                                     const std::vector<int>& indices, const NoiseSpec& noise,
                                     std::uint64_t noise_seed);

struct RunResult {
    Federation federation;
    std::vector<RoundRecord> history;
    EvalReport final_eval; // test split of each client
};

// Runs cfg.rounds rounds. When out_dir is non-empty, writes rounds.csv,
// reports.csv, eval.csv and one checkpoint per client plus the global
// encoder into it.
RunResult run_experiment(const RunConfig& cfg, const FederatedDataset& data,
                         const std::string& out_dir = "");

// `round,client_id,l_ice,l_kl,l_uce,l_tce,total,theta,weight,train_auc,test_auc`
std::string round_log_csv(const std::vector<RoundRecord>& history);

}  // namespace feduaa
