#pragma once

#include <utility>
#include <vector>

#include "feduaa/tensor.hpp"

namespace feduaa {

// Per-sample view of one evidential head evaluation. With K classes the K+1
// masses (beliefs plus uncertainty) sum to one.
struct EvidentialOutput {
    std::vector<double> evidence; // e_k >= 0
    std::vector<double> alpha;    // e_k + 1
    double strength = 0.0;        // sum of alpha
    std::vector<double> beliefs;  // (alpha_k - 1) / strength
    double uncertainty = 0.0;     // K / strength
    std::vector<double> warmed;   // softmax(beliefs / temperature)
};

struct LossConfig {
    double temperature = 0.05;
    int anneal_rounds = 50; // rounds until the KL weight reaches 1

    double lambda(int round) const;
    void validate() const;
};

// One evaluation of the full loss stack. l_uce = l_ice + lambda * l_kl and
// total = l_uce + l_tce; l_kl stores the raw (unweighted) divergence.
struct LossBreakdown {
    double l_ice = 0.0;
    double l_kl = 0.0;
    double l_uce = 0.0;
    double l_tce = 0.0;
    double total = 0.0;
};

// Numerically stabilized softplus per class.
std::vector<double> evidence_from_logits(const std::vector<double>& logits);

EvidentialOutput dirichlet_outputs(const std::vector<double>& evidence, double temperature);

// KL-weight ramp: 0 at round 0, linear up to 1 at total_anneal_rounds, then 1.
double lambda_at(int round, int total_anneal_rounds);

// Per-sample losses. The one-hot overloads validate the label vector; the
// index overloads are what the batch paths use.
double loss_ice(const std::vector<double>& alpha, const std::vector<double>& onehot);
double loss_ice(const std::vector<double>& alpha, int label);
double loss_kl(const std::vector<double>& alpha, const std::vector<double>& onehot);
double loss_kl(const std::vector<double>& alpha, int label);
double loss_tce(const std::vector<double>& warmed, const std::vector<double>& onehot);
double loss_tce(const std::vector<double>& warmed, int label);

// Exact per-logit gradients of the three terms for a whole batch, before any
// lambda weighting or batch averaging. Shared by the loss stack and the
// gradient-check command.
struct TermGrads {
    Tensor2 d_ice;
    Tensor2 d_kl;
    Tensor2 d_tce;
};
TermGrads per_term_logit_grads(const Tensor2& logits, const std::vector<int>& labels, double temperature);

// Batch-mean loss stack and its exact gradient w.r.t. every logit.
std::pair<LossBreakdown, Tensor2> total_loss_and_grad(const Tensor2& logits,
                                                      const std::vector<int>& labels,
                                                      const LossConfig& cfg, int round);
std::pair<LossBreakdown, Tensor2> total_loss_and_grad(const Tensor2& logits, const Tensor2& onehot,
                                                      const LossConfig& cfg, int round);

// Same stack without the temperature branch (the evidential-only ablation).
std::pair<LossBreakdown, Tensor2> uce_loss_and_grad(const Tensor2& logits,
                                                    const std::vector<int>& labels,
                                                    const LossConfig& cfg, int round);

// Converts a one-hot row matrix to label indices, rejecting anything that is
// not exactly one-hot.
std::vector<int> labels_from_onehot(const Tensor2& onehot);

}  // namespace feduaa
