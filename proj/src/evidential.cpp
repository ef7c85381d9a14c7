#include "feduaa/evidential.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "feduaa/errors.hpp"
#include "feduaa/special.hpp"

namespace feduaa {

namespace {

constexpr double kLogClamp = 1e-12; // floor inside loss_tce before taking the log

double softplus(double x) {
    // log(1 + e^x) without overflow on either side
    if (x > 30.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

int checked_label(int label, int k, const char* fn) {
    if (label < 0 || label >= k) {
        throw DomainError(std::string(fn) + ": label " + std::to_string(label) +
                          " outside [0, " + std::to_string(k) + ")");
    }
    return label;
}

int onehot_index(const std::vector<double>& onehot, const char* fn) {
    int hit = -1;
    for (std::size_t i = 0; i < onehot.size(); ++i) {
        if (onehot[i] == 1.0) {
            if (hit >= 0) throw DomainError(std::string(fn) + ": label vector has multiple ones");
            hit = static_cast<int>(i);
        } else if (onehot[i] != 0.0) {
            throw DomainError(std::string(fn) + ": label vector is not one-hot");
        }
    }
    if (hit < 0) throw DomainError(std::string(fn) + ": label vector has no one");
    return hit;
}

void check_alpha(const std::vector<double>& alpha, const char* fn) {
    if (alpha.empty()) throw DomainError(std::string(fn) + ": empty alpha");
    for (double a : alpha) {
        if (!(a >= 1.0)) throw DomainError(std::string(fn) + ": alpha entries must be >= 1");
    }
}

}  // namespace

double LossConfig::lambda(int round) const { return lambda_at(round, anneal_rounds); }

void LossConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("LossConfig: temperature must be positive");
    if (anneal_rounds < 1) throw ConfigError("LossConfig: anneal_rounds must be >= 1");
}

std::vector<double> evidence_from_logits(const std::vector<double>& logits) {
    require_finite(logits, "evidence_from_logits input");
    std::vector<double> e(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) e[i] = softplus(logits[i]);
    return e;
}

EvidentialOutput dirichlet_outputs(const std::vector<double>& evidence, double temperature) {
    const int k = static_cast<int>(evidence.size());
    if (k == 0) throw DomainError("dirichlet_outputs: need at least one class");
    if (!(temperature > 0.0)) throw DomainError("dirichlet_outputs: temperature must be positive");

    EvidentialOutput out;
    out.evidence = evidence;
    out.alpha.resize(evidence.size());
    out.beliefs.resize(evidence.size());
    out.warmed.resize(evidence.size());

    double strength = 0.0;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        if (!(evidence[i] >= 0.0)) throw DomainError("dirichlet_outputs: evidence must be non-negative");
        out.alpha[i] = evidence[i] + 1.0;
        strength += out.alpha[i];
    }
    out.strength = strength;
    out.uncertainty = static_cast<double>(k) / strength;
    for (std::size_t i = 0; i < evidence.size(); ++i) out.beliefs[i] = evidence[i] / strength;

    // temperature-warmed beliefs, max-subtracted for stability
    const double bmax = *std::max_element(out.beliefs.begin(), out.beliefs.end());
    double z = 0.0;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        out.warmed[i] = std::exp((out.beliefs[i] - bmax) / temperature);
        z += out.warmed[i];
    }
    for (auto& w : out.warmed) w /= z;

    require_finite(out.warmed, "dirichlet_outputs warmed beliefs");
    return out;
}

double lambda_at(int round, int total_anneal_rounds) {
    if (total_anneal_rounds < 1) throw DomainError("lambda_at: total_anneal_rounds must be >= 1");
    if (round < 0) throw DomainError("lambda_at: round must be >= 0");
    return std::min(1.0, static_cast<double>(round) / total_anneal_rounds);
}

double loss_ice(const std::vector<double>& alpha, int label) {
    check_alpha(alpha, "loss_ice");
    checked_label(label, static_cast<int>(alpha.size()), "loss_ice");
    double strength = 0.0;
    for (double a : alpha) strength += a;
    return digamma(strength) - digamma(alpha[static_cast<std::size_t>(label)]);
}

double loss_ice(const std::vector<double>& alpha, const std::vector<double>& onehot) {
    if (onehot.size() != alpha.size()) throw ShapeError("loss_ice: label length mismatch");
    return loss_ice(alpha, onehot_index(onehot, "loss_ice"));
}

double loss_kl(const std::vector<double>& alpha, int label) {
    check_alpha(alpha, "loss_kl");
    const int k = static_cast<int>(alpha.size());
    checked_label(label, k, "loss_kl");

    // adjusted concentrations: the true class is reset to 1 so only wrong-class
    // evidence is penalized
    double s = 0.0;
    for (int i = 0; i < k; ++i) {
        s += (i == label) ? 1.0 : alpha[static_cast<std::size_t>(i)];
    }
    double val = log_gamma(s) - log_gamma(static_cast<double>(k));
    const double dg_s = digamma(s);
    for (int i = 0; i < k; ++i) {
        const double a = (i == label) ? 1.0 : alpha[static_cast<std::size_t>(i)];
        val -= log_gamma(a);
        val += (a - 1.0) * (digamma(a) - dg_s);
    }
    return val;
}

double loss_kl(const std::vector<double>& alpha, const std::vector<double>& onehot) {
    if (onehot.size() != alpha.size()) throw ShapeError("loss_kl: label length mismatch");
    return loss_kl(alpha, onehot_index(onehot, "loss_kl"));
}

double loss_tce(const std::vector<double>& warmed, int label) {
    if (warmed.empty()) throw DomainError("loss_tce: empty belief vector");
    checked_label(label, static_cast<int>(warmed.size()), "loss_tce");
    return -std::log(std::max(warmed[static_cast<std::size_t>(label)], kLogClamp));
}

double loss_tce(const std::vector<double>& warmed, const std::vector<double>& onehot) {
    if (onehot.size() != warmed.size()) throw ShapeError("loss_tce: label length mismatch");
    return loss_tce(warmed, onehot_index(onehot, "loss_tce"));
}

TermGrads per_term_logit_grads(const Tensor2& logits, const std::vector<int>& labels,
                               double temperature) {
    if (static_cast<int>(labels.size()) != logits.rows) {
        throw ShapeError("per_term_logit_grads: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows) + " logit rows");
    }
    const int k = logits.cols;
    TermGrads g{Tensor2(logits.rows, k), Tensor2(logits.rows, k), Tensor2(logits.rows, k)};

    for (int r = 0; r < logits.rows; ++r) {
        const int label = checked_label(labels[static_cast<std::size_t>(r)], k, "per_term_logit_grads");
        const auto out = dirichlet_outputs(evidence_from_logits(logits.row_vec(r)), temperature);
        const double s = out.strength;

        // d l_ice / d alpha_j = psi'(S) - [j == label] psi'(alpha_label)
        const double tg_s = trigamma(s);
        // d l_kl / d alpha_tilde_j = (alpha_tilde_j - 1) psi'(alpha_tilde_j) - (S_tilde - K) psi'(S_tilde)
        double s_adj = 0.0;
        for (int j = 0; j < k; ++j) {
            s_adj += (j == label) ? 1.0 : out.alpha[static_cast<std::size_t>(j)];
        }
        const double tg_sadj = trigamma(s_adj);

        // d l_tce / d belief_j = (warmed_j - y_j) / temperature
        double cross = 0.0; // sum_j (warmed_j - y_j) * belief_j
        for (int j = 0; j < k; ++j) {
            const double y = (j == label) ? 1.0 : 0.0;
            cross += (out.warmed[static_cast<std::size_t>(j)] - y) * out.beliefs[static_cast<std::size_t>(j)];
        }

        for (int j = 0; j < k; ++j) {
            const double y = (j == label) ? 1.0 : 0.0;
            const double dice_da = tg_s - (j == label ? trigamma(out.alpha[static_cast<std::size_t>(j)]) : 0.0);

            double dkl_da = 0.0;
            if (j != label) {
                const double a_adj = out.alpha[static_cast<std::size_t>(j)];
                dkl_da = (a_adj - 1.0) * trigamma(a_adj) - (s_adj - k) * tg_sadj;
            }

            // beliefs_j = e_j / S: d belief_j / d e_i = (delta_ij - belief_j)/S
            const double dtce_de =
                ((out.warmed[static_cast<std::size_t>(j)] - y) - cross) / (temperature * s);

            const double de_dz = sigmoid(logits.at(r, j));
            g.d_ice.at(r, j) = dice_da * de_dz;
            g.d_kl.at(r, j) = dkl_da * de_dz;
            g.d_tce.at(r, j) = dtce_de * de_dz;
        }
    }
    return g;
}

namespace {

std::pair<LossBreakdown, Tensor2> stack_loss_and_grad(const Tensor2& logits,
                                                      const std::vector<int>& labels,
                                                      const LossConfig& cfg, int round,
                                                      bool include_tce) {
    cfg.validate();
    if (static_cast<int>(labels.size()) != logits.rows) {
        throw ShapeError("total_loss_and_grad: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows) + " logit rows");
    }
    if (logits.rows == 0) throw DomainError("total_loss_and_grad: empty batch");

    const double lam = lambda_at(round, cfg.anneal_rounds);
    const int k = logits.cols;
    const double inv_n = 1.0 / logits.rows;

    LossBreakdown sum;
    const TermGrads terms = per_term_logit_grads(logits, labels, cfg.temperature);
    Tensor2 grad(logits.rows, k);

    for (int r = 0; r < logits.rows; ++r) {
        const int label = labels[static_cast<std::size_t>(r)];
        const auto out = dirichlet_outputs(evidence_from_logits(logits.row_vec(r)), cfg.temperature);
        const double ice = loss_ice(out.alpha, label);
        const double kl = loss_kl(out.alpha, label);
        const double tce = include_tce ? loss_tce(out.warmed, label) : 0.0;
        sum.l_ice += ice;
        sum.l_kl += kl;
        sum.l_tce += tce;
        for (int j = 0; j < k; ++j) {
            double gz = terms.d_ice.at(r, j) + lam * terms.d_kl.at(r, j);
            if (include_tce) gz += terms.d_tce.at(r, j);
            grad.at(r, j) = gz * inv_n;
        }
    }

    LossBreakdown mean;
    mean.l_ice = sum.l_ice * inv_n;
    mean.l_kl = sum.l_kl * inv_n;
    mean.l_tce = sum.l_tce * inv_n;
    mean.l_uce = mean.l_ice + lam * mean.l_kl;
    mean.total = mean.l_uce + mean.l_tce;
    if (!std::isfinite(mean.total)) throw NumericError("total_loss_and_grad: non-finite loss");
    require_finite(grad, "total_loss_and_grad gradient");
    return {mean, grad};
}

}  // namespace

std::pair<LossBreakdown, Tensor2> total_loss_and_grad(const Tensor2& logits,
                                                      const std::vector<int>& labels,
                                                      const LossConfig& cfg, int round) {
    return stack_loss_and_grad(logits, labels, cfg, round, true);
}

std::pair<LossBreakdown, Tensor2> total_loss_and_grad(const Tensor2& logits, const Tensor2& onehot,
                                                      const LossConfig& cfg, int round) {
    return total_loss_and_grad(logits, labels_from_onehot(onehot), cfg, round);
}

std::pair<LossBreakdown, Tensor2> uce_loss_and_grad(const Tensor2& logits,
                                                    const std::vector<int>& labels,
                                                    const LossConfig& cfg, int round) {
    return stack_loss_and_grad(logits, labels, cfg, round, false);
}

std::vector<int> labels_from_onehot(const Tensor2& onehot) {
    std::vector<int> labels(static_cast<std::size_t>(onehot.rows));
    for (int r = 0; r < onehot.rows; ++r) {
        labels[static_cast<std::size_t>(r)] = onehot_index(onehot.row_vec(r), "labels_from_onehot");
    }
    return labels;
}

}  // namespace feduaa
