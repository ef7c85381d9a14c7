#include "feduaa/uaw.hpp"

#include <algorithm>
#include <cmath>

#include "feduaa/errors.hpp"
#include "feduaa/model.hpp"
#include "feduaa/tensor.hpp"

namespace feduaa {

std::vector<int> misprediction_labels(const std::vector<int>& predictions,
                                      const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) {
        throw ShapeError("misprediction_labels: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(labels.size()) + " labels");
    }
    std::vector<int> out(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        out[i] = (predictions[i] == labels[i]) ? 0 : 1;
    }
    return out;
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& positives) {
    if (scores.size() != positives.size()) {
        throw ShapeError("roc_curve: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(positives.size()) + " flags");
    }
    require_finite(scores, "roc_curve scores");

    std::size_t total_pos = 0;
    for (int p : positives) total_pos += (p != 0) ? 1u : 0u;
    const std::size_t total_neg = scores.size() - total_pos;
    if (total_pos == 0 || total_neg == 0) {
        throw DomainError("roc_curve: need at least one positive and one negative sample");
    }

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Ascending sweep. At threshold v everything with score >= v is predicted
    // positive, so samples strictly below v contribute FN/TN.
    std::vector<RocPoint> curve;
    std::size_t pos_below = 0;
    std::size_t neg_below = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double v = scores[order[i]];
        RocPoint pt;
        pt.threshold = v;
        pt.sensitivity = static_cast<double>(total_pos - pos_below) / static_cast<double>(total_pos);
        pt.specificity = static_cast<double>(neg_below) / static_cast<double>(total_neg);
        curve.push_back(pt);
        while (i < order.size() && scores[order[i]] == v) {
            if (positives[order[i]] != 0) {
                ++pos_below;
            } else {
                ++neg_below;
            }
            ++i;
        }
    }
    return curve;
}

double youden_theta(const std::vector<UncertaintyRecord>& records) {
    if (records.empty()) throw DomainError("youden_theta: no records");

    std::vector<double> u(records.size());
    std::vector<int> incorrect(records.size());
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        u[i] = records[i].uncertainty;
        incorrect[i] = records[i].correct ? 0 : 1;
        wrong += static_cast<std::size_t>(incorrect[i]);
    }
    require_finite(u, "youden_theta uncertainties");

    // degenerate epochs have no ROC; keep theta inside the observed range
    if (wrong == 0) return *std::max_element(u.begin(), u.end());
    if (wrong == records.size()) return *std::min_element(u.begin(), u.end());

    const auto curve = roc_curve(u, incorrect);
    double best_j = -2.0;
    double best_threshold = curve.front().threshold;
    for (const auto& pt : curve) {
        const double j = pt.sensitivity + pt.specificity - 1.0;
        if (j > best_j) {
            best_j = j;
            best_threshold = pt.threshold;
        }
    }
    // The sweep conceptually ends with a sentinel above the maximum (nothing
    // predicted positive, J = 0). The lowest observed threshold already scores
    // J = 0 and wins the smallest-threshold tie-break, so the sentinel can
    // never be selected and needs no representation here.
    return best_threshold;
}

AggregationWeights softmax_weights(const std::vector<double>& thetas) {
    if (thetas.empty()) throw DomainError("softmax_weights: no clients");
    require_finite(thetas, "softmax_weights thetas");

    const double m = *std::max_element(thetas.begin(), thetas.end());
    AggregationWeights out;
    out.weights.resize(thetas.size());
    double z = 0.0;
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        out.weights[i] = std::exp(thetas[i] - m);
        z += out.weights[i];
    }
    for (auto& w : out.weights) w /= z;
    return out;
}

std::vector<double> aggregate_encoders(const std::vector<ClientReport>& reports,
                                       const AggregationWeights& weights) {
    if (reports.empty()) throw DomainError("aggregate_encoders: no reports");
    if (weights.weights.size() != reports.size()) {
        throw ShapeError("aggregate_encoders: " + std::to_string(weights.weights.size()) +
                         " weights for " + std::to_string(reports.size()) + " reports");
    }
    const std::size_t n = reports.front().encoder_params.size();
    for (const auto& r : reports) {
        if (r.encoder_params.size() != n) {
            throw ShapeError("aggregate_encoders: client " + r.client_id + " uploaded " +
                             std::to_string(r.encoder_params.size()) + " parameters, expected " +
                             std::to_string(n));
        }
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const double w = weights.weights[i];
        const auto& enc = reports[i].encoder_params;
        for (std::size_t j = 0; j < n; ++j) out[j] += w * enc[j];
    }
    require_finite(out, "aggregate_encoders result");
    return out;
}

std::string report_csv_line(int round, const ClientReport& report, double weight) {
    return std::to_string(round) + "," + report.client_id + "," + format_double(report.theta) + "," +
           format_double(weight) + "," + std::to_string(report.sample_count);
}

}  // namespace feduaa
