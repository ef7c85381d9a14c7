#pragma once

#include <string>
#include <vector>

namespace feduaa {

// One evaluated sample: its uncertainty score and whether the prediction
// matched the label.
struct UncertaintyRecord {
    double uncertainty = 0.0; // in (0, 1]
    bool correct = false;
};

// A client's post-round upload. Heads never appear here.
struct ClientReport {
    std::string client_id;
    double theta = 0.0; // Youden-optimal uncertainty threshold, in [0, 1]
    std::vector<double> encoder_params;
    int sample_count = 0;
};

struct AggregationWeights {
    std::vector<double> weights; // positive, sum to 1
};

struct RocPoint {
    double threshold = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
};

// 0 where prediction == label, 1 otherwise.
std::vector<int> misprediction_labels(const std::vector<int>& predictions,
                                      const std::vector<int>& labels);

// One point per distinct score value used as threshold, ascending, with the
// predicate score >= threshold => predicted positive. Requires at least one
// positive and one negative sample.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& positives);

// Threshold maximizing J = sensitivity + specificity - 1, scoring uncertainty
// against incorrectness. Ties pick the smallest qualifying threshold. A client
// with no mispredictions gets its largest observed uncertainty, an
// all-mispredicted client its smallest, so theta stays inside the observed
// range.
double youden_theta(const std::vector<UncertaintyRecord>& records);

// w_i = exp(theta_i) / sum_j exp(theta_j), max-subtracted.
AggregationWeights softmax_weights(const std::vector<double>& thetas);

// Elementwise convex combination of the uploaded encoders.
std::vector<double> aggregate_encoders(const std::vector<ClientReport>& reports,
                                       const AggregationWeights& weights);

// `round,client_id,theta,weight,sample_count`
std::string report_csv_line(int round, const ClientReport& report, double weight);

}  // namespace feduaa
