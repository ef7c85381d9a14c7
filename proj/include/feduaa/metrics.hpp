#pragma once

#include <optional>
#include <string>
#include <vector>

#include "feduaa/tensor.hpp"
#include "feduaa/uaw.hpp"

namespace feduaa {

// Mann-Whitney rank AUC with half credit for ties. Requires both classes.
double binary_auc(const std::vector<double>& scores, const std::vector<int>& positives);

// Unweighted mean over classes of one-vs-rest binary AUC. Classes without
// both positives and negatives are skipped; throws DomainError when every
// class is skipped.
double multiclass_auc(const Tensor2& scores, const std::vector<int>& labels);

struct UncertaintySeparation {
    std::optional<double> mean_correct;
    std::optional<double> mean_wrong;
    std::optional<double> auroc; // uncertainty as an error detector; absent when one group is empty
};

UncertaintySeparation uncertainty_separation(const std::vector<UncertaintyRecord>& records);

struct ClientEval {
    std::string client_id;
    std::optional<double> auc; // absent when the eval split is single-class
    double accuracy = 0.0;
    std::optional<double> mean_u_correct;
    std::optional<double> mean_u_wrong;
};

struct EvalReport {
    std::vector<ClientEval> clients;
    std::optional<double> average_auc; // arithmetic mean over clients with a defined AUC
};

EvalReport make_eval_report(std::vector<ClientEval> clients);

// One row per client plus an `average` row.
std::string eval_report_csv(const EvalReport& report);
void write_eval_report_csv(const std::string& path, const EvalReport& report);

}  // namespace feduaa
