#include "feduaa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "feduaa/errors.hpp"
#include "feduaa/model.hpp"

namespace feduaa {

double binary_auc(const std::vector<double>& scores, const std::vector<int>& positives) {
    if (scores.size() != positives.size()) {
        throw ShapeError("binary_auc: score/flag length mismatch");
    }
    require_finite(scores, "binary_auc scores");

    std::size_t n_pos = 0;
    for (int p : positives) n_pos += (p != 0) ? 1u : 0u;
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw DomainError("binary_auc: need at least one positive and one negative sample");
    }

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j); // ranks are 1-based
        for (std::size_t t = i; t < j; ++t) {
            if (positives[order[t]] != 0) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double multiclass_auc(const Tensor2& scores, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != scores.rows) {
        throw ShapeError("multiclass_auc: label count does not match score rows");
    }
    if (scores.rows < 2) throw DomainError("multiclass_auc: need at least two samples");

    const int k = scores.cols;
    double sum = 0.0;
    int used = 0;
    std::vector<double> col(static_cast<std::size_t>(scores.rows));
    std::vector<int> pos(static_cast<std::size_t>(scores.rows));
    for (int c = 0; c < k; ++c) {
        std::size_t n_pos = 0;
        for (int r = 0; r < scores.rows; ++r) {
            col[static_cast<std::size_t>(r)] = scores.at(r, c);
            pos[static_cast<std::size_t>(r)] = (labels[static_cast<std::size_t>(r)] == c) ? 1 : 0;
            n_pos += static_cast<std::size_t>(pos[static_cast<std::size_t>(r)]);
        }
        if (n_pos == 0 || n_pos == static_cast<std::size_t>(scores.rows)) continue;
        sum += binary_auc(col, pos);
        ++used;
    }
    if (used == 0) throw DomainError("multiclass_auc: every class lacks positives or negatives");
    return sum / used;
}

UncertaintySeparation uncertainty_separation(const std::vector<UncertaintyRecord>& records) {
    if (records.empty()) throw DomainError("uncertainty_separation: no records");

    double sum_correct = 0.0;
    double sum_wrong = 0.0;
    std::size_t n_correct = 0;
    std::size_t n_wrong = 0;
    for (const auto& r : records) {
        if (r.correct) {
            sum_correct += r.uncertainty;
            ++n_correct;
        } else {
            sum_wrong += r.uncertainty;
            ++n_wrong;
        }
    }

    UncertaintySeparation out;
    if (n_correct > 0) out.mean_correct = sum_correct / static_cast<double>(n_correct);
    if (n_wrong > 0) out.mean_wrong = sum_wrong / static_cast<double>(n_wrong);
    if (n_correct > 0 && n_wrong > 0) {
        std::vector<double> u(records.size());
        std::vector<int> incorrect(records.size());
        for (std::size_t i = 0; i < records.size(); ++i) {
            u[i] = records[i].uncertainty;
            incorrect[i] = records[i].correct ? 0 : 1;
        }
        out.auroc = binary_auc(u, incorrect);
    }
    return out;
}

EvalReport make_eval_report(std::vector<ClientEval> clients) {
    EvalReport report;
    report.clients = std::move(clients);
    double sum = 0.0;
    int n = 0;
    for (const auto& c : report.clients) {
        if (c.auc) {
            sum += *c.auc;
            ++n;
        }
    }
    if (n > 0) report.average_auc = sum / n;
    return report;
}

namespace {

std::string opt_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

}  // namespace

std::string eval_report_csv(const EvalReport& report) {
    std::string out = "client_id,auc,accuracy,mean_u_correct,mean_u_wrong\n";
    double acc_sum = 0.0;
    for (const auto& c : report.clients) {
        out += c.client_id + "," + opt_cell(c.auc) + "," + format_double(c.accuracy) + "," +
               opt_cell(c.mean_u_correct) + "," + opt_cell(c.mean_u_wrong) + "\n";
        acc_sum += c.accuracy;
    }
    std::optional<double> avg_acc;
    if (!report.clients.empty()) avg_acc = acc_sum / static_cast<double>(report.clients.size());
    out += "average," + opt_cell(report.average_auc) + "," + opt_cell(avg_acc) + ",,\n";
    return out;
}

void write_eval_report_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open eval report for writing: " + path);
    out << eval_report_csv(report);
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace feduaa
