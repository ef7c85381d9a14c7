#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "feduaa/errors.hpp"
#include "feduaa/metrics.hpp"
#include "feduaa/rng.hpp"
#include "feduaa/uaw.hpp"

using namespace feduaa;

namespace {

// Trapezoidal area under the ROC polygon, anchored at (0,0) and (1,1).
// Independent route to the same quantity as the rank-statistic AUC.
double roc_area(const std::vector<double>& scores, const std::vector<int>& positives) {
    const auto curve = roc_curve(scores, positives);
    std::vector<std::pair<double, double>> pts; // (fpr, tpr)
    pts.emplace_back(0.0, 0.0);
    for (const auto& p : curve) pts.emplace_back(1.0 - p.specificity, p.sensitivity);
    pts.emplace_back(1.0, 1.0);
    std::sort(pts.begin(), pts.end());
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        area += 0.5 * (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second);
    }
    return area;
}

}  // namespace

TEST_CASE("binary_auc: perfect ranking and the four-pair example") {
    CHECK(binary_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
    // one inversion among four pairs
    CHECK(binary_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
    // ties get half credit
    CHECK(binary_auc({0.5, 0.5}, {0, 1}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(binary_auc({0.5, 0.6}, {1, 1}), DomainError);
}

TEST_CASE("multiclass_auc: small example and degenerate classes") {
    Tensor2 scores(4, 2, {0.9, 0.1, 0.6, 0.4, 0.35, 0.65, 0.2, 0.8});
    CHECK(multiclass_auc(scores, {0, 0, 1, 1}) == 1.0);

    // class 2 has no positives and is skipped
    Tensor2 three(4, 3, {0.9, 0.1, 0.0, 0.6, 0.4, 0.0, 0.35, 0.65, 0.0, 0.2, 0.8, 0.0});
    CHECK(multiclass_auc(three, {0, 0, 1, 1}) == 1.0);

    // single class everywhere -> everything skipped
    CHECK_THROWS_AS(multiclass_auc(scores, std::vector<int>{0, 0, 0, 0}), DomainError);
    CHECK_THROWS_AS(multiclass_auc(Tensor2(1, 2), std::vector<int>{0}), DomainError);
    CHECK_THROWS_AS(multiclass_auc(scores, std::vector<int>{0}), ShapeError);
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
    Rng rng(17);
    const int n = 200;
    Tensor2 scores(n, 3);
    std::vector<int> labels(n);
    for (auto& v : scores.data) v = rng.uniform(0.0, 1.0);
    for (auto& y : labels) y = static_cast<int>(rng.below(3));

    const double base = multiclass_auc(scores, labels);
    Tensor2 warped = scores;
    for (auto& v : warped.data) v = std::exp(3.0 * v) + 1.0;
    CHECK(multiclass_auc(warped, labels) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("reversing score order maps auc to its complement") {
    Rng rng(18);
    const int n = 300;
    std::vector<double> scores(n);
    std::vector<int> positives(n);
    for (auto& v : scores) v = rng.uniform(0.0, 1.0);
    for (auto& p : positives) p = static_cast<int>(rng.below(2));
    const double a = binary_auc(scores, positives);
    std::vector<double> neg(n);
    for (int i = 0; i < n; ++i) neg[static_cast<std::size_t>(i)] = -scores[static_cast<std::size_t>(i)];
    CHECK(binary_auc(neg, positives) == doctest::Approx(1.0 - a).epsilon(1e-12));
}

TEST_CASE("label-independent scores concentrate near one half") {
    Rng rng(19);
    const int n = 600;
    Tensor2 scores(n, 4);
    for (auto& v : scores.data) v = rng.uniform(0.0, 1.0);

    double acc = 0.0;
    for (int perm = 0; perm < 20; ++perm) {
        std::vector<int> labels(n);
        for (auto& y : labels) y = static_cast<int>(rng.below(4));
        acc += multiclass_auc(scores, labels);
    }
    CHECK(std::fabs(acc / 20.0 - 0.5) < 0.05);
}

TEST_CASE("uncertainty_separation: group means and degenerate groups") {
    const auto sep = uncertainty_separation({{0.1, true}, {0.9, false}});
    CHECK(*sep.mean_correct == doctest::Approx(0.1));
    CHECK(*sep.mean_wrong == doctest::Approx(0.9));
    CHECK(*sep.auroc == 1.0);

    const auto allright = uncertainty_separation({{0.1, true}, {0.2, true}});
    CHECK(allright.mean_correct.has_value());
    CHECK_FALSE(allright.mean_wrong.has_value());
    CHECK_FALSE(allright.auroc.has_value());

    CHECK_THROWS_AS(uncertainty_separation({}), DomainError);
}

TEST_CASE("uncertainty auroc equals the roc-curve area") {
    Rng rng(20);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 150;
        std::vector<UncertaintyRecord> records(static_cast<std::size_t>(n));
        std::vector<double> u(n);
        std::vector<int> incorrect(n);
        bool any_right = false, any_wrong = false;
        for (int i = 0; i < n; ++i) {
            records[static_cast<std::size_t>(i)].uncertainty = (1.0 + static_cast<double>(rng.below(25))) / 25.0;
            records[static_cast<std::size_t>(i)].correct = rng.uniform() < 0.5;
            u[static_cast<std::size_t>(i)] = records[static_cast<std::size_t>(i)].uncertainty;
            incorrect[static_cast<std::size_t>(i)] = records[static_cast<std::size_t>(i)].correct ? 0 : 1;
            (records[static_cast<std::size_t>(i)].correct ? any_right : any_wrong) = true;
        }
        if (!any_right || !any_wrong) continue;
        const auto sep = uncertainty_separation(records);
        CHECK(*sep.auroc == doctest::Approx(roc_area(u, incorrect)).epsilon(1e-12));
    }
}

TEST_CASE("eval report csv carries per-client rows plus an average row") {
    ClientEval a{"aptos", 1.0, 0.875, 0.125, 0.75};
    ClientEval b{"ddr", 0.5, 0.625, std::nullopt, std::nullopt};
    const EvalReport report = make_eval_report({a, b});
    REQUIRE(report.average_auc.has_value());
    CHECK(*report.average_auc == doctest::Approx(0.75));

    const std::string csv = eval_report_csv(report);
    CHECK(csv.find("client_id,auc,accuracy,mean_u_correct,mean_u_wrong\n") == 0);
    CHECK(csv.find("aptos,1,0.875,0.125,0.75\n") != std::string::npos);
    CHECK(csv.find("average,0.75,0.75,,\n") != std::string::npos);
    // absent marker is an empty cell
    CHECK(csv.find("ddr,0.5,0.625,,\n") != std::string::npos);
}
