#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "ablb/metrics.hpp"
#include "checks.hpp"
#include "expect.hpp"

using namespace ablb;
using testutil::thrown_code;

namespace {

EvalRecord rec(Label label, Label decision, double confidence, std::string id = "r") {
    EvalRecord r;
    r.id = std::move(id);
    r.label = label;
    r.decision = decision;
    r.confidence = confidence;
    return r;
}

constexpr Label P = Label::Positive;
constexpr Label N = Label::Negative;

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("confusion cells") {
    CHECK(cell_of(rec(P, P, 0.9)) == Cell::TP);
    CHECK(cell_of(rec(N, P, 0.9)) == Cell::FP);
    CHECK(cell_of(rec(N, N, 0.9)) == Cell::TN);
    CHECK(cell_of(rec(P, N, 0.9)) == Cell::FN);
    const std::vector<EvalRecord> rs{rec(P, P, 1), rec(P, P, 1), rec(N, P, 1), rec(P, N, 1), rec(N, N, 1)};
    CHECK(confusion(rs) == ConfusionCounts{2, 1, 1, 1});
}

TEST_CASE("precision, recall and F1") {
    const checks::Outcome r = checks::prf1_vectors();
    INFO(r.detail);
    CHECK(r.pass);

    const Prf1 s = prf1({6, 2, 10, 4});
    CHECK(s.accuracy == doctest::Approx(16.0 / 22.0));
    CHECK(s.precision == doctest::Approx(0.75));
    CHECK(s.recall == doctest::Approx(0.6));
    CHECK(s.f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
    CHECK(s.flags.empty());

    const Prf1 none = prf1({0, 0, 5, 0});
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
    CHECK(none.flags == std::vector<std::string>{"precision_undefined", "recall_undefined", "f1_undefined"});
    CHECK(prf1({}).flags.front() == "accuracy_undefined");
    CHECK(f1_score(0.0, 0.0) == 0.0);
}

TEST_CASE("statistics agree with the reference evaluators") {
    const checks::Outcome r = checks::statistics_oracles();
    INFO(r.detail);
    CHECK(r.pass);
}

TEST_CASE("statistics error paths") {
    const std::vector<double> a{1, 2, 3, 4}, flat{2, 2, 2, 2}, two{1, 2};
    CHECK(thrown_code([&] { pearson(a, flat); }) == ErrorCode::undefined);
    CHECK(thrown_code([&] { pearson(two, two); }) == ErrorCode::input);
    CHECK(thrown_code([&] { pearson(a, two); }) == ErrorCode::input);
    CHECK(average_ranks(std::vector<double>{3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});

    const std::vector<double> x1{1, 2, 3, 4, 5}, y{2, 4, 6, 8, 10}, dup{1, 2, 3, 4, 5};
    CHECK(thrown_code([&] { ols2(y, x1, dup); }) == ErrorCode::singular);
    const std::vector<double> x2{0, 1, 0, 1, 0}, cy{7, 7, 7, 7, 7};
    const Ols2 c = ols2(cy, x1, x2);
    CHECK(c.flags == std::vector<std::string>{"constant_target"});
    CHECK(std::abs(c.intercept - 7.0) < 1e-9);
    CHECK(std::abs(c.coef1) < 1e-9);

    const std::vector<EvalRecord> empty;
    CHECK(thrown_code([&] { ece(empty); }) == ErrorCode::input);
    CHECK(thrown_code([] { confidence_bin(1.5, 10); }) == ErrorCode::input);
    CHECK(thrown_code([] { median({}); }) == ErrorCode::input);
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 2, 3}) == 2.5);
}

TEST_CASE("bin boundaries") {
    CHECK(confidence_bin(0.0, 10) == 0);
    CHECK(confidence_bin(0.1, 10) == 0);
    CHECK(confidence_bin(std::nextafter(0.1, 1.0), 10) == 1);
    CHECK(confidence_bin(0.5, 10) == 4);
    CHECK(confidence_bin(1.0, 10) == 9);
    CHECK(confidence_bin(0.75, 4) == 2);
}

TEST_CASE("histogram") {
    const std::vector<EvalRecord> rs{rec(P, P, 0.95), rec(P, N, 0.55), rec(N, N, 0.55), rec(N, P, 0.05),
                                     rec(P, P, 1.0)};
    const Histogram h = histogram(rs, 10);
    REQUIRE(h.counts.size() == 10);
    CHECK(h.counts[9] == std::array<std::size_t, 4>{2, 0, 0, 0});
    CHECK(h.counts[5] == std::array<std::size_t, 4>{0, 0, 1, 1});
    CHECK(h.counts[0] == std::array<std::size_t, 4>{0, 1, 0, 0});
    const std::string csv = histogram_csv(h);
    CHECK(csv.rfind("bin_lo,bin_hi,tp,fp,tn,fn\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
    const auto j = nlohmann::json::parse(histogram_json(h));
    CHECK(j.size() == 10);
    CHECK(thrown_code([&] { histogram(rs, 1); }) == ErrorCode::input);
}

TEST_CASE("report round trips") {
    const std::vector<EvalRecord> rs{rec(P, P, 0.9), rec(P, N, 0.7), rec(N, N, 0.6), rec(N, N, 0.8)};
    const MetricsReport r = metrics_report(rs, -1.25);
    CHECK(r.counts == ConfusionCounts{1, 0, 2, 1});
    CHECK(r.model_nas == -1.25);
    CHECK(r.ece == ece(rs));
    CHECK(metrics_report_from_json(metrics_report_json(r)) == r);
    CHECK(metrics_report_from_csv(metrics_report_csv(r)) == r);

    const std::vector<EvalRecord> negatives{rec(N, N, 0.6), rec(N, N, 0.8)};
    const MetricsReport flagged = metrics_report(negatives, 0.0);
    CHECK_FALSE(flagged.flags.empty());
    CHECK(metrics_report_from_json(metrics_report_json(flagged)) == flagged);
    CHECK(metrics_report_from_csv(metrics_report_csv(flagged)) == flagged);

    CHECK(thrown_code([] { metrics_report_from_csv("nope\n"); }) == ErrorCode::input);
    CHECK(thrown_code([] { metrics_report_from_json("{}"); }) == ErrorCode::input);

    CHECK(negative_confidence(rs).value() == doctest::Approx(0.7));
    const std::vector<EvalRecord> yes_only{rec(P, P, 0.9)};
    CHECK_FALSE(negative_confidence(yes_only).has_value());

    const std::vector<double> nas{0.1, 0.2, 0.3, 0.4};
    const std::string lines = records_jsonl(rs, nas);
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 4);
    const std::vector<double> short_nas{0.1};
    CHECK(thrown_code([&] { records_jsonl(rs, short_nas); }) == ErrorCode::input);
}

TEST_CASE("records from a model") {
    const Vocabulary v(96);
    std::vector<double> p(96, 0.0);
    p[v.id("yes")] = 0.6;
    p[v.id("no")] = 0.2;
    p[v.number(0)] = 0.2;
    const ModelState m = checks::logit_model(p);
    const auto samples = checks::labeled_fixture(m.config(), 6, 2);
    const auto rs = evaluate_records(m, samples);
    REQUIRE(rs.size() == 6);
    const double h = -(0.6 * std::log(0.6) + 0.4 * std::log(0.2));
    for (std::size_t i = 0; i < rs.size(); ++i) {
        CHECK(rs[i].id == samples[i].id);
        CHECK(rs[i].label == samples[i].label);
        CHECK(rs[i].decision == P);
        CHECK(rs[i].confidence == doctest::Approx(0.6));  // full-vocabulary probability
        CHECK(rs[i].entropy == doctest::Approx(h).epsilon(1e-5));
    }
}

}  // TEST_SUITE
