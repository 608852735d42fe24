#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ablb/dataset.hpp"
#include "ablb/model.hpp"

namespace ablb {

struct EvalRecord {
    std::string id;
    Label label = Label::Positive;
    Label decision = Label::Positive;
    double confidence = 0.0;
    double entropy = 0.0;
    std::optional<ShortAnswerOutcome> outcome;
};

/// Restricted two-candidate decision plus first-token entropy for every sample.
std::vector<EvalRecord> evaluate_records(const ModelState& model, std::span<const BinarySample> samples);

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

enum class Cell { TP, FP, TN, FN };
Cell cell_of(const EvalRecord& record);

ConfusionCounts confusion(std::span<const EvalRecord> records);

struct Prf1 {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<std::string> flags;  // names of metrics whose denominator was zero
};

Prf1 prf1(const ConfusionCounts& counts);
/// F1 straight from a precision/recall pair.
double f1_score(double precision, double recall);

inline constexpr std::size_t kDefaultBins = 10;

/// Right-closed equal-width bin over [0, 1]; 0 goes to the first bin, 1 to the last.
std::size_t confidence_bin(double confidence, std::size_t bins);

double ece(std::span<const EvalRecord> records, std::size_t bins = kDefaultBins);

struct Correlation {
    double pearson = 0.0;
    double spearman = 0.0;
};

Correlation correlations(std::span<const double> x, std::span<const double> y);
double pearson(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> values);

struct Ols2 {
    double coef1 = 0.0;
    double coef2 = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<std::string> flags;
};

/// Least squares of y on (x1, x2, 1).
Ols2 ols2(std::span<const double> y, std::span<const double> x1, std::span<const double> x2);

enum class Determinism { DetT, DetF, NonDet };

struct ResponseCategory {
    Determinism kind = Determinism::DetT;
    bool high_confidence = true;

    std::string name() const;  // e.g. "Det-T/high"
    auto operator<=>(const ResponseCategory&) const = default;
};

/// The six categories in table order.
std::vector<ResponseCategory> all_categories();

double median(std::vector<double> values);
double median_entropy(std::span<const EvalRecord> records);

ResponseCategory classify_response(const EvalRecord& record, double median_entropy);

struct ShiftCell {
    std::size_t fn_before = 0;
    std::size_t fn_to_tp = 0;
    std::size_t tn_before = 0;
    std::size_t tn_to_fp = 0;

    std::optional<double> fn_to_tp_ratio() const;
    std::optional<double> tn_to_fp_ratio() const;
};

using ShiftTable = std::map<ResponseCategory, ShiftCell>;

ShiftTable shift_ratios(std::span<const EvalRecord> before, std::span<const EvalRecord> after,
                        const std::map<std::string, ResponseCategory>& category_of);

/// Rows FN->TP and TN->FP, one column per category, "N/A" for empty denominators.
std::string shift_table_csv(const ShiftTable& table);

struct Histogram {
    std::size_t bins = kDefaultBins;
    std::vector<std::array<std::size_t, 4>> counts;  // per bin: tp, fp, tn, fn
};

Histogram histogram(std::span<const EvalRecord> records, std::size_t bins = kDefaultBins);
std::string histogram_csv(const Histogram& h);
std::string histogram_json(const Histogram& h);

struct MetricsReport {
    Prf1 scores;
    ConfusionCounts counts;
    double model_nas = 0.0;
    double ece = 0.0;
    std::vector<std::string> flags;

    bool operator==(const MetricsReport& other) const;
};

MetricsReport metrics_report(std::span<const EvalRecord> records, double model_nas, std::size_t bins = kDefaultBins);

std::string metrics_report_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const std::string& text);
std::string metrics_report_csv(const MetricsReport& report);
MetricsReport metrics_report_from_csv(const std::string& text);

/// Mean confidence over records decided Negative; empty when there are none.
std::optional<double> negative_confidence(std::span<const EvalRecord> records);

std::string records_jsonl(std::span<const EvalRecord> records, std::span<const double> per_sample_nas);

}  // namespace ablb
