#include "ablb/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "ablb/error.hpp"

namespace ablb {

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

const char* outcome_name(ShortAnswerOutcome o) {
    switch (o) {
        case ShortAnswerOutcome::Correct: return "correct";
        case ShortAnswerOutcome::Incorrect: return "incorrect";
        case ShortAnswerOutcome::Abstain: return "abstain";
    }
    return "incorrect";
}

const char* label_name(Label l) { return l == Label::Positive ? "pos" : "neg"; }

}  // namespace

std::vector<EvalRecord> evaluate_records(const ModelState& model, std::span<const BinarySample> samples) {
    std::vector<EvalRecord> out;
    out.reserve(samples.size());
    for (const BinarySample& s : samples) {
        const Decision d = answer_decision(model, s);
        out.push_back(EvalRecord{s.id, s.label, d.decision, d.confidence, d.entropy, std::nullopt});
    }
    return out;
}

Cell cell_of(const EvalRecord& r) {
    if (r.label == Label::Positive) {
        return r.decision == Label::Positive ? Cell::TP : Cell::FN;
    }
    return r.decision == Label::Positive ? Cell::FP : Cell::TN;
}

ConfusionCounts confusion(std::span<const EvalRecord> records) {
    require(!records.empty(), ErrorCode::input, "no evaluation records");
    ConfusionCounts c;
    for (const EvalRecord& r : records) {
        switch (cell_of(r)) {
            case Cell::TP: ++c.tp; break;
            case Cell::FP: ++c.fp; break;
            case Cell::TN: ++c.tn; break;
            case Cell::FN: ++c.fn; break;
        }
    }
    return c;
}

double f1_score(double precision, double recall) {
    if (precision + recall == 0.0) {
        return 0.0;
    }
    return 2.0 * precision * recall / (precision + recall);
}

Prf1 prf1(const ConfusionCounts& c) {
    Prf1 out;
    auto ratio = [&](std::size_t num, std::size_t den, const char* name) {
        if (den == 0) {
            out.flags.emplace_back(name);
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    out.accuracy = ratio(c.tp + c.tn, c.total(), "accuracy_undefined");
    out.precision = ratio(c.tp, c.tp + c.fp, "precision_undefined");
    out.recall = ratio(c.tp, c.tp + c.fn, "recall_undefined");
    if (out.precision + out.recall == 0.0) {
        out.flags.emplace_back("f1_undefined");
    }
    out.f1 = f1_score(out.precision, out.recall);
    return out;
}

std::size_t confidence_bin(double confidence, std::size_t bins) {
    require(bins >= 1, ErrorCode::input, "bin count must be positive");
    require(confidence >= 0.0 && confidence <= 1.0, ErrorCode::input,
            "confidence " + format_double(confidence) + " outside [0, 1]");
    const double b = static_cast<double>(bins);
    auto idx = static_cast<std::size_t>(std::max(0.0, std::ceil(confidence * b) - 1.0));
    idx = std::min(idx, bins - 1);
    // Correct for rounding in confidence * bins against the exact edges.
    while (idx > 0 && confidence <= static_cast<double>(idx) / b) {
        --idx;
    }
    while (idx + 1 < bins && confidence > static_cast<double>(idx + 1) / b) {
        ++idx;
    }
    return idx;
}

double ece(std::span<const EvalRecord> records, std::size_t bins) {
    require(!records.empty(), ErrorCode::input, "no evaluation records");
    std::vector<std::vector<double>> conf(bins);
    std::vector<std::size_t> correct(bins, 0);
    for (const EvalRecord& r : records) {
        const std::size_t b = confidence_bin(r.confidence, bins);
        conf[b].push_back(r.confidence);
        correct[b] += r.decision == r.label ? 1 : 0;
    }
    double total = 0.0;
    const double n = static_cast<double>(records.size());
    for (std::size_t b = 0; b < bins; ++b) {
        if (conf[b].empty()) {
            continue;
        }
        // Sorted summation keeps the result independent of record order.
        std::sort(conf[b].begin(), conf[b].end());
        const double nb = static_cast<double>(conf[b].size());
        const double mean_conf = std::accumulate(conf[b].begin(), conf[b].end(), 0.0) / nb;
        const double acc = static_cast<double>(correct[b]) / nb;
        total += (nb / n) * std::abs(acc - mean_conf);
    }
    return total;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), ErrorCode::input, "correlation inputs differ in length");
    require(x.size() >= 3, ErrorCode::input, "correlation needs at least 3 points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    require(sxx > 0.0 && syy > 0.0, ErrorCode::undefined, "correlation undefined: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) {
            ++j;
        }
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            ranks[idx[t]] = rank;
        }
        i = j + 1;
    }
    return ranks;
}

Correlation correlations(std::span<const double> x, std::span<const double> y) {
    Correlation c;
    c.pearson = pearson(x, y);
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    c.spearman = pearson(rx, ry);
    return c;
}

Ols2 ols2(std::span<const double> y, std::span<const double> x1, std::span<const double> x2) {
    require(y.size() == x1.size() && y.size() == x2.size(), ErrorCode::input, "regression inputs differ in length");
    require(y.size() >= 4, ErrorCode::input, "regression needs at least 4 points");
    const auto n = static_cast<Eigen::Index>(y.size());
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd Y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = x1[i];
        X(i, 1) = x2[i];
        X(i, 2) = 1.0;
        Y(i) = y[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    require(qr.rank() == 3, ErrorCode::singular, "regression design matrix is rank deficient");
    const Eigen::VectorXd beta = qr.solve(Y);

    Ols2 out;
    out.coef1 = beta(0);
    out.coef2 = beta(1);
    out.intercept = beta(2);
    const double mean = Y.mean();
    const double sst = (Y.array() - mean).square().sum();
    const double sse = (Y - X * beta).squaredNorm();
    if (sst == 0.0) {
        out.coef1 = 0.0;
        out.coef2 = 0.0;
        out.intercept = mean;
        out.r_squared = 0.0;
        out.flags.emplace_back("constant_target");
    } else {
        out.r_squared = 1.0 - sse / sst;
    }
    return out;
}

std::string ResponseCategory::name() const {
    const char* k = kind == Determinism::DetT ? "Det-T" : kind == Determinism::DetF ? "Det-F" : "Non-Det";
    return std::string(k) + (high_confidence ? "/high" : "/low");
}

std::vector<ResponseCategory> all_categories() {
    std::vector<ResponseCategory> out;
    for (Determinism d : {Determinism::DetT, Determinism::DetF, Determinism::NonDet}) {
        out.push_back({d, true});
        out.push_back({d, false});
    }
    return out;
}

double median(std::vector<double> values) {
    require(!values.empty(), ErrorCode::input, "median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) {
        return values[mid];
    }
    return (values[mid - 1] + values[mid]) / 2.0;
}

double median_entropy(std::span<const EvalRecord> records) {
    std::vector<double> e;
    for (const EvalRecord& r : records) {
        e.push_back(r.entropy);
    }
    return median(std::move(e));
}

ResponseCategory classify_response(const EvalRecord& record, double median_entropy) {
    require(record.outcome.has_value(), ErrorCode::input,
            "record '" + record.id + "' has no short-answer outcome to classify");
    ResponseCategory c;
    switch (*record.outcome) {
        case ShortAnswerOutcome::Correct: c.kind = Determinism::DetT; break;
        case ShortAnswerOutcome::Incorrect: c.kind = Determinism::DetF; break;
        case ShortAnswerOutcome::Abstain: c.kind = Determinism::NonDet; break;
    }
    c.high_confidence = record.entropy <= median_entropy;
    return c;
}

std::optional<double> ShiftCell::fn_to_tp_ratio() const {
    if (fn_before == 0) return std::nullopt;
    return static_cast<double>(fn_to_tp) / static_cast<double>(fn_before);
}

std::optional<double> ShiftCell::tn_to_fp_ratio() const {
    if (tn_before == 0) return std::nullopt;
    return static_cast<double>(tn_to_fp) / static_cast<double>(tn_before);
}

ShiftTable shift_ratios(std::span<const EvalRecord> before, std::span<const EvalRecord> after,
                        const std::map<std::string, ResponseCategory>& category_of) {
    require(before.size() == after.size(), ErrorCode::input, "before/after record sets differ in size");
    std::map<std::string, const EvalRecord*> later;
    for (const EvalRecord& r : after) {
        require(later.emplace(r.id, &r).second, ErrorCode::input, "duplicate record id '" + r.id + "'");
    }
    ShiftTable table;
    for (const ResponseCategory& c : all_categories()) {
        table[c];
    }
    for (const EvalRecord& r : before) {
        const auto it = later.find(r.id);
        require(it != later.end(), ErrorCode::input, "record '" + r.id + "' missing from the after set");
        const auto cat = category_of.find(r.id);
        require(cat != category_of.end(), ErrorCode::input, "record '" + r.id + "' has no category");
        ShiftCell& cell = table[cat->second];
        const Cell was = cell_of(r);
        const Cell now = cell_of(*it->second);
        if (was == Cell::FN) {
            ++cell.fn_before;
            cell.fn_to_tp += now == Cell::TP ? 1 : 0;
        } else if (was == Cell::TN) {
            ++cell.tn_before;
            cell.tn_to_fp += now == Cell::FP ? 1 : 0;
        }
    }
    return table;
}

std::string shift_table_csv(const ShiftTable& table) {
    // Fixed table order; categories absent from the table print N/A.
    const std::vector<ResponseCategory> cats = all_categories();
    std::string out = "shift";
    for (const ResponseCategory& cat : cats) {
        out += "," + cat.name();
    }
    out += "\n";
    auto row = [&](const char* name, auto getter) {
        out += name;
        for (const ResponseCategory& cat : cats) {
            const auto it = table.find(cat);
            const std::optional<double> v = it == table.end() ? std::nullopt : getter(it->second);
            out += "," + (v ? format_double(*v) : std::string("N/A"));
        }
        out += "\n";
    };
    row("FN->TP", [](const ShiftCell& c) { return c.fn_to_tp_ratio(); });
    row("TN->FP", [](const ShiftCell& c) { return c.tn_to_fp_ratio(); });
    return out;
}

Histogram histogram(std::span<const EvalRecord> records, std::size_t bins) {
    require(bins >= 2, ErrorCode::input, "histogram needs at least 2 bins");
    Histogram h;
    h.bins = bins;
    h.counts.assign(bins, {0, 0, 0, 0});
    for (const EvalRecord& r : records) {
        ++h.counts[confidence_bin(r.confidence, bins)][static_cast<std::size_t>(cell_of(r))];
    }
    return h;
}

std::string histogram_csv(const Histogram& h) {
    std::string out = "bin_lo,bin_hi,tp,fp,tn,fn\n";
    const double b = static_cast<double>(h.bins);
    for (std::size_t i = 0; i < h.bins; ++i) {
        out += format_double(static_cast<double>(i) / b) + "," + format_double(static_cast<double>(i + 1) / b);
        for (std::size_t c : h.counts[i]) {
            out += "," + std::to_string(c);
        }
        out += "\n";
    }
    return out;
}

std::string histogram_json(const Histogram& h) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    const double b = static_cast<double>(h.bins);
    for (std::size_t i = 0; i < h.bins; ++i) {
        const auto& c = h.counts[i];
        arr.push_back({{"bin_lo", static_cast<double>(i) / b},
                       {"bin_hi", static_cast<double>(i + 1) / b},
                       {"tp", c[0]},
                       {"fp", c[1]},
                       {"tn", c[2]},
                       {"fn", c[3]}});
    }
    return arr.dump(2) + "\n";
}

bool MetricsReport::operator==(const MetricsReport& o) const {
    return scores.accuracy == o.scores.accuracy && scores.precision == o.scores.precision &&
           scores.recall == o.scores.recall && scores.f1 == o.scores.f1 && counts == o.counts &&
           model_nas == o.model_nas && ece == o.ece && flags == o.flags;
}

MetricsReport metrics_report(std::span<const EvalRecord> records, double model_nas, std::size_t bins) {
    MetricsReport r;
    r.counts = confusion(records);
    r.scores = prf1(r.counts);
    r.model_nas = model_nas;
    r.ece = ece(records, bins);
    r.flags = r.scores.flags;
    return r;
}

std::string metrics_report_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.scores.accuracy;
    j["precision"] = r.scores.precision;
    j["recall"] = r.scores.recall;
    j["f1"] = r.scores.f1;
    j["model_nas"] = r.model_nas;
    j["ece"] = r.ece;
    j["counts"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}};
    j["flags"] = r.flags;
    return j.dump(2) + "\n";
}

MetricsReport metrics_report_from_json(const std::string& text) {
    MetricsReport r;
    try {
        const auto j = nlohmann::json::parse(text);
        r.scores.accuracy = j.at("accuracy").get<double>();
        r.scores.precision = j.at("precision").get<double>();
        r.scores.recall = j.at("recall").get<double>();
        r.scores.f1 = j.at("f1").get<double>();
        r.model_nas = j.at("model_nas").get<double>();
        r.ece = j.at("ece").get<double>();
        const auto& c = j.at("counts");
        r.counts = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("tn").get<std::size_t>(),
                    c.at("fn").get<std::size_t>()};
        r.flags = j.at("flags").get<std::vector<std::string>>();
        r.scores.flags = r.flags;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::input, std::string("malformed metrics report: ") + e.what());
    }
    return r;
}

namespace {
constexpr const char* kCsvHeader = "accuracy,precision,recall,f1,model_nas,ece,tp,fp,tn,fn,flags";
}

std::string metrics_report_csv(const MetricsReport& r) {
    std::string flags;
    for (const std::string& f : r.flags) {
        flags += (flags.empty() ? "" : ";") + f;
    }
    std::string out = std::string(kCsvHeader) + "\n";
    out += format_double(r.scores.accuracy) + "," + format_double(r.scores.precision) + "," +
           format_double(r.scores.recall) + "," + format_double(r.scores.f1) + "," + format_double(r.model_nas) + "," +
           format_double(r.ece) + "," + std::to_string(r.counts.tp) + "," + std::to_string(r.counts.fp) + "," +
           std::to_string(r.counts.tn) + "," + std::to_string(r.counts.fn) + "," + flags + "\n";
    return out;
}

MetricsReport metrics_report_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string header;
    std::string line;
    require(std::getline(in, header) && header == kCsvHeader, ErrorCode::input, "unexpected metrics CSV header");
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::input, "metrics CSV has no data row");
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    require(cells.size() == 11, ErrorCode::input, "metrics CSV row needs 11 cells");
    auto num = [&](std::size_t i) {
        double v = 0.0;
        const auto res = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
        require(res.ec == std::errc() && res.ptr == cells[i].data() + cells[i].size(), ErrorCode::input,
                "bad number '" + cells[i] + "' in metrics CSV");
        return v;
    };
    auto count = [&](std::size_t i) {
        std::size_t v = 0;
        const auto res = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
        require(res.ec == std::errc() && res.ptr == cells[i].data() + cells[i].size(), ErrorCode::input,
                "bad count '" + cells[i] + "' in metrics CSV");
        return v;
    };
    MetricsReport r;
    r.scores.accuracy = num(0);
    r.scores.precision = num(1);
    r.scores.recall = num(2);
    r.scores.f1 = num(3);
    r.model_nas = num(4);
    r.ece = num(5);
    r.counts = {count(6), count(7), count(8), count(9)};
    std::istringstream fl(cells[10]);
    for (std::string f; std::getline(fl, f, ';');) {
        if (!f.empty()) r.flags.push_back(f);
    }
    r.scores.flags = r.flags;
    return r;
}

std::optional<double> negative_confidence(std::span<const EvalRecord> records) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const EvalRecord& r : records) {
        if (r.decision == Label::Negative) {
            sum += r.confidence;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::string records_jsonl(std::span<const EvalRecord> records, std::span<const double> per_sample_nas) {
    require(per_sample_nas.empty() || per_sample_nas.size() == records.size(), ErrorCode::input,
            "per-sample NAS does not match records");
    std::string out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const EvalRecord& r = records[i];
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["label"] = label_name(r.label);
        j["decision"] = label_name(r.decision);
        j["confidence"] = r.confidence;
        j["entropy"] = r.entropy;
        if (r.outcome) j["outcome"] = outcome_name(*r.outcome);
        if (!per_sample_nas.empty()) j["model_nas"] = per_sample_nas[i];
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace ablb
