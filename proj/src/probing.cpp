#include "ablb/probing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "ablb/error.hpp"

namespace ablb {

std::vector<HeadId> ProbeResult::selected_heads() const {
    std::vector<HeadId> out;
    out.reserve(selected.size());
    for (const HeadScore& s : selected) {
        out.push_back(s.head);
    }
    return out;
}

std::vector<HeadId> rank_heads(std::span<const double> scores, std::size_t num_heads, std::size_t k) {
    require(num_heads > 0 && scores.size() % num_heads == 0, ErrorCode::input, "score vector does not match heads");
    require(k >= 1 && k <= scores.size(), ErrorCode::input,
            "k=" + std::to_string(k) + " outside 1.." + std::to_string(scores.size()));
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Flat index order equals (layer, head) order, so a stable sort on score alone applies the tie-break.
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<HeadId> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(HeadId{idx[i] / num_heads, idx[i] % num_heads});
    }
    return out;
}

std::vector<HeadId> topk_per_sample(const ModelState& model, const BinarySample& sample, std::size_t k) {
    const std::size_t total = model.config().total_heads();
    require(k >= 1 && k <= total, ErrorCode::input, "k=" + std::to_string(k) + " outside 1.." + std::to_string(total));
    const std::vector<double> scores = nas_sample_all_heads(model, sample);
    return rank_heads(scores, model.config().num_heads, k);
}

std::vector<HeadId> consistent_heads(const std::vector<std::vector<HeadId>>& per_sample_topk, double threshold) {
    require(!per_sample_topk.empty(), ErrorCode::input, "no per-sample head lists");
    require(threshold > 0.0 && threshold <= 1.0, ErrorCode::input, "consistency threshold must lie in (0, 1]");
    const double product = threshold * static_cast<double>(per_sample_topk.size());
    // Absorb representation error so 0.9 * 10 counts as exactly 9.
    const auto needed = static_cast<std::size_t>(std::ceil(product - 1e-9));

    std::map<HeadId, std::size_t> counts;
    for (const auto& list : per_sample_topk) {
        std::set<HeadId> unique(list.begin(), list.end());
        for (const HeadId& h : unique) {
            ++counts[h];
        }
    }
    std::vector<HeadId> out;
    for (const auto& [head, count] : counts) {
        if (count >= needed) {
            out.push_back(head);
        }
    }
    return out;
}

ProbeResult select_negative_heads(const std::vector<std::vector<double>>& per_sample, std::size_t num_heads,
                                  std::size_t k, std::size_t n, double threshold) {
    require(!per_sample.empty(), ErrorCode::input, "probing set is empty");
    const std::size_t total = per_sample.front().size();
    require(n >= 1 && n <= total, ErrorCode::input, "n=" + std::to_string(n) + " outside 1.." + std::to_string(total));

    ProbeResult r;
    r.k = k;
    r.n = n;
    r.threshold = threshold;
    for (const auto& row : per_sample) {
        r.per_sample_topk.push_back(rank_heads(row, num_heads, k));
    }
    const std::vector<HeadId> consistent = consistent_heads(r.per_sample_topk, threshold);
    const std::vector<HeadScore> table = nas_table(per_sample, num_heads);

    for (const HeadId& h : consistent) {
        r.consistent.push_back(table[h.layer * num_heads + h.head]);
    }
    std::vector<HeadScore> ranked = r.consistent;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const HeadScore& a, const HeadScore& b) { return a.score > b.score; });
    r.shortfall = ranked.size() < n;
    ranked.resize(std::min(n, ranked.size()));
    r.selected = std::move(ranked);
    return r;
}

ProbeResult select_negative_heads(const ModelState& model, std::span<const BinarySample> samples, std::size_t k,
                                  std::size_t n, double threshold) {
    require(!samples.empty(), ErrorCode::input, "probing set is empty");
    const std::size_t total = model.config().total_heads();
    require(k >= 1 && k <= total, ErrorCode::input, "k=" + std::to_string(k) + " outside 1.." + std::to_string(total));
    return select_negative_heads(nas_matrix(model, samples), model.config().num_heads, k, n, threshold);
}

double overlap_rate(std::span<const HeadId> a, std::span<const HeadId> b) {
    require(!a.empty() && !b.empty(), ErrorCode::input, "overlap_rate needs two non-empty lists");
    const std::set<HeadId> sa(a.begin(), a.end());
    const std::set<HeadId> sb(b.begin(), b.end());
    std::size_t common = 0;
    for (const HeadId& h : sa) {
        common += sb.count(h);
    }
    return static_cast<double>(common) / static_cast<double>(std::max(a.size(), b.size()));
}

ProbePartition partition_tp_fn(const ModelState& model, std::span<const BinarySample> probe_set) {
    ProbePartition p;
    for (const BinarySample& s : probe_set) {
        require(s.label == Label::Positive, ErrorCode::input,
                "probing sample '" + s.id + "' is not labeled positive");
        if (answer_decision(model, s).decision == Label::Positive) {
            p.tp.push_back(s);
        } else {
            p.fn.push_back(s);
        }
    }
    return p;
}

double halting_threshold(const ModelState& model, std::span<const BinarySample> tp) {
    require(!tp.empty(), ErrorCode::probing, "cannot derive tau: the true-positive set is empty");
    std::vector<double> per_sample;
    per_sample.reserve(tp.size());
    for (const BinarySample& s : tp) {
        const std::vector<double> scores = nas_sample_all_heads(model, s);
        per_sample.push_back(std::accumulate(scores.begin(), scores.end(), 0.0));
    }
    return halting_threshold(per_sample);
}

double halting_threshold(std::span<const double> per_sample_model_nas) {
    require(!per_sample_model_nas.empty(), ErrorCode::probing, "cannot derive tau: the true-positive set is empty");
    return *std::min_element(per_sample_model_nas.begin(), per_sample_model_nas.end());
}

namespace {

nlohmann::ordered_json scores_json(const std::vector<HeadScore>& scores) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const HeadScore& s : scores) {
        arr.push_back({{"layer", s.head.layer}, {"head", s.head.head}, {"nas", s.score}});
    }
    return arr;
}

std::vector<HeadScore> scores_from(const nlohmann::ordered_json& arr) {
    std::vector<HeadScore> out;
    for (const auto& e : arr) {
        out.push_back(HeadScore{HeadId{e.at("layer").get<std::size_t>(), e.at("head").get<std::size_t>()},
                                e.at("nas").get<double>()});
    }
    return out;
}

}  // namespace

std::string probe_result_json(const ProbeResult& r) {
    nlohmann::ordered_json j;
    j["k"] = r.k;
    j["n"] = r.n;
    j["threshold"] = r.threshold;
    j["consistent"] = scores_json(r.consistent);
    j["selected"] = scores_json(r.selected);
    j["shortfall"] = r.shortfall;
    // Lets other overlap definitions be recomputed from the stored lists.
    j["overlap_denominator"] = "max_list_length";
    return j.dump(2) + "\n";
}

ProbeResult probe_result_from_json(const std::string& text) {
    ProbeResult r;
    try {
        const auto j = nlohmann::ordered_json::parse(text);
        r.k = j.at("k").get<std::size_t>();
        r.n = j.at("n").get<std::size_t>();
        r.threshold = j.at("threshold").get<double>();
        r.consistent = scores_from(j.at("consistent"));
        r.selected = scores_from(j.at("selected"));
        r.shortfall = j.at("shortfall").get<bool>();
    } catch (const std::exception& e) {
        fail(ErrorCode::input, std::string("malformed probe result: ") + e.what());
    }
    return r;
}

}  // namespace ablb
