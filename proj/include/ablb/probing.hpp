#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ablb/model.hpp"
#include "ablb/nas.hpp"

namespace ablb {

inline constexpr double kDefaultConsistency = 0.9;

struct ProbeResult {
    std::size_t k = 0;
    std::size_t n = 0;
    double threshold = kDefaultConsistency;
    std::vector<std::vector<HeadId>> per_sample_topk;
    std::vector<HeadScore> consistent;  // layer-major order, scored by single-head NAS on X
    std::vector<HeadScore> selected;    // descending single-head NAS
    bool shortfall = false;             // fewer than n consistent heads

    std::vector<HeadId> selected_heads() const;
};

/// Orders heads by descending score, ties by (layer, head) ascending, keeps k.
std::vector<HeadId> rank_heads(std::span<const double> scores, std::size_t num_heads, std::size_t k);

std::vector<HeadId> topk_per_sample(const ModelState& model, const BinarySample& sample, std::size_t k);

/// Heads present in at least ceil(threshold * |lists|) of the per-sample lists.
std::vector<HeadId> consistent_heads(const std::vector<std::vector<HeadId>>& per_sample_topk,
                                     double threshold = kDefaultConsistency);

ProbeResult select_negative_heads(const ModelState& model, std::span<const BinarySample> samples, std::size_t k,
                                  std::size_t n, double threshold = kDefaultConsistency);
/// Same selection from precomputed per-sample scores (rows: samples, columns: layer-major heads).
ProbeResult select_negative_heads(const std::vector<std::vector<double>>& per_sample, std::size_t num_heads,
                                  std::size_t k, std::size_t n, double threshold = kDefaultConsistency);

/// |set(a) & set(b)| / max(|a|, |b|).
double overlap_rate(std::span<const HeadId> a, std::span<const HeadId> b);

struct ProbePartition {
    std::vector<BinarySample> tp;
    std::vector<BinarySample> fn;
    std::optional<double> tau;
};

ProbePartition partition_tp_fn(const ModelState& model, std::span<const BinarySample> probe_set);

/// Minimum per-sample model NAS over the true-positive set.
double halting_threshold(const ModelState& model, std::span<const BinarySample> tp);
/// Same minimum over precomputed per-sample model NAS values.
double halting_threshold(std::span<const double> per_sample_model_nas);

std::string probe_result_json(const ProbeResult& result);
ProbeResult probe_result_from_json(const std::string& text);

}  // namespace ablb
