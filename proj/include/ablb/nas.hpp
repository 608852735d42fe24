#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ablb/model.hpp"
#include "ablb/sample.hpp"

namespace ablb {

/// Operands are clamped to this floor before the ratio and logarithm.
inline constexpr double kAttentionFloor = 1e-12;

struct HeadScore {
    HeadId head;
    double score = 0.0;

    friend bool operator==(const HeadScore&, const HeadScore&) = default;
};

/// Negative attention score of one head on one sample: sum over positions
/// i = instr_len .. L-1 of (a_yes + a_no) * ln(a_no / a_yes).
double nas_sample_head(const AttentionMatrix& attn, const BinarySample& sample);

/// Per-sample scores of every head, layer-major.
std::vector<double> nas_sample_all_heads(const AttentionStack& attn, const BinarySample& sample);
std::vector<double> nas_sample_all_heads(const ModelState& model, const BinarySample& sample);

/// Per-sample scores for a whole set: result[sample][head], layer-major heads.
std::vector<std::vector<double>> nas_matrix(const ModelState& model, std::span<const BinarySample> samples);

double single_head_nas(std::span<const BinarySample> samples, const ModelState& model, HeadId head);
double model_nas(std::span<const BinarySample> samples, const ModelState& model);

std::vector<HeadScore> nas_table(std::span<const BinarySample> samples, const ModelState& model);
/// Table from precomputed per-sample scores (see nas_matrix).
std::vector<HeadScore> nas_table(const std::vector<std::vector<double>>& per_sample, std::size_t num_heads);

std::string nas_table_csv(const std::vector<HeadScore>& table);
std::string nas_table_json(const std::vector<HeadScore>& table);

}  // namespace ablb
