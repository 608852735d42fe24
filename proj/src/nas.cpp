#include "ablb/nas.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "ablb/error.hpp"

namespace ablb {

double nas_sample_head(const AttentionMatrix& attn, const BinarySample& sample) {
    const std::size_t n = sample.tokens.size();
    require(attn.n == n && attn.data.size() == n * n, ErrorCode::input,
            "attention matrix is " + std::to_string(attn.n) + "x" + std::to_string(attn.n) + " but sample '" +
                sample.id + "' has length " + std::to_string(n));
    require(sample.t_yes < sample.instr_len && sample.t_no < sample.instr_len && sample.instr_len < n,
            ErrorCode::input, "sample '" + sample.id + "' breaks the candidate/instruction layout");
    double total = 0.0;
    for (std::size_t i = sample.instr_len; i < n; ++i) {
        const double yes = std::max(attn.at(i, sample.t_yes), kAttentionFloor);
        const double no = std::max(attn.at(i, sample.t_no), kAttentionFloor);
        // Difference of logs rather than log of the ratio keeps column swaps exactly antisymmetric.
        total += (yes + no) * (std::log(no) - std::log(yes));
    }
    return total;
}

std::vector<double> nas_sample_all_heads(const AttentionStack& attn, const BinarySample& sample) {
    std::vector<double> out;
    out.reserve(attn.heads.size());
    for (const AttentionMatrix& a : attn.heads) {
        out.push_back(nas_sample_head(a, sample));
    }
    return out;
}

std::vector<double> nas_sample_all_heads(const ModelState& model, const BinarySample& sample) {
    return nas_sample_all_heads(attention(model, sample.tokens), sample);
}

std::vector<std::vector<double>> nas_matrix(const ModelState& model, std::span<const BinarySample> samples) {
    std::vector<std::vector<double>> out;
    out.reserve(samples.size());
    for (const BinarySample& s : samples) {
        out.push_back(nas_sample_all_heads(model, s));
    }
    return out;
}

double single_head_nas(std::span<const BinarySample> samples, const ModelState& model, HeadId head) {
    require(!samples.empty(), ErrorCode::input, "sample set is empty");
    model.check_head(head);
    double total = 0.0;
    for (const BinarySample& s : samples) {
        total += nas_sample_head(attention(model, s.tokens).at(head), s);
    }
    return total / static_cast<double>(samples.size());
}

std::vector<HeadScore> nas_table(const std::vector<std::vector<double>>& per_sample, std::size_t num_heads) {
    require(!per_sample.empty(), ErrorCode::input, "sample set is empty");
    const std::size_t total_heads = per_sample.front().size();
    require(num_heads > 0 && total_heads % num_heads == 0, ErrorCode::input, "head count does not divide table");
    std::vector<HeadScore> table;
    table.reserve(total_heads);
    for (std::size_t h = 0; h < total_heads; ++h) {
        double sum = 0.0;
        for (const auto& row : per_sample) {
            require(row.size() == total_heads, ErrorCode::input, "ragged per-sample NAS rows");
            sum += row[h];
        }
        table.push_back(HeadScore{HeadId{h / num_heads, h % num_heads}, sum / static_cast<double>(per_sample.size())});
    }
    return table;
}

std::vector<HeadScore> nas_table(std::span<const BinarySample> samples, const ModelState& model) {
    require(!samples.empty(), ErrorCode::input, "sample set is empty");
    return nas_table(nas_matrix(model, samples), model.config().num_heads);
}

double model_nas(std::span<const BinarySample> samples, const ModelState& model) {
    double total = 0.0;
    for (const HeadScore& s : nas_table(samples, model)) {
        total += s.score;
    }
    return total;
}

std::string nas_table_csv(const std::vector<HeadScore>& table) {
    std::string out = "layer,head,nas\n";
    char buf[96];
    for (const HeadScore& s : table) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%.6f\n", s.head.layer, s.head.head, s.score);
        out += buf;
    }
    return out;
}

std::string nas_table_json(const std::vector<HeadScore>& table) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const HeadScore& s : table) {
        arr.push_back({{"layer", s.head.layer}, {"head", s.head.head}, {"nas", s.score}});
    }
    return arr.dump(2);
}

}  // namespace ablb
