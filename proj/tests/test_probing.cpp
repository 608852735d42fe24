#include <doctest.h>

#include <algorithm>
#include <set>

#include "ablb/dataset.hpp"
#include "ablb/probing.hpp"
#include "checks.hpp"
#include "expect.hpp"

using namespace ablb;
using testutil::thrown_code;

namespace {

std::vector<HeadId> ids(std::initializer_list<std::pair<std::size_t, std::size_t>> list) {
    std::vector<HeadId> out;
    for (auto [l, h] : list) out.push_back({l, h});
    return out;
}

// Every head attends uniformly except (1, 2), which looks only at the negative candidate.
ModelState no_attending_model() {
    ModelConfig c;
    std::vector<double> uniform(c.vocab_size, 1.0 / static_cast<double>(c.vocab_size));
    ModelState m = checks::logit_model(uniform, c);
    const ParamLayout& layout = m.layout();
    auto p = m.params();
    const std::size_t d = c.model_dim;
    const std::size_t hd = c.head_dim();
    const TokenId no = Vocabulary(c.vocab_size).id("no");
    p[layout.tok_emb() + no * d] = 1.0f;
    const auto& layer = layout.layer(1);
    for (std::size_t i = 0; i < d; ++i) p[layer.ln1_gain + i] = 1.0f;
    p[layer.ln1_bias + 1] = 1.0f;
    p[layer.wq[2] + 1 * hd] = 10.0f;
    p[layer.wk[2]] = 10.0f;
    return m;
}

BinarySample positive_from(const std::string& preset_name, int a, int b) {
    QaRecord r;
    r.id = preset_name + std::to_string(a) + std::to_string(b);
    r.question = std::to_string(a) + " + " + std::to_string(b);
    r.gold = std::to_string((a + b) % 5);
    r.task_tag = "mod-add";
    return make_positive(r, templates::preset(preset_name), Vocabulary(96), 64);
}

}  // namespace

TEST_SUITE("probing") {

TEST_CASE("per-sample ranking") {
    const std::vector<double> scores{0.9, 0.1, 0.5};
    CHECK(rank_heads(scores, 3, 2) == ids({{0, 0}, {0, 2}}));
    const std::vector<double> flat(6, 0.25);
    CHECK(rank_heads(flat, 3, 6) == ids({{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {1, 2}}));
    const std::vector<double> mixed{0.3, -1.0, 2.0, 0.3};
    const auto all = rank_heads(mixed, 2, 4);
    CHECK(std::set<HeadId>(all.begin(), all.end()).size() == 4);
    CHECK(all == ids({{1, 0}, {0, 0}, {1, 1}, {0, 1}}));
    CHECK(thrown_code([&] { rank_heads(scores, 3, 0); }) == ErrorCode::input);
    CHECK(thrown_code([&] { rank_heads(scores, 3, 4); }) == ErrorCode::input);
}

TEST_CASE("consistency counts whole samples, inclusively") {
    std::vector<std::vector<HeadId>> lists(10, ids({{0, 1}}));
    for (std::size_t i = 0; i < 10; ++i) lists[i].push_back({0, 0});
    lists[9] = ids({{0, 0}, {1, 1}});  // (0,1) now in 9 of 10
    lists[8] = ids({{0, 1}, {1, 1}});
    lists[7] = ids({{0, 1}, {1, 1}});  // (0,0) now in 8 of 10
    const auto c = consistent_heads(lists, 0.9);
    CHECK(std::find(c.begin(), c.end(), HeadId{0, 1}) != c.end());
    CHECK(std::find(c.begin(), c.end(), HeadId{0, 0}) == c.end());
    const std::vector<std::vector<HeadId>> single{ids({{1, 0}, {0, 3}})};
    CHECK(consistent_heads(single) == ids({{0, 3}, {1, 0}}));
    CHECK(thrown_code([&] { consistent_heads(single, 0.0); }) == ErrorCode::input);
    CHECK(thrown_code([&] { consistent_heads(single, 1.5); }) == ErrorCode::input);
    const std::vector<std::vector<HeadId>> none;
    CHECK(thrown_code([&] { consistent_heads(none); }) == ErrorCode::input);
}

TEST_CASE("selection rules") {
    SUBCASE("identical samples select the shared ranking") {
        const std::vector<double> row{0.2, 0.9, -0.1, 0.5, 0.7, 0.0, 0.3, 0.1};
        const std::vector<std::vector<double>> table(4, row);
        const ProbeResult r = select_negative_heads(table, 4, 5, 3);
        CHECK(r.selected_heads() == rank_heads(row, 4, 3));
        CHECK_FALSE(r.shortfall);
    }
    SUBCASE("shortfall keeps every consistent head") {
        std::vector<std::vector<double>> table;
        for (int s = 0; s < 3; ++s) {
            std::vector<double> row(40, 0.0);
            for (int h = 0; h < 5; ++h) row[static_cast<std::size_t>(h)] = 1.0 + h;
            row[static_cast<std::size_t>(10 + s * 5)] = 9.0;  // sample-specific, never consistent
            table.push_back(row);
        }
        const ProbeResult r = select_negative_heads(table, 8, 6, 30);
        CHECK(r.selected.size() == 5);
        CHECK(r.shortfall);
        for (std::size_t i = 1; i < r.selected.size(); ++i) CHECK(r.selected[i - 1].score > r.selected[i].score);
    }
    SUBCASE("larger k never shrinks the consistent set") {
        ModelConfig c;
        c.model_dim = 32;
        c.seed = 9;
        const ModelState m = build_model(c);
        const auto samples = checks::positive_fixture(c, 6, 4);
        std::size_t prev = 0;
        for (std::size_t k = 1; k <= 8; ++k) {
            const ProbeResult r = select_negative_heads(m, samples, k, 8);
            CHECK(r.consistent.size() >= prev);
            prev = r.consistent.size();
        }
        CHECK(select_negative_heads(m, samples, 3, 2).selected == select_negative_heads(m, samples, 3, 2).selected);
        CHECK(thrown_code([&] { select_negative_heads(m, samples, 9, 2); }) == ErrorCode::input);
    }
    SUBCASE("a head built to look at the negative candidate ranks first") {
        const ModelState m = no_attending_model();
        const auto samples = checks::positive_fixture(m.config(), 4, 1);
        const ProbeResult r = select_negative_heads(m, samples, 1, 1);
        REQUIRE(r.selected.size() == 1);
        CHECK(r.selected[0].head == HeadId{1, 2});
        CHECK(r.selected[0].score > 1.0);
        for (const auto& s : samples) CHECK(topk_per_sample(m, s, 1) == ids({{1, 2}}));
    }
}

TEST_CASE("brute-force agreement") {
    checks::ProbeStats st;
    const checks::Outcome r = checks::probing_oracle(&st);
    INFO(r.detail);
    CHECK(r.pass);
    CHECK(st.instances > 100000);
}

TEST_CASE("overlap and tau hand values") {
    const checks::Outcome r = checks::probing_hand_values();
    INFO(r.detail);
    CHECK(r.pass);
    const std::vector<HeadId> empty;
    const auto one = ids({{0, 0}});
    CHECK(thrown_code([&] { overlap_rate(empty, one); }) == ErrorCode::input);
    const std::vector<double> none;
    CHECK(thrown_code([&] { halting_threshold(none); }) == ErrorCode::probing);
}

TEST_CASE("true-positive / false-negative partition") {
    const Vocabulary v(96);
    std::vector<double> p(96, 0.0);
    p[v.id("yes")] = 0.3;
    p[v.id("no")] = 0.1;
    p[v.id("true")] = 0.1;
    p[v.id("false")] = 0.3;
    p[v.id("correct")] = 0.2;
    const ModelState m = checks::logit_model(p);

    std::vector<BinarySample> mixed;
    for (int i = 0; i < 3; ++i) mixed.push_back(positive_from("nasa:yes-no", i, 1));
    for (int i = 0; i < 2; ++i) mixed.push_back(positive_from("nasa:true-false", i, 2));
    const ProbePartition part = partition_tp_fn(m, mixed);
    CHECK(part.tp.size() == 3);
    CHECK(part.fn.size() == 2);

    std::vector<BinarySample> yes_only(mixed.begin(), mixed.begin() + 3);
    CHECK(partition_tp_fn(m, yes_only).fn.empty());
    std::vector<BinarySample> no_only(mixed.begin() + 3, mixed.end());
    CHECK(partition_tp_fn(m, no_only).tp.empty());
    CHECK(thrown_code([&] { halting_threshold(m, partition_tp_fn(m, no_only).tp); }) == ErrorCode::probing);

    mixed[0].label = Label::Negative;
    CHECK(thrown_code([&] { partition_tp_fn(m, mixed); }) == ErrorCode::input);
}

TEST_CASE("probe result json round trip") {
    ProbeResult r;
    r.k = 100;
    r.n = 30;
    r.threshold = 0.9;
    r.consistent = {{{0, 1}, 0.25}, {{1, 0}, -0.5}};
    r.selected = {{{0, 1}, 0.25}};
    r.shortfall = true;
    const std::string text = probe_result_json(r);
    const ProbeResult back = probe_result_from_json(text);
    CHECK(back.k == 100);
    CHECK(back.n == 30);
    CHECK(back.consistent == r.consistent);
    CHECK(back.selected == r.selected);
    CHECK(back.shortfall);
    CHECK(probe_result_json(back) == text);
    CHECK(thrown_code([&] { probe_result_from_json("{\"k\": 1}"); }) == ErrorCode::input);
}

}  // TEST_SUITE
