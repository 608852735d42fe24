#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "ablb/dataset.hpp"
#include "checks.hpp"
#include "expect.hpp"

using namespace ablb;
using testutil::thrown_code;

namespace {

const Vocabulary kVocab(96);

QaRecord record(const std::string& q, const std::string& gold, std::optional<std::string> wrong = std::nullopt) {
    QaRecord r;
    r.id = "r-" + q;
    r.question = q;
    r.gold = gold;
    r.wrong = std::move(wrong);
    r.task_tag = "mod-add";
    return r;
}

std::size_t count_of(const std::vector<TokenId>& tokens, TokenId t) {
    return static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), t));
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("positive and negative prompts") {
    const QaRecord r = record("3 + 4", "7", "8");
    const PromptTemplate t = templates::preset("nasa");
    const BinarySample pos = make_positive(r, t, kVocab, 64);
    const BinarySample neg = make_negative(r, t, kVocab, 64);

    CHECK(kVocab.decode(pos.tokens) ==
          "you are given a question and you must answer yes or no . Question: 3 + 4 is answer 7 ? Answer:");
    CHECK(kVocab.decode(neg.tokens) ==
          "you are given a question and you must answer yes or no . Question: 3 + 4 is answer 8 ? Answer:");
    CHECK(pos.label == Label::Positive);
    CHECK(neg.label == Label::Negative);
    CHECK(pos.origin == "positive");
    CHECK(neg.origin == "negative");
    CHECK(pos.instr_len == 13);
    CHECK(pos.positive_token() == kVocab.id("yes"));
    CHECK(pos.negative_token() == kVocab.id("no"));
    CHECK(pos.t_yes < pos.instr_len);
    CHECK(pos.t_no < pos.instr_len);
    CHECK(neg.instr_len == pos.instr_len);
    CHECK_NOTHROW(pos.validate());

    CHECK(thrown_code([&] { make_negative(record("1 + 1", "2"), t, kVocab, 64); }) == ErrorCode::input);
    CHECK(thrown_code([&] { make_negative(record("1 + 1", "2", "2"), t, kVocab, 64); }) == ErrorCode::input);
}

TEST_CASE("wrong-label derivation") {
    const WrongLabelRule next{WrongLabelRule::Kind::NumericNext, 10, {}};
    CHECK(derive_wrong_label(record("3 + 4", "7"), next, 0) == "8");
    CHECK(derive_wrong_label(record("4 + 5", "9"), next, 0) == "0");

    const WrongLabelRule cats{WrongLabelRule::Kind::CategoricalNext, 0, {"C", "A", "B"}};
    CHECK(derive_wrong_label(record("q", "B"), cats, 0) == "C");
    CHECK(derive_wrong_label(record("q", "C"), cats, 0) == "A");

    const WrongLabelRule random{WrongLabelRule::Kind::NumericRandom, 10, {}};
    for (int g = 0; g < 10; ++g) {
        const QaRecord r = record("x" + std::to_string(g), std::to_string(g));
        const std::string w = derive_wrong_label(r, random, 5);
        CHECK(w != r.gold);
        CHECK(w == derive_wrong_label(r, random, 5));
    }

    const WrongLabelRule single{WrongLabelRule::Kind::CategoricalNext, 0, {"A"}};
    CHECK(thrown_code([&] { derive_wrong_label(record("q", "A"), single, 0); }) == ErrorCode::generation);
    CHECK(thrown_code([&] { derive_wrong_label(record("q", "12"), next, 0); }) == ErrorCode::generation);
    CHECK(thrown_code([&] { derive_wrong_label(record("q", "seven"), next, 0); }) == ErrorCode::generation);
}

TEST_CASE("prompt assembly") {
    PromptTemplate t = templates::preset("type-a:true-false");
    const AssembledPrompt zero = assemble_prompt("1 + 2", "3", t, kVocab, 64);
    CHECK(zero.tokens[zero.t_yes] == kVocab.id("true"));
    CHECK(zero.tokens[zero.t_no] == kVocab.id("false"));
    CHECK(count_of(zero.tokens, kVocab.id("true")) == 1);

    for (int i = 0; i < 4; ++i) {
        t.few_shot.push_back({"0 + " + std::to_string(i), std::to_string(i), i % 2 ? Label::Negative : Label::Positive});
    }
    const AssembledPrompt four = assemble_prompt("1 + 2", "3", t, kVocab, 128);
    CHECK(four.instr_len == zero.instr_len);
    CHECK(four.t_yes == zero.t_yes);
    CHECK(four.t_no == zero.t_no);
    // Each exemplar ends with its decision token.
    CHECK(count_of(four.tokens, kVocab.id("true")) == 3);
    CHECK(count_of(four.tokens, kVocab.id("false")) == 3);
    CHECK(count_of(four.tokens, kVocab.id("Question:")) == 5);

    SUBCASE("length overflow names the section") {
        try {
            assemble_prompt("1 + 2", "3", t, kVocab, 30);
            FAIL("expected a length error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::length);
            CHECK(std::string(e.what()).find("few-shot") != std::string::npos);
        }
        CHECK(thrown_code([&] { assemble_prompt("1 + 2", "3", templates::preset("nasa"), kVocab, 14); }) ==
              ErrorCode::length);
        CHECK(thrown_code([&] { assemble_prompt("1 + 2", "3", templates::preset("nasa"), kVocab, 5); }) ==
              ErrorCode::length);
    }
    SUBCASE("malformed candidates") {
        PromptTemplate bad = templates::preset("nasa");
        bad.positive_candidate = "of course";
        CHECK(thrown_code([&] { assemble_prompt("1 + 2", "3", bad, kVocab, 64); }) == ErrorCode::template_);
        bad = templates::preset("nasa");
        bad.negative_candidate = "yes";
        CHECK(thrown_code([&] { assemble_prompt("1 + 2", "3", bad, kVocab, 64); }) == ErrorCode::template_);
        bad = templates::preset("nasa");
        bad.instruction_text = "answer {pos} .";
        CHECK(thrown_code([&] { assemble_prompt("1 + 2", "3", bad, kVocab, 64); }) == ErrorCode::template_);
    }
    CHECK(thrown_code([] { templates::preset("nasa:maybe"); }) == ErrorCode::config);
    CHECK(templates::preset_names().size() == 9);
}

TEST_CASE("synthetic generation") {
    TaskSpec task;
    task.modulus = 5;
    const auto a = gen_synthetic(task, 40, 0.15, 3, kVocab);
    const auto b = gen_synthetic(task, 40, 0.15, 3, kVocab);
    const auto c = gen_synthetic(task, 40, 0.15, 4, kVocab);
    CHECK(a.samples == b.samples);
    CHECK(a.qa == b.qa);
    CHECK(a.samples != c.samples);
    const auto positives = std::count_if(a.samples.begin(), a.samples.end(),
                                         [](const BinarySample& s) { return s.label == Label::Positive; });
    CHECK(positives == 6);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        const BinarySample& s = a.samples[i];
        CHECK_NOTHROW(s.validate());
        ids.insert(s.id);
        CHECK(a.qa[i].wrong.has_value());
        CHECK(*a.qa[i].wrong != a.qa[i].gold);
    }
    CHECK(ids.size() == 40);
    CHECK(gen_synthetic(task, 10, 0.0, 1, kVocab).samples.front().label == Label::Negative);
    CHECK(thrown_code([&] { gen_synthetic(task, 10, 1.5, 1, kVocab); }) == ErrorCode::input);
    task.modulus = 100;
    CHECK(thrown_code([&] { gen_synthetic(task, 10, 0.5, 1, kVocab); }) == ErrorCode::input);
}

TEST_CASE("jsonl round trip and atomic writes") {
    testutil::TempDir dir("dataset");
    TaskSpec task;
    task.modulus = 5;
    const auto data = gen_synthetic(task, 12, 0.5, 8, kVocab);
    write_samples_jsonl(data.samples, dir.file("s.jsonl"));
    write_qa_jsonl(data.qa, dir.file("q.jsonl"));
    CHECK(read_samples_jsonl(dir.file("s.jsonl")) == data.samples);
    CHECK(read_qa_jsonl(dir.file("q.jsonl")) == data.qa);

    write_file_atomic(dir.file("x.txt"), "first");
    write_file_atomic(dir.file("x.txt"), "second");
    CHECK(read_file(dir.file("x.txt")) == "second");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++entries;
    CHECK(entries == 3);

    write_file_atomic(dir.file("bad.jsonl"), "{\"id\": \"a\", \"tokens\": [1, 2]\n");
    CHECK(thrown_code([&] { read_samples_jsonl(dir.file("bad.jsonl")); }) == ErrorCode::input);
    CHECK(thrown_code([&] { read_samples_jsonl(dir.file("missing.jsonl")); }) == ErrorCode::io);
}

TEST_CASE("parametric selection keeps records the model answers correctly") {
    std::vector<double> p(96, 0.0);
    p[kVocab.number(3)] = 0.7;
    p[kVocab.number(1)] = 0.3;
    const ModelState m = checks::logit_model(p);
    const std::vector<QaRecord> qa{record("1 + 2", "3"), record("0 + 1", "1"), record("2 + 2", "4")};
    const auto kept = select_parametric(m, qa, kVocab);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].gold == "3");
    CHECK(short_answer(m, qa[1], kVocab).outcome == ShortAnswerOutcome::Incorrect);

    std::vector<double> abstain(96, 0.0);
    abstain[Vocabulary::abstain] = 1.0;
    CHECK(short_answer(checks::logit_model(abstain), qa[0], kVocab).outcome == ShortAnswerOutcome::Abstain);
    CHECK(select_parametric(checks::logit_model(abstain), qa, kVocab).empty());
}

}  // TEST_SUITE
