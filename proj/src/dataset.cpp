#include "ablb/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ablb/error.hpp"

namespace ablb {

namespace {

using ojson = nlohmann::ordered_json;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

bool is_single_word(const std::string& s) {
    return !s.empty() && s.find_first_of(" \t\r\n") == std::string::npos;
}

TokenId candidate_token(const std::string& word, const Vocabulary& vocab) {
    if (!is_single_word(word) || !vocab.contains(word)) {
        fail(ErrorCode::template_, "candidate '" + word + "' is not a single vocabulary token");
    }
    return vocab.id(word);
}

std::vector<TokenId> render_body(const std::string& question, const std::string& slot_value, BodyFormat format,
                                 const Vocabulary& vocab) {
    std::string text = "Question: " + question;
    text += format == BodyFormat::AnswerVerification ? " is answer " : " = ";
    text += slot_value + " ? Answer:";
    return vocab.encode(text);
}

std::size_t parse_number(const std::string& s, const std::string& what) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        fail(ErrorCode::generation, what + " '" + s + "' is not a non-negative integer");
    }
    return value;
}

}  // namespace

// ---------------------------------------------------------------- templates

namespace templates {

PromptTemplate preset(const std::string& name) {
    const auto colon = name.find(':');
    const std::string instr = name.substr(0, colon);
    const std::string voc = colon == std::string::npos ? "yes-no" : name.substr(colon + 1);
    PromptTemplate t;
    if (instr == "nasa") {
        t.instruction_text = kNasaInstruction;
    } else if (instr == "type-a") {
        t.instruction_text = kTypeAInstruction;
    } else if (instr == "type-b") {
        t.instruction_text = kTypeBInstruction;
    } else {
        fail(ErrorCode::config, "unknown instruction preset '" + instr + "'");
    }
    if (voc == "yes-no") {
        t.positive_candidate = "yes";
        t.negative_candidate = "no";
    } else if (voc == "true-false") {
        t.positive_candidate = "true";
        t.negative_candidate = "false";
    } else if (voc == "correct-wrong") {
        t.positive_candidate = "correct";
        t.negative_candidate = "wrong";
    } else {
        fail(ErrorCode::config, "unknown candidate vocabulary '" + voc + "'");
    }
    return t;
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const char* i : {"nasa", "type-a", "type-b"}) {
        for (const char* v : {"yes-no", "true-false", "correct-wrong"}) {
            out.push_back(std::string(i) + ":" + v);
        }
    }
    return out;
}

}  // namespace templates

AssembledPrompt assemble_prompt(const std::string& question, const std::string& slot_value,
                                const PromptTemplate& tmpl, const Vocabulary& vocab, std::size_t max_seq_len) {
    const TokenId pos = candidate_token(tmpl.positive_candidate, vocab);
    const TokenId neg = candidate_token(tmpl.negative_candidate, vocab);
    require(pos != neg, ErrorCode::template_, "positive and negative candidates must differ");
    require(tmpl.instruction_text.find("{pos}") != std::string::npos &&
                tmpl.instruction_text.find("{neg}") != std::string::npos,
            ErrorCode::template_, "instruction text needs both {pos} and {neg} slots");

    std::string instruction = replace_all(tmpl.instruction_text, "{pos}", tmpl.positive_candidate);
    instruction = replace_all(instruction, "{neg}", tmpl.negative_candidate);

    AssembledPrompt out;
    out.tokens = vocab.encode(instruction);
    out.instr_len = out.tokens.size();
    require(std::count(out.tokens.begin(), out.tokens.end(), pos) == 1 &&
                std::count(out.tokens.begin(), out.tokens.end(), neg) == 1,
            ErrorCode::template_, "each candidate must appear exactly once in the instruction");
    out.t_yes = static_cast<std::size_t>(std::find(out.tokens.begin(), out.tokens.end(), pos) - out.tokens.begin());
    out.t_no = static_cast<std::size_t>(std::find(out.tokens.begin(), out.tokens.end(), neg) - out.tokens.begin());
    require(out.tokens.size() <= max_seq_len, ErrorCode::length,
            "instruction section overflows max_seq_len " + std::to_string(max_seq_len));

    for (std::size_t i = 0; i < tmpl.few_shot.size(); ++i) {
        const FewShotExample& ex = tmpl.few_shot[i];
        std::vector<TokenId> block = render_body(ex.question, ex.label, tmpl.body_format, vocab);
        block.push_back(ex.decision == Label::Positive ? pos : neg);
        out.tokens.insert(out.tokens.end(), block.begin(), block.end());
        require(out.tokens.size() <= max_seq_len, ErrorCode::length,
                "few-shot exemplar section overflows max_seq_len " + std::to_string(max_seq_len) + " at exemplar " +
                    std::to_string(i));
    }

    std::vector<TokenId> body = render_body(question, slot_value, tmpl.body_format, vocab);
    out.tokens.insert(out.tokens.end(), body.begin(), body.end());
    require(out.tokens.size() <= max_seq_len, ErrorCode::length,
            "question section overflows max_seq_len " + std::to_string(max_seq_len) + " (total " +
                std::to_string(out.tokens.size()) + ")");
    return out;
}

namespace {

BinarySample build_sample(const QaRecord& record, const std::string& slot, Label label, const PromptTemplate& tmpl,
                          const Vocabulary& vocab, std::size_t max_seq_len) {
    AssembledPrompt p = assemble_prompt(record.question, slot, tmpl, vocab, max_seq_len);
    BinarySample s;
    s.id = record.id + (label == Label::Positive ? ":pos" : ":neg");
    s.tokens = std::move(p.tokens);
    s.instr_len = p.instr_len;
    s.t_yes = p.t_yes;
    s.t_no = p.t_no;
    s.label = label;
    s.origin = label == Label::Positive ? "positive" : "negative";
    s.question = record.question;
    s.gold = record.gold;
    s.wrong = record.wrong;
    return s;
}

}  // namespace

BinarySample make_positive(const QaRecord& record, const PromptTemplate& tmpl, const Vocabulary& vocab,
                           std::size_t max_seq_len) {
    require(!record.gold.empty(), ErrorCode::input, "record '" + record.id + "' has no gold answer");
    return build_sample(record, record.gold, Label::Positive, tmpl, vocab, max_seq_len);
}

BinarySample make_negative(const QaRecord& record, const PromptTemplate& tmpl, const Vocabulary& vocab,
                           std::size_t max_seq_len) {
    require(record.wrong.has_value(), ErrorCode::input, "record '" + record.id + "' has no wrong answer");
    require(*record.wrong != record.gold, ErrorCode::input,
            "record '" + record.id + "' wrong answer equals the gold answer");
    return build_sample(record, *record.wrong, Label::Negative, tmpl, vocab, max_seq_len);
}

std::string derive_wrong_label(const QaRecord& record, const WrongLabelRule& rule, std::uint64_t seed) {
    require(!record.gold.empty(), ErrorCode::generation, "record '" + record.id + "' has no gold answer");
    switch (rule.kind) {
        case WrongLabelRule::Kind::NumericNext:
        case WrongLabelRule::Kind::NumericRandom: {
            require(rule.modulus >= 2, ErrorCode::generation, "numeric range has no alternative to the gold answer");
            const std::size_t gold = parse_number(record.gold, "gold answer");
            require(gold < rule.modulus, ErrorCode::generation,
                    "gold answer " + record.gold + " outside range 0.." + std::to_string(rule.modulus - 1));
            std::size_t offset = 1;
            if (rule.kind == WrongLabelRule::Kind::NumericRandom) {
                std::mt19937_64 rng(splitmix64(seed ^ fnv1a(record.id)));
                offset = 1 + static_cast<std::size_t>(rng() % (rule.modulus - 1));
            }
            return std::to_string((gold + offset) % rule.modulus);
        }
        case WrongLabelRule::Kind::CategoricalNext: {
            std::vector<std::string> cats = rule.categories;
            std::sort(cats.begin(), cats.end());
            cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
            auto it = std::find(cats.begin(), cats.end(), record.gold);
            require(it != cats.end(), ErrorCode::generation, "gold answer '" + record.gold + "' is not a category");
            require(cats.size() >= 2, ErrorCode::generation, "single-option task has no wrong label");
            ++it;
            return it == cats.end() ? cats.front() : *it;
        }
    }
    fail(ErrorCode::generation, "unknown wrong-label rule");
}

// ---------------------------------------------------------------- parametric selection

std::vector<TokenId> short_answer_prompt(const QaRecord& record, const Vocabulary& vocab, std::size_t max_seq_len) {
    std::vector<TokenId> tokens = vocab.encode(templates::kShortAnswerInstruction);
    std::vector<TokenId> body = vocab.encode("Question: " + record.question + " Answer:");
    tokens.insert(tokens.end(), body.begin(), body.end());
    require(tokens.size() <= max_seq_len, ErrorCode::length,
            "short-answer prompt for '" + record.id + "' overflows max_seq_len");
    return tokens;
}

ShortAnswerOutcome exact_match_oracle(const QaRecord& record, const std::string& model_answer) {
    if (model_answer == "unanswerable") {
        return ShortAnswerOutcome::Abstain;
    }
    return model_answer == record.gold ? ShortAnswerOutcome::Correct : ShortAnswerOutcome::Incorrect;
}

ShortAnswer short_answer(const ModelState& model, const QaRecord& record, const Vocabulary& vocab,
                         const AnswerOracle& oracle) {
    const std::vector<TokenId> prompt = short_answer_prompt(record, vocab, model.config().max_seq_len);
    const FirstTokenDistribution dist = first_token_distribution(model, prompt);
    const auto best = std::max_element(dist.probs.begin(), dist.probs.end()) - dist.probs.begin();
    ShortAnswer out;
    out.answer = vocab.word(static_cast<TokenId>(best));
    out.outcome = oracle(record, out.answer);
    return out;
}

std::vector<QaRecord> select_parametric(const ModelState& model, const std::vector<QaRecord>& qa_set,
                                        const Vocabulary& vocab, const AnswerOracle& oracle) {
    std::vector<QaRecord> out;
    for (const QaRecord& r : qa_set) {
        if (short_answer(model, r, vocab, oracle).outcome == ShortAnswerOutcome::Correct) {
            out.push_back(r);
        }
    }
    return out;
}

// ---------------------------------------------------------------- synthetic task

SyntheticData gen_synthetic(const TaskSpec& spec, std::size_t n, double yes_ratio, std::uint64_t seed,
                            const Vocabulary& vocab) {
    require(n >= 2, ErrorCode::input, "n must be at least 2");
    require(std::isfinite(yes_ratio) && yes_ratio >= 0.0 && yes_ratio <= 1.0, ErrorCode::input,
            "yes_ratio must lie in [0, 1]");
    require(spec.modulus >= 2, ErrorCode::input, "modulus must be at least 2");
    require(spec.modulus <= vocab.number_count(), ErrorCode::input,
            "modulus " + std::to_string(spec.modulus) + " exceeds the number tokens in the vocabulary");
    require(!spec.templates.empty(), ErrorCode::input, "task needs at least one template");

    std::mt19937_64 rng(splitmix64(seed));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < spec.modulus; ++a) {
        for (std::size_t b = 0; b < spec.modulus; ++b) {
            pairs.emplace_back(a, b);
        }
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);

    const auto positives = static_cast<std::size_t>(std::llround(static_cast<double>(n) * yes_ratio));
    std::vector<bool> is_positive(n, false);
    std::fill(is_positive.begin(), is_positive.begin() + static_cast<std::ptrdiff_t>(positives), true);
    std::shuffle(is_positive.begin(), is_positive.end(), rng);

    const WrongLabelRule rule{WrongLabelRule::Kind::NumericRandom, spec.modulus, {}};
    SyntheticData out;
    out.qa.reserve(n);
    out.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto [a, b] = pairs[i % pairs.size()];
        QaRecord r;
        r.id = spec.task_tag + "-" + std::to_string(seed) + "-" + std::to_string(i);
        r.question = std::to_string(a) + " + " + std::to_string(b);
        r.gold = std::to_string((a + b) % spec.modulus);
        r.task_tag = spec.task_tag;
        r.wrong = derive_wrong_label(r, rule, seed);
        const PromptTemplate& tmpl = spec.templates[i % spec.templates.size()];
        out.samples.push_back(is_positive[i] ? make_positive(r, tmpl, vocab, spec.max_seq_len)
                                             : make_negative(r, tmpl, vocab, spec.max_seq_len));
        out.qa.push_back(std::move(r));
    }
    return out;
}

std::vector<BinarySample> positive_samples(const std::vector<QaRecord>& records, const PromptTemplate& tmpl,
                                           const Vocabulary& vocab, std::size_t max_seq_len) {
    std::vector<BinarySample> out;
    out.reserve(records.size());
    for (const QaRecord& r : records) {
        out.push_back(make_positive(r, tmpl, vocab, max_seq_len));
    }
    return out;
}

// ---------------------------------------------------------------- JSONL

std::string sample_to_json(const BinarySample& s) {
    ojson j;
    j["id"] = s.id;
    j["tokens"] = s.tokens;
    j["instr_len"] = s.instr_len;
    j["t_yes"] = s.t_yes;
    j["t_no"] = s.t_no;
    j["label"] = s.label == Label::Positive ? "pos" : "neg";
    j["origin"] = s.origin;
    j["question"] = s.question;
    j["gold"] = s.gold;
    j["wrong"] = s.wrong ? ojson(*s.wrong) : ojson(nullptr);
    return j.dump();
}

BinarySample sample_from_json(const std::string& line) {
    BinarySample s;
    try {
        const ojson j = ojson::parse(line);
        s.id = j.at("id").get<std::string>();
        s.tokens = j.at("tokens").get<std::vector<TokenId>>();
        s.instr_len = j.at("instr_len").get<std::size_t>();
        s.t_yes = j.at("t_yes").get<std::size_t>();
        s.t_no = j.at("t_no").get<std::size_t>();
        const std::string label = j.at("label").get<std::string>();
        require(label == "pos" || label == "neg", ErrorCode::input, "label must be \"pos\" or \"neg\"");
        s.label = label == "pos" ? Label::Positive : Label::Negative;
        s.origin = j.at("origin").get<std::string>();
        s.question = j.at("question").get<std::string>();
        s.gold = j.at("gold").get<std::string>();
        if (!j.at("wrong").is_null()) {
            s.wrong = j.at("wrong").get<std::string>();
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(ErrorCode::input, std::string("malformed sample line: ") + e.what());
    }
    s.validate();
    return s;
}

std::string qa_to_json(const QaRecord& r) {
    ojson j;
    j["id"] = r.id;
    j["question"] = r.question;
    j["gold"] = r.gold;
    j["task_tag"] = r.task_tag;
    if (r.wrong) {
        j["wrong"] = *r.wrong;
    }
    return j.dump();
}

QaRecord qa_from_json(const std::string& line) {
    QaRecord r;
    try {
        const ojson j = ojson::parse(line);
        r.id = j.at("id").get<std::string>();
        r.question = j.at("question").get<std::string>();
        r.gold = j.at("gold").get<std::string>();
        r.task_tag = j.at("task_tag").get<std::string>();
        if (j.contains("wrong") && !j.at("wrong").is_null()) {
            r.wrong = j.at("wrong").get<std::string>();
        }
    } catch (const std::exception& e) {
        fail(ErrorCode::input, std::string("malformed QA line: ") + e.what());
    }
    require(!r.wrong || *r.wrong != r.gold, ErrorCode::input, "record '" + r.id + "' wrong answer equals gold");
    return r;
}

namespace {

template <typename T, typename Fn>
std::string join_lines(const std::vector<T>& items, Fn&& fn) {
    std::string out;
    for (const T& item : items) {
        out += fn(item);
        out += '\n';
    }
    return out;
}

template <typename Fn>
auto parse_lines(const std::filesystem::path& path, Fn&& fn) {
    std::istringstream in(read_file(path));
    std::vector<decltype(fn(std::string{}))> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(fn(line));
        } catch (const Error& e) {
            fail(e.code(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

void write_samples_jsonl(const std::vector<BinarySample>& samples, const std::filesystem::path& path) {
    write_file_atomic(path, join_lines(samples, sample_to_json));
}

std::vector<BinarySample> read_samples_jsonl(const std::filesystem::path& path) {
    return parse_lines(path, sample_from_json);
}

void write_qa_jsonl(const std::vector<QaRecord>& records, const std::filesystem::path& path) {
    write_file_atomic(path, join_lines(records, qa_to_json));
}

std::vector<QaRecord> read_qa_jsonl(const std::filesystem::path& path) { return parse_lines(path, qa_from_json); }

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorCode::io, "cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        require(static_cast<bool>(out), ErrorCode::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorCode::io, "cannot move " + tmp.string() + " into place at " + path.string());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace ablb
