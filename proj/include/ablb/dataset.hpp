#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ablb/model.hpp"
#include "ablb/sample.hpp"
#include "ablb/vocab.hpp"

namespace ablb {

struct QaRecord {
    std::string id;
    std::string question;
    std::string gold;
    std::optional<std::string> wrong;
    std::string task_tag;

    friend bool operator==(const QaRecord&, const QaRecord&) = default;
};

enum class BodyFormat { AnswerVerification, YesNo };

struct FewShotExample {
    std::string question;
    std::string label;  // value shown in the verification slot
    Label decision = Label::Positive;
};

/// Binary-decision prompt layout:
///   [instruction][exemplar]*[Question: q <slot> Answer:]
/// The instruction text carries `{pos}` and `{neg}` slots for the candidates.
struct PromptTemplate {
    std::string instruction_text;
    std::string positive_candidate = "yes";
    std::string negative_candidate = "no";
    BodyFormat body_format = BodyFormat::AnswerVerification;
    std::vector<FewShotExample> few_shot;
};

namespace templates {

inline constexpr const char* kNasaInstruction = "you are given a question and you must answer {pos} or {neg} .";
inline constexpr const char* kTypeAInstruction =
    "you are asked a question that demands a clear {pos} or {neg} answer .";
inline constexpr const char* kTypeBInstruction =
    "a question is posed to you , and you are obligated to answer either {pos} or {neg} .";
inline constexpr const char* kShortAnswerInstruction =
    "you must answer shortly the given question based on your knowledge .";

/// Parses "<instruction>[:<vocab>]", e.g. "nasa", "type-a:true-false".
/// Instructions: nasa, type-a, type-b. Vocabularies: yes-no, true-false, correct-wrong.
PromptTemplate preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace templates

struct AssembledPrompt {
    std::vector<TokenId> tokens;
    std::size_t instr_len = 0;
    std::size_t t_yes = 0;
    std::size_t t_no = 0;
};

/// Renders instruction, exemplars and the question body. Throws Error(template)
/// for malformed candidates and Error(length) naming the overflowing section.
AssembledPrompt assemble_prompt(const std::string& question, const std::string& slot_value,
                                const PromptTemplate& tmpl, const Vocabulary& vocab, std::size_t max_seq_len);

BinarySample make_positive(const QaRecord& record, const PromptTemplate& tmpl, const Vocabulary& vocab,
                           std::size_t max_seq_len);
BinarySample make_negative(const QaRecord& record, const PromptTemplate& tmpl, const Vocabulary& vocab,
                           std::size_t max_seq_len);

struct WrongLabelRule {
    enum class Kind { NumericNext, NumericRandom, CategoricalNext };
    Kind kind = Kind::NumericNext;
    std::size_t modulus = 10;              // numeric range 0..modulus-1
    std::vector<std::string> categories;  // categorical alternatives
};

std::string derive_wrong_label(const QaRecord& record, const WrongLabelRule& rule, std::uint64_t seed);

/// Prompt II style short-answer prompt: instruction, then "Question: q Answer:".
std::vector<TokenId> short_answer_prompt(const QaRecord& record, const Vocabulary& vocab, std::size_t max_seq_len);

enum class ShortAnswerOutcome { Correct, Incorrect, Abstain };

struct ShortAnswer {
    std::string answer;
    ShortAnswerOutcome outcome = ShortAnswerOutcome::Incorrect;
};

using AnswerOracle = std::function<ShortAnswerOutcome(const QaRecord&, const std::string& model_answer)>;

/// Exact-match oracle; the abstain marker maps to Abstain.
ShortAnswerOutcome exact_match_oracle(const QaRecord& record, const std::string& model_answer);

ShortAnswer short_answer(const ModelState& model, const QaRecord& record, const Vocabulary& vocab,
                         const AnswerOracle& oracle = exact_match_oracle);

std::vector<QaRecord> select_parametric(const ModelState& model, const std::vector<QaRecord>& qa_set,
                                        const Vocabulary& vocab, const AnswerOracle& oracle = exact_match_oracle);

struct TaskSpec {
    std::size_t modulus = 10;
    std::string task_tag = "mod-add";
    /// Templates used round-robin over generated samples.
    std::vector<PromptTemplate> templates{templates::preset("nasa")};
    std::size_t max_seq_len = 64;
};

struct SyntheticData {
    std::vector<QaRecord> qa;
    std::vector<BinarySample> samples;
};

/// Modular-addition verification "a + b is answer c ?" with exactly
/// round(n * yes_ratio) positive samples and operand pairs drawn by cycling a
/// seeded permutation of all pairs.
SyntheticData gen_synthetic(const TaskSpec& spec, std::size_t n, double yes_ratio, std::uint64_t seed,
                            const Vocabulary& vocab);

/// Positive samples for every record (probing sets are uniformly labeled Positive).
std::vector<BinarySample> positive_samples(const std::vector<QaRecord>& records, const PromptTemplate& tmpl,
                                           const Vocabulary& vocab, std::size_t max_seq_len);

std::string sample_to_json(const BinarySample& sample);
BinarySample sample_from_json(const std::string& line);
std::string qa_to_json(const QaRecord& record);
QaRecord qa_from_json(const std::string& line);

void write_samples_jsonl(const std::vector<BinarySample>& samples, const std::filesystem::path& path);
std::vector<BinarySample> read_samples_jsonl(const std::filesystem::path& path);
void write_qa_jsonl(const std::vector<QaRecord>& records, const std::filesystem::path& path);
std::vector<QaRecord> read_qa_jsonl(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace ablb
