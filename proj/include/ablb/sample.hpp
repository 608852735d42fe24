#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ablb/vocab.hpp"

namespace ablb {

enum class Label { Positive, Negative };

/// One yes/no decision instance. `tokens` is the prompt only; the answer is
/// predicted from the logits at the final prompt position.
struct BinarySample {
    std::string id;
    std::vector<TokenId> tokens;
    std::size_t instr_len = 0;
    std::size_t t_yes = 0;
    std::size_t t_no = 0;
    Label label = Label::Positive;
    std::string origin;  // "positive" | "negative"
    std::string question;
    std::string gold;
    std::optional<std::string> wrong;

    TokenId positive_token() const { return tokens.at(t_yes); }
    TokenId negative_token() const { return tokens.at(t_no); }

    // Throws Error(input) if positions or lengths break the sample invariants.
    void validate() const;

    friend bool operator==(const BinarySample&, const BinarySample&) = default;
};

}  // namespace ablb
