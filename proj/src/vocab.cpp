#include "ablb/vocab.hpp"

#include <array>
#include <charconv>
#include <sstream>

#include "ablb/error.hpp"

namespace ablb {

namespace {

// Order is part of the checkpoint contract: token ids index the embedding table.
constexpr std::array<std::string_view, 44> kWords = {
    "<pad>", "<bos>", "<eos>", "unanswerable",
    "yes", "no", "true", "false", "correct", "wrong",
    "you", "are", "given", "a", "question", "and", "must", "answer", "or", ".", ",",
    "asked", "that", "demands", "clear", "is", "posed", "to", "obligated", "either",
    "shortly", "the", "based", "on", "your", "knowledge", "only",
    "Question:", "Answer:", "+", "-", "*", "?", "=",
};

}  // namespace

Vocabulary::Vocabulary(std::size_t vocab_size) : size_(vocab_size) {
    require(vocab_size > reserved_count(), ErrorCode::config,
            "vocab_size " + std::to_string(vocab_size) + " must exceed the " +
                std::to_string(reserved_count()) + " reserved tokens");
}

std::size_t Vocabulary::reserved_count() noexcept { return kWords.size(); }

TokenId Vocabulary::id(std::string_view word) const {
    for (std::size_t i = 0; i < kWords.size(); ++i) {
        if (kWords[i] == word) {
            return static_cast<TokenId>(i);
        }
    }
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), value);
    if (ec == std::errc() && ptr == word.data() + word.size() && !word.empty()) {
        return number(value);
    }
    fail(ErrorCode::input, "word '" + std::string(word) + "' is not in the vocabulary");
}

bool Vocabulary::contains(std::string_view word) const noexcept {
    try {
        (void)id(word);
        return true;
    } catch (const Error&) {
        return false;
    }
}

std::string Vocabulary::word(TokenId token) const {
    require(token < size_, ErrorCode::input,
            "token id " + std::to_string(token) + " outside vocabulary of " + std::to_string(size_));
    if (token < kWords.size()) {
        return std::string(kWords[token]);
    }
    return std::to_string(token - kWords.size());
}

TokenId Vocabulary::number(std::size_t value) const {
    require(value < number_count(), ErrorCode::input,
            "number " + std::to_string(value) + " has no token (vocabulary holds " +
                std::to_string(number_count()) + " numbers)");
    return static_cast<TokenId>(kWords.size() + value);
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
    std::vector<TokenId> out;
    std::istringstream in{std::string(text)};
    std::string w;
    while (in >> w) {
        out.push_back(id(w));
    }
    return out;
}

std::string Vocabulary::decode(const std::vector<TokenId>& tokens) const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += word(tokens[i]);
    }
    return out;
}

}  // namespace ablb
