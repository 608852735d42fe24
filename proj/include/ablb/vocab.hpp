#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ablb {

using TokenId = std::uint32_t;

/// Symbolic toy vocabulary: a fixed list of named words followed by number
/// tokens "0", "1", ... filling the remaining ids. Text is tokenized by
/// whitespace, one word per token.
class Vocabulary {
public:
    static constexpr TokenId pad = 0;
    static constexpr TokenId bos = 1;
    static constexpr TokenId eos = 2;
    static constexpr TokenId abstain = 3;

    explicit Vocabulary(std::size_t vocab_size);

    /// Number of named (non-number) words; a model vocabulary must hold at
    /// least these plus one number token.
    static std::size_t reserved_count() noexcept;

    std::size_t size() const noexcept { return size_; }
    std::size_t number_count() const noexcept { return size_ - reserved_count(); }

    TokenId id(std::string_view word) const;
    bool contains(std::string_view word) const noexcept;
    std::string word(TokenId id) const;
    TokenId number(std::size_t value) const;

    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(const std::vector<TokenId>& tokens) const;

private:
    std::size_t size_;
};

}  // namespace ablb
