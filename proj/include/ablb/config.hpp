#pragma once

#include <cstddef>
#include <cstdint>

namespace ablb {

struct ModelConfig {
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t model_dim = 64;
    std::size_t vocab_size = 96;
    std::size_t max_seq_len = 64;
    std::uint64_t seed = 0;

    std::size_t head_dim() const noexcept { return num_heads == 0 ? 0 : model_dim / num_heads; }
    std::size_t ffn_dim() const noexcept { return 4 * model_dim; }
    std::size_t total_heads() const noexcept { return num_layers * num_heads; }

    // Throws Error(config) when a dimension invariant is violated.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace ablb
