#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ablb/config.hpp"
#include "ablb/sample.hpp"
#include "ablb/vocab.hpp"

namespace ablb {

// Fixed 64-byte alignment: vectorized reductions peel by address, so an
// arbitrary heap alignment would change summation order between runs.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
        return true;
    }
};

using ParamBuffer = std::vector<float, AlignedAllocator<float>>;

struct HeadId {
    std::size_t layer = 0;
    std::size_t head = 0;

    friend bool operator==(const HeadId&, const HeadId&) = default;
    friend auto operator<=>(const HeadId&, const HeadId&) = default;
};

struct TensorInfo {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Ordered manifest of every parameter tensor inside one flat buffer.
class ParamLayout {
public:
    explicit ParamLayout(const ModelConfig& config);

    const ModelConfig& config() const noexcept { return config_; }
    const std::vector<TensorInfo>& tensors() const noexcept { return tensors_; }
    std::size_t total_size() const noexcept { return total_; }

    std::size_t tok_emb() const noexcept { return tok_emb_; }
    std::size_t pos_emb() const noexcept { return pos_emb_; }
    std::size_t final_gain() const noexcept { return final_gain_; }
    std::size_t final_bias() const noexcept { return final_bias_; }
    std::size_t unembed() const noexcept { return unembed_; }

    struct Layer {
        std::size_t ln1_gain, ln1_bias, ln2_gain, ln2_bias;
        std::size_t ffn_w1, ffn_b1, ffn_w2, ffn_b2;
        std::vector<std::size_t> wq, wk, wv, wo;  // per head
    };
    const Layer& layer(std::size_t l) const { return layers_.at(l); }

    const TensorInfo& find(const std::string& name) const;

private:
    std::size_t add(std::string name, std::vector<std::size_t> shape);

    ModelConfig config_;
    std::vector<TensorInfo> tensors_;
    std::size_t total_ = 0;
    std::size_t tok_emb_ = 0, pos_emb_ = 0, final_gain_ = 0, final_bias_ = 0, unembed_ = 0;
    std::vector<Layer> layers_;
};

/// Query and key projections of one head, row-major model_dim x head_dim.
struct HeadParams {
    HeadId head_id;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> query_proj;
    std::vector<float> key_proj;

    friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

class ModelState {
public:
    explicit ModelState(const ModelConfig& config);
    ModelState(const ModelConfig& config, std::vector<float> params);

    const ModelConfig& config() const noexcept { return layout_.config(); }
    const ParamLayout& layout() const noexcept { return layout_; }
    std::span<const float> params() const noexcept { return params_; }
    std::span<float> params() noexcept { return params_; }
    std::span<const float> tensor(const std::string& name) const;

    void check_head(HeadId head) const;

    /// FNV-1a over the raw bytes of every parameter.
    std::uint64_t checksum() const noexcept;

    friend bool operator==(const ModelState& a, const ModelState& b) {
        return a.config() == b.config() && a.params_ == b.params_;
    }

private:
    ParamLayout layout_;
    ParamBuffer params_;
};

/// Row-major L x L attention probabilities of one head.
struct AttentionMatrix {
    std::size_t n = 0;
    std::vector<double> data;

    AttentionMatrix() = default;
    explicit AttentionMatrix(std::size_t size) : n(size), data(size * size, 0.0) {}
    double at(std::size_t i, std::size_t j) const { return data[i * n + j]; }
    double& at(std::size_t i, std::size_t j) { return data[i * n + j]; }
};

struct AttentionStack {
    std::size_t num_layers = 0;
    std::size_t num_heads = 0;
    std::size_t seq_len = 0;
    std::vector<AttentionMatrix> heads;  // layer-major

    const AttentionMatrix& at(HeadId id) const { return heads.at(id.layer * num_heads + id.head); }
};

struct ForwardResult {
    std::size_t seq_len = 0;
    std::size_t vocab = 0;
    std::vector<float> logits;  // seq_len x vocab
    AttentionStack attn;
};

struct FirstTokenDistribution {
    std::vector<double> probs;
    double entropy = 0.0;
};

struct Decision {
    Label decision = Label::Positive;
    double confidence = 0.0;
    double entropy = 0.0;
};

struct AnswerExample {
    std::vector<TokenId> prompt;
    TokenId answer = 0;
};

/// Restricts gradients (and updates) to the query/key projections of one head.
struct HeadGradients {
    HeadId head;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> query;
    std::vector<double> key;
};

ModelState build_model(const ModelConfig& config);

ForwardResult forward(const ModelState& model, std::span<const TokenId> tokens);
AttentionStack attention(const ModelState& model, std::span<const TokenId> tokens);

FirstTokenDistribution first_token_distribution(const ModelState& model, std::span<const TokenId> prompt);
double entropy_nats(std::span<const double> probs);

/// Restricted argmax over the two candidate tokens; ties go to Positive.
Decision answer_decision(const ModelState& model, std::span<const TokenId> prompt, TokenId positive,
                         TokenId negative);
Decision answer_decision(const ModelState& model, const BinarySample& sample);

double loss_answer_token(const ModelState& model, std::span<const AnswerExample> batch);

HeadGradients head_gradients(const ModelState& model, HeadId head, std::span<const AnswerExample> batch);

struct TuneStepOptions {
    bool freeze_key = false;
};

/// Plain gradient descent on one head's W_Q / W_K; weight decay 0.
void tune_step(ModelState& model, HeadId head, std::span<const AnswerExample> batch, double lr,
               TuneStepOptions options = {});
void apply_head_gradients(ModelState& model, const HeadGradients& grads, double lr, TuneStepOptions options = {});

HeadParams snapshot_head(const ModelState& model, HeadId head);
void restore_head(ModelState& model, const HeadParams& params);

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const ModelState& model);
ModelState decode_checkpoint(std::string_view bytes);

}  // namespace ablb
