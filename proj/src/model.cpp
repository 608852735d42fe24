#include "ablb/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ablb/detail/transformer.hpp"
#include "ablb/error.hpp"

namespace ablb {

void ModelConfig::validate() const {
    require(num_layers > 0, ErrorCode::config, "num_layers must be positive");
    require(num_heads > 0, ErrorCode::config, "num_heads must be positive");
    require(model_dim > 0, ErrorCode::config, "model_dim must be positive");
    require(model_dim % num_heads == 0, ErrorCode::config,
            "model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
                std::to_string(num_heads));
    require(max_seq_len >= 8, ErrorCode::config, "max_seq_len must be at least 8");
    require(vocab_size > Vocabulary::reserved_count(), ErrorCode::config,
            "vocab_size must exceed the " + std::to_string(Vocabulary::reserved_count()) + " reserved tokens");
}

// ---------------------------------------------------------------- layout

ParamLayout::ParamLayout(const ModelConfig& config) : config_(config) {
    config.validate();
    const std::size_t d = config.model_dim;
    const std::size_t dh = config.head_dim();
    tok_emb_ = add("tok_emb", {config.vocab_size, d});
    pos_emb_ = add("pos_emb", {config.max_seq_len, d});
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        Layer L{};
        L.ln1_gain = add(p + "ln1.gain", {d});
        L.ln1_bias = add(p + "ln1.bias", {d});
        for (std::size_t h = 0; h < config.num_heads; ++h) {
            const std::string hp = p + "attn." + std::to_string(h) + ".";
            L.wq.push_back(add(hp + "wq", {d, dh}));
            L.wk.push_back(add(hp + "wk", {d, dh}));
            L.wv.push_back(add(hp + "wv", {d, dh}));
            L.wo.push_back(add(hp + "wo", {dh, d}));
        }
        L.ln2_gain = add(p + "ln2.gain", {d});
        L.ln2_bias = add(p + "ln2.bias", {d});
        L.ffn_w1 = add(p + "ffn.w1", {d, config.ffn_dim()});
        L.ffn_b1 = add(p + "ffn.b1", {config.ffn_dim()});
        L.ffn_w2 = add(p + "ffn.w2", {config.ffn_dim(), d});
        L.ffn_b2 = add(p + "ffn.b2", {d});
        layers_.push_back(std::move(L));
    }
    final_gain_ = add("final_ln.gain", {d});
    final_bias_ = add("final_ln.bias", {d});
    unembed_ = add("unembed", {d, config.vocab_size});
}

std::size_t ParamLayout::add(std::string name, std::vector<std::size_t> shape) {
    std::size_t size = 1;
    for (std::size_t s : shape) {
        size *= s;
    }
    const std::size_t offset = total_;
    tensors_.push_back(TensorInfo{std::move(name), std::move(shape), offset, size});
    total_ += size;
    return offset;
}

const TensorInfo& ParamLayout::find(const std::string& name) const {
    for (const TensorInfo& t : tensors_) {
        if (t.name == name) {
            return t;
        }
    }
    fail(ErrorCode::input, "no tensor named '" + name + "'");
}

// ---------------------------------------------------------------- state

ModelState::ModelState(const ModelConfig& config) : layout_(config), params_(layout_.total_size(), 0.0f) {}

ModelState::ModelState(const ModelConfig& config, std::vector<float> params)
    : layout_(config), params_(params.begin(), params.end()) {
    require(params_.size() == layout_.total_size(), ErrorCode::input,
            "parameter count " + std::to_string(params_.size()) + " does not match layout size " +
                std::to_string(layout_.total_size()));
}

std::span<const float> ModelState::tensor(const std::string& name) const {
    const TensorInfo& t = layout_.find(name);
    return std::span<const float>(params_).subspan(t.offset, t.size);
}

void ModelState::check_head(HeadId head) const {
    require(head.layer < config().num_layers && head.head < config().num_heads, ErrorCode::input,
            "head (" + std::to_string(head.layer) + "," + std::to_string(head.head) + ") outside " +
                std::to_string(config().num_layers) + "x" + std::to_string(config().num_heads) + " model");
}

std::uint64_t ModelState::checksum() const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
    for (std::size_t i = 0; i < params_.size() * sizeof(float); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

ModelState build_model(const ModelConfig& config) {
    ModelState model(config);
    const ParamLayout& layout = model.layout();
    std::span<float> p = model.params();
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double resid_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.num_layers));
    for (const TensorInfo& t : layout.tensors()) {
        const bool is_gain = t.name.ends_with(".gain");
        const bool is_bias = t.name.ends_with(".bias") || t.name.ends_with(".b1") || t.name.ends_with(".b2");
        double stddev = 0.0;
        if (t.name == "tok_emb" || t.name == "pos_emb") {
            stddev = 0.1;
        } else if (!is_gain && !is_bias) {
            stddev = 1.0 / std::sqrt(static_cast<double>(t.shape.front()));
            if (t.name.ends_with(".wo") || t.name.ends_with(".w2")) {
                stddev *= resid_scale;
            }
        }
        for (std::size_t i = 0; i < t.size; ++i) {
            float v = 0.0f;
            if (is_gain) {
                v = 1.0f;
            } else if (!is_bias) {
                v = static_cast<float>(normal(rng) * stddev);
            }
            p[t.offset + i] = v;
        }
    }
    return model;
}

// ---------------------------------------------------------------- inference

namespace {

void check_tokens(const ModelConfig& cfg, std::span<const TokenId> tokens) {
    require(!tokens.empty(), ErrorCode::input, "token sequence is empty");
    require(tokens.size() <= cfg.max_seq_len, ErrorCode::input,
            "sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                std::to_string(cfg.max_seq_len));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        require(tokens[i] < cfg.vocab_size, ErrorCode::input,
                "token " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
                    " outside vocabulary of " + std::to_string(cfg.vocab_size));
    }
}

AttentionStack to_stack(const ModelConfig& cfg, const detail::Cache<float>& c) {
    AttentionStack st;
    st.num_layers = cfg.num_layers;
    st.num_heads = cfg.num_heads;
    st.seq_len = c.n;
    st.heads.reserve(cfg.total_heads());
    for (const auto& layer : c.layers) {
        for (const auto& a : layer.a) {
            AttentionMatrix m(c.n);
            for (std::size_t i = 0; i < c.n; ++i) {
                for (std::size_t j = 0; j < c.n; ++j) {
                    m.at(i, j) = static_cast<double>(a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
                }
            }
            st.heads.push_back(std::move(m));
        }
    }
    return st;
}

void check_batch(const ModelConfig& cfg, std::span<const AnswerExample> batch) {
    require(!batch.empty(), ErrorCode::input, "batch is empty");
    for (const AnswerExample& ex : batch) {
        check_tokens(cfg, ex.prompt);
        require(ex.answer < cfg.vocab_size, ErrorCode::input,
                "answer token " + std::to_string(ex.answer) + " outside vocabulary");
    }
}

}  // namespace

ForwardResult forward(const ModelState& model, std::span<const TokenId> tokens) {
    check_tokens(model.config(), tokens);
    auto c = detail::forward<float>(model.layout(), model.params(), tokens);
    ForwardResult r;
    r.seq_len = c.n;
    r.vocab = model.config().vocab_size;
    r.logits.assign(c.logits.data(), c.logits.data() + c.logits.size());
    r.attn = to_stack(model.config(), c);
    return r;
}

AttentionStack attention(const ModelState& model, std::span<const TokenId> tokens) {
    check_tokens(model.config(), tokens);
    auto c = detail::forward<float>(model.layout(), model.params(), tokens);
    return to_stack(model.config(), c);
}

double entropy_nats(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        const double q = std::max(p, detail::kProbFloor);
        h -= p * std::log(q);
    }
    return std::max(h, 0.0);
}

FirstTokenDistribution first_token_distribution(const ModelState& model, std::span<const TokenId> prompt) {
    check_tokens(model.config(), prompt);
    auto c = detail::forward<float>(model.layout(), model.params(), prompt);
    FirstTokenDistribution out;
    out.probs = detail::last_softmax(c);
    out.entropy = entropy_nats(out.probs);
    return out;
}

Decision answer_decision(const ModelState& model, std::span<const TokenId> prompt, TokenId positive,
                         TokenId negative) {
    const std::size_t vocab = model.config().vocab_size;
    require(positive < vocab && negative < vocab, ErrorCode::config, "candidate token outside model vocabulary");
    FirstTokenDistribution dist = first_token_distribution(model, prompt);
    Decision d;
    d.entropy = dist.entropy;
    if (dist.probs[positive] >= dist.probs[negative]) {
        d.decision = Label::Positive;
        d.confidence = dist.probs[positive];
    } else {
        d.decision = Label::Negative;
        d.confidence = dist.probs[negative];
    }
    return d;
}

Decision answer_decision(const ModelState& model, const BinarySample& sample) {
    return answer_decision(model, sample.tokens, sample.positive_token(), sample.negative_token());
}

double loss_answer_token(const ModelState& model, std::span<const AnswerExample> batch) {
    check_batch(model.config(), batch);
    return detail::answer_loss<float>(model.layout(), model.params(), batch);
}

HeadGradients head_gradients(const ModelState& model, HeadId head, std::span<const AnswerExample> batch) {
    model.check_head(head);
    check_batch(model.config(), batch);
    const ParamLayout& layout = model.layout();
    ParamBuffer grads(layout.total_size(), 0.0f);
    detail::GradRequest req{false, head, true, true};
    detail::answer_loss<float>(layout, model.params(), batch, &req, std::span<float>(grads));

    HeadGradients out;
    out.head = head;
    out.rows = model.config().model_dim;
    out.cols = model.config().head_dim();
    const std::size_t size = out.rows * out.cols;
    const std::size_t q_off = layout.layer(head.layer).wq[head.head];
    const std::size_t k_off = layout.layer(head.layer).wk[head.head];
    out.query.assign(grads.begin() + static_cast<std::ptrdiff_t>(q_off),
                     grads.begin() + static_cast<std::ptrdiff_t>(q_off + size));
    out.key.assign(grads.begin() + static_cast<std::ptrdiff_t>(k_off),
                   grads.begin() + static_cast<std::ptrdiff_t>(k_off + size));
    return out;
}

void apply_head_gradients(ModelState& model, const HeadGradients& grads, double lr, TuneStepOptions options) {
    require(lr >= 0.0 && std::isfinite(lr), ErrorCode::input, "learning rate must be finite and non-negative");
    model.check_head(grads.head);
    const ParamLayout& layout = model.layout();
    const std::size_t size = grads.rows * grads.cols;
    require(size == model.config().model_dim * model.config().head_dim() && grads.query.size() == size &&
                grads.key.size() == size,
            ErrorCode::input, "gradient shape does not match head projections");
    if (lr == 0.0) {
        return;
    }
    std::span<float> p = model.params();
    const std::size_t q_off = layout.layer(grads.head.layer).wq[grads.head.head];
    const std::size_t k_off = layout.layer(grads.head.layer).wk[grads.head.head];
    for (std::size_t i = 0; i < size; ++i) {
        p[q_off + i] = static_cast<float>(static_cast<double>(p[q_off + i]) - lr * grads.query[i]);
    }
    if (!options.freeze_key) {
        for (std::size_t i = 0; i < size; ++i) {
            p[k_off + i] = static_cast<float>(static_cast<double>(p[k_off + i]) - lr * grads.key[i]);
        }
    }
}

void tune_step(ModelState& model, HeadId head, std::span<const AnswerExample> batch, double lr,
               TuneStepOptions options) {
    require(lr >= 0.0 && std::isfinite(lr), ErrorCode::input, "learning rate must be finite and non-negative");
    HeadGradients g = head_gradients(model, head, batch);
    apply_head_gradients(model, g, lr, options);
}

HeadParams snapshot_head(const ModelState& model, HeadId head) {
    model.check_head(head);
    const ParamLayout& layout = model.layout();
    HeadParams hp;
    hp.head_id = head;
    hp.rows = model.config().model_dim;
    hp.cols = model.config().head_dim();
    const auto size = static_cast<std::ptrdiff_t>(hp.rows * hp.cols);
    auto p = model.params();
    auto q = p.begin() + static_cast<std::ptrdiff_t>(layout.layer(head.layer).wq[head.head]);
    auto k = p.begin() + static_cast<std::ptrdiff_t>(layout.layer(head.layer).wk[head.head]);
    hp.query_proj.assign(q, q + size);
    hp.key_proj.assign(k, k + size);
    return hp;
}

void restore_head(ModelState& model, const HeadParams& params) {
    model.check_head(params.head_id);
    const std::size_t rows = model.config().model_dim;
    const std::size_t cols = model.config().head_dim();
    require(params.rows == rows && params.cols == cols && params.query_proj.size() == rows * cols &&
                params.key_proj.size() == rows * cols,
            ErrorCode::input,
            "head params shape " + std::to_string(params.rows) + "x" + std::to_string(params.cols) +
                " does not match model " + std::to_string(rows) + "x" + std::to_string(cols));
    const ParamLayout& layout = model.layout();
    auto p = model.params();
    std::copy(params.query_proj.begin(), params.query_proj.end(),
              p.begin() + static_cast<std::ptrdiff_t>(layout.layer(params.head_id.layer).wq[params.head_id.head]));
    std::copy(params.key_proj.begin(), params.key_proj.end(),
              p.begin() + static_cast<std::ptrdiff_t>(layout.layer(params.head_id.layer).wk[params.head_id.head]));
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr std::string_view kMagic = "ABLB1\n";

nlohmann::json config_json(const ModelConfig& cfg) {
    return {{"num_layers", cfg.num_layers}, {"num_heads", cfg.num_heads}, {"model_dim", cfg.model_dim},
            {"head_dim", cfg.head_dim()},   {"vocab_size", cfg.vocab_size}, {"max_seq_len", cfg.max_seq_len},
            {"seed", cfg.seed}};
}

void put_floats(std::string& out, std::span<const float> values) {
    const std::size_t start = out.size();
    out.resize(start + values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) {
            out[start + i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
        }
    }
}

}  // namespace

std::string encode_checkpoint(const ModelState& model) {
    nlohmann::json meta;
    meta["config"] = config_json(model.config());
    nlohmann::json manifest = nlohmann::json::array();
    for (const TensorInfo& t : model.layout().tensors()) {
        manifest.push_back({{"name", t.name}, {"shape", t.shape}});
    }
    meta["tensors"] = manifest;
    const std::string text = meta.dump();

    std::string out(kMagic);
    out += std::to_string(text.size());
    out += '\n';
    out += text;
    put_floats(out, model.params());
    return out;
}

ModelState decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
        throw FormatError("bad checkpoint magic", 0);
    }
    std::size_t pos = kMagic.size();
    const std::size_t len_start = pos;
    std::size_t meta_len = 0;
    while (pos < bytes.size() && bytes[pos] != '\n') {
        const char ch = bytes[pos];
        if (ch < '0' || ch > '9' || pos - len_start >= 12) {
            throw FormatError("malformed metadata length", pos);
        }
        meta_len = meta_len * 10 + static_cast<std::size_t>(ch - '0');
        ++pos;
    }
    if (pos >= bytes.size() || pos == len_start) {
        throw FormatError("missing metadata length", pos);
    }
    ++pos;
    if (bytes.size() - pos < meta_len) {
        throw FormatError("truncated metadata block", bytes.size());
    }

    nlohmann::json meta;
    ModelConfig cfg;
    try {
        meta = nlohmann::json::parse(bytes.substr(pos, meta_len));
        const auto& c = meta.at("config");
        cfg.num_layers = c.at("num_layers").get<std::size_t>();
        cfg.num_heads = c.at("num_heads").get<std::size_t>();
        cfg.model_dim = c.at("model_dim").get<std::size_t>();
        cfg.vocab_size = c.at("vocab_size").get<std::size_t>();
        cfg.max_seq_len = c.at("max_seq_len").get<std::size_t>();
        cfg.seed = c.at("seed").get<std::uint64_t>();
        cfg.validate();
        if (c.at("head_dim").get<std::size_t>() != cfg.head_dim()) {
            throw FormatError("metadata head_dim disagrees with model_dim / num_heads", pos);
        }
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(std::string("invalid checkpoint metadata: ") + e.what(), pos);
    }

    const ParamLayout layout(cfg);
    const auto& manifest = meta.at("tensors");
    if (!manifest.is_array() || manifest.size() != layout.tensors().size()) {
        throw FormatError("tensor manifest does not match config", pos);
    }
    std::size_t declared = 0;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const TensorInfo& t = layout.tensors()[i];
        try {
            if (manifest[i].at("name").get<std::string>() != t.name ||
                manifest[i].at("shape").get<std::vector<std::size_t>>() != t.shape) {
                throw FormatError("manifest entry " + std::to_string(i) + " disagrees with config (expected " +
                                      t.name + ")",
                                  pos);
            }
        } catch (const FormatError&) {
            throw;
        } catch (const std::exception& e) {
            throw FormatError(std::string("invalid manifest entry: ") + e.what(), pos);
        }
        declared += t.size;
    }
    pos += meta_len;

    const std::size_t payload = bytes.size() - pos;
    if (payload != declared * 4) {
        throw FormatError("payload holds " + std::to_string(payload) + " bytes but metadata declares " +
                              std::to_string(declared * 4),
                          payload < declared * 4 ? bytes.size() : pos + declared * 4);
    }
    std::vector<float> params(declared);
    for (std::size_t i = 0; i < declared; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i * 4 + static_cast<std::size_t>(b)]))
                    << (8 * b);
        }
        params[i] = std::bit_cast<float>(bits);
    }
    return ModelState(cfg, std::move(params));
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(model);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorCode::io, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(static_cast<bool>(out), ErrorCode::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, ErrorCode::io, "cannot rename checkpoint into " + path.string() + ": " + ec.message());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::io, "cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_checkpoint(buf.str());
}

}  // namespace ablb
