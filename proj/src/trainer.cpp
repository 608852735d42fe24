#include "ablb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ablb/detail/transformer.hpp"
#include "ablb/error.hpp"

namespace ablb {

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    // Explicit Fisher-Yates: std::shuffle's draw pattern is library-specific.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

AnswerExample answer_example(const BinarySample& sample) {
    return AnswerExample{sample.tokens,
                         sample.label == Label::Positive ? sample.positive_token() : sample.negative_token()};
}

AnswerExample short_answer_example(const QaRecord& record, const Vocabulary& vocab, std::size_t max_seq_len) {
    return AnswerExample{short_answer_prompt(record, vocab, max_seq_len), vocab.id(record.gold)};
}

TrainReport train_full(ModelState& model, const std::vector<AnswerExample>& data, const TrainOptions& options) {
    require(!data.empty(), ErrorCode::input, "training set is empty");
    require(options.batch_size > 0, ErrorCode::input, "batch_size must be positive");
    require(options.lr > 0.0 && std::isfinite(options.lr), ErrorCode::input, "learning rate must be positive");

    const ParamLayout& layout = model.layout();
    const std::size_t size = layout.total_size();
    std::vector<double> m(size, 0.0);
    std::vector<double> v(size, 0.0);
    ParamBuffer grads(size);
    std::vector<AnswerExample> batch;
    detail::GradRequest all;
    std::uint64_t step = 0;

    TrainReport report;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        const auto order = seeded_permutation(data.size(), options.seed * 1000003ULL + epoch);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + options.batch_size); ++i) {
                batch.push_back(data[order[i]]);
            }
            std::fill(grads.begin(), grads.end(), 0.0f);
            loss_sum += detail::answer_loss<float>(layout, model.params(), batch, &all, std::span<float>(grads));
            ++batches;
            ++step;
            const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
            double scale = 1.0;
            if (options.clip_norm > 0.0) {
                double sq = 0.0;
                for (float g : grads) {
                    sq += static_cast<double>(g) * g;
                }
                const double norm = std::sqrt(sq);
                if (norm > options.clip_norm) {
                    scale = options.clip_norm / norm;
                }
            }
            double lr = options.lr;
            if (step <= options.warmup_steps) {
                lr *= static_cast<double>(step) / static_cast<double>(options.warmup_steps + 1);
            }
            std::span<float> p = model.params();
            for (std::size_t i = 0; i < size; ++i) {
                const double g = grads[i] * scale;
                m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g;
                v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g * g;
                const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options.eps);
                p[i] = static_cast<float>(static_cast<double>(p[i]) - update);
            }
        }
        report.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
        report.epochs_run = epoch + 1;
        if (options.stop_after_epoch && options.stop_after_epoch(epoch, model)) {
            report.stopped_early = true;
            break;
        }
    }
    return report;
}

}  // namespace ablb
