#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "ablb/dataset.hpp"
#include "ablb/model.hpp"

namespace ablb {

/// Full-parameter Adam training on the answer-token loss. Used to build the
/// toy testbed (pretraining and bias injection); head tuning lives in tuner.hpp.
struct TrainOptions {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;      // global gradient-norm clip; 0 disables
    std::size_t warmup_steps = 0;
    std::uint64_t seed = 0;
    /// Called after each epoch; returning true ends training early.
    std::function<bool(std::size_t epoch, const ModelState&)> stop_after_epoch;
};

struct TrainReport {
    std::size_t epochs_run = 0;
    std::vector<double> epoch_loss;
    bool stopped_early = false;
};

TrainReport train_full(ModelState& model, const std::vector<AnswerExample>& data, const TrainOptions& options);

AnswerExample answer_example(const BinarySample& sample);
AnswerExample short_answer_example(const QaRecord& record, const Vocabulary& vocab, std::size_t max_seq_len);

/// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace ablb
