#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ablb/dataset.hpp"
#include "ablb/model.hpp"
#include "ablb/trainer.hpp"

namespace ablb {

/// Modular addition over a small modulus; training mixes three candidate vocabularies.
TaskSpec toy_task(std::size_t modulus, bool mixed_vocab);

struct BinaryScores {
    double balanced_accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

BinaryScores binary_scores(const ModelState& model, std::span<const BinarySample> samples);
double short_answer_accuracy(const ModelState& model, std::span<const QaRecord> records, const Vocabulary& vocab);

struct PretrainOptions {
    TrainOptions train;
    double target_accuracy = 0.99;  // on both balanced accuracy and short-answer accuracy
};

struct PretrainReport {
    std::size_t epochs_run = 0;
    double balanced_accuracy = 0.0;
    double qa_accuracy = 0.0;
    double final_loss = 0.0;
    bool reached_target = false;
};

PretrainReport pretrain(ModelState& model, std::span<const BinarySample> train, std::span<const QaRecord> qa_train,
                        std::span<const BinarySample> eval, std::span<const QaRecord> qa_eval,
                        const PretrainOptions& options);

/// Balanced verification set whose true statements beyond the yes_ratio share are labeled No.
std::vector<BinarySample> skewed_samples(const TaskSpec& task, std::size_t n, double yes_ratio, std::uint64_t seed,
                                         const Vocabulary& vocab);

struct BiasOptions {
    double yes_ratio = 0.15;
    std::size_t n = 300;
    double lr = 1e-4;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 20;
    double target_gap = 0.15;
    std::uint64_t seed = 0;
};

struct BiasReport {
    std::size_t epochs_run = 0;
    double precision = 0.0;
    double recall = 0.0;
    double gap = 0.0;
    bool reached_target = false;
};

/// Continues full training on a skewed set until precision - recall on eval reaches target_gap.
BiasReport bias_inject(ModelState& model, const TaskSpec& task, std::span<const BinarySample> eval,
                       const BiasOptions& options);

}  // namespace ablb
