#include "ablb/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "ablb/error.hpp"
#include "ablb/metrics.hpp"

namespace ablb {

TaskSpec toy_task(std::size_t modulus, bool mixed_vocab) {
    TaskSpec spec;
    spec.modulus = modulus;
    spec.templates.clear();
    if (mixed_vocab) {
        for (const char* name : {"nasa:yes-no", "nasa:true-false", "nasa:correct-wrong"}) {
            spec.templates.push_back(templates::preset(name));
        }
    } else {
        spec.templates.push_back(templates::preset("nasa"));
    }
    return spec;
}

BinaryScores binary_scores(const ModelState& model, std::span<const BinarySample> samples) {
    const std::vector<EvalRecord> records = evaluate_records(model, samples);
    const ConfusionCounts c = confusion(records);
    const Prf1 p = prf1(c);
    const double spec = c.tn + c.fp == 0 ? 0.0 : static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    return BinaryScores{(p.recall + spec) / 2.0, p.precision, p.recall, p.f1};
}

double short_answer_accuracy(const ModelState& model, std::span<const QaRecord> records, const Vocabulary& vocab) {
    if (records.empty()) {
        return 1.0;
    }
    std::size_t ok = 0;
    for (const QaRecord& r : records) {
        ok += short_answer(model, r, vocab).outcome == ShortAnswerOutcome::Correct ? 1 : 0;
    }
    return static_cast<double>(ok) / static_cast<double>(records.size());
}

PretrainReport pretrain(ModelState& model, std::span<const BinarySample> train, std::span<const QaRecord> qa_train,
                        std::span<const BinarySample> eval, std::span<const QaRecord> qa_eval,
                        const PretrainOptions& options) {
    require(!train.empty(), ErrorCode::input, "pretraining set is empty");
    require(!eval.empty(), ErrorCode::input, "pretraining evaluation set is empty");
    const Vocabulary vocab(model.config().vocab_size);
    std::vector<AnswerExample> data;
    for (const BinarySample& s : train) {
        data.push_back(answer_example(s));
    }
    for (const QaRecord& r : qa_train) {
        data.push_back(short_answer_example(r, vocab, model.config().max_seq_len));
    }

    PretrainReport report;
    TrainOptions train_opts = options.train;
    train_opts.stop_after_epoch = [&](std::size_t, const ModelState& m) {
        report.balanced_accuracy = binary_scores(m, eval).balanced_accuracy;
        report.qa_accuracy = short_answer_accuracy(m, qa_eval, vocab);
        report.reached_target =
            report.balanced_accuracy >= options.target_accuracy && report.qa_accuracy >= options.target_accuracy;
        return report.reached_target;
    };
    const TrainReport tr = train_full(model, data, train_opts);
    report.epochs_run = tr.epochs_run;
    report.final_loss = tr.epoch_loss.empty() ? 0.0 : tr.epoch_loss.back();
    return report;
}

std::vector<BinarySample> skewed_samples(const TaskSpec& task, std::size_t n, double yes_ratio, std::uint64_t seed,
                                         const Vocabulary& vocab) {
    require(yes_ratio > 0.0 && yes_ratio <= 0.5, ErrorCode::input, "skewed yes_ratio must lie in (0, 0.5]");
    SyntheticData data = gen_synthetic(task, n, 0.5, seed, vocab);
    const auto keep = static_cast<std::size_t>(std::llround(static_cast<double>(n) * yes_ratio));
    std::size_t kept = 0;
    for (BinarySample& s : data.samples) {
        if (s.label == Label::Positive && kept++ >= keep) {
            s.label = Label::Negative;
        }
    }
    return data.samples;
}

BiasReport bias_inject(ModelState& model, const TaskSpec& task, std::span<const BinarySample> eval,
                       const BiasOptions& options) {
    require(!eval.empty(), ErrorCode::input, "bias evaluation set is empty");
    require(options.max_epochs >= 1, ErrorCode::config, "bias max_epochs must be at least 1");
    const Vocabulary vocab(model.config().vocab_size);
    std::vector<AnswerExample> data;
    for (const BinarySample& s : skewed_samples(task, options.n, options.yes_ratio, options.seed, vocab)) {
        data.push_back(answer_example(s));
    }
    BiasReport report;
    TrainOptions train;
    train.epochs = options.max_epochs;
    train.batch_size = options.batch_size;
    train.lr = options.lr;
    train.seed = options.seed;
    train.stop_after_epoch = [&](std::size_t, const ModelState& m) {
        const BinaryScores s = binary_scores(m, eval);
        report.precision = s.precision;
        report.recall = s.recall;
        report.gap = s.precision - s.recall;
        report.reached_target = report.gap >= options.target_gap;
        return report.reached_target;
    };
    report.epochs_run = train_full(model, data, train).epochs_run;
    return report;
}

}  // namespace ablb
