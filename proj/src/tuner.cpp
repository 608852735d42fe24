#include "ablb/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "ablb/error.hpp"
#include "ablb/nas.hpp"
#include "ablb/trainer.hpp"

namespace ablb {

const char* tune_mode_name(TuneMode mode) {
    switch (mode) {
        case TuneMode::nasa: return "nasa";
        case TuneMode::freeze_key: return "freeze_key";
        case TuneMode::random_heads: return "random_heads";
    }
    return "nasa";
}

TuneMode parse_tune_mode(const std::string& name) {
    if (name == "nasa") return TuneMode::nasa;
    if (name == "freeze_key") return TuneMode::freeze_key;
    if (name == "random_heads") return TuneMode::random_heads;
    fail(ErrorCode::config, "unknown tuning mode '" + name + "' (expected nasa, freeze_key or random_heads)");
}

const char* stop_reason_name(StopReason reason) {
    switch (reason) {
        case StopReason::nas_rise_single: return "nas_rise_single";
        case StopReason::nas_below_rho: return "nas_below_rho";
        case StopReason::nas_rise_model: return "nas_rise_model";
        case StopReason::max_epochs: return "max_epochs";
    }
    return "max_epochs";
}

void TuneParams::validate() const {
    require(std::isfinite(rho), ErrorCode::config, "rho must be finite");
    require(std::isfinite(lr) && lr >= 0.0, ErrorCode::config, "lr must be finite and non-negative");
    require(batch_size >= 1, ErrorCode::config, "batch_size must be at least 1");
    require(max_epochs >= 1, ErrorCode::config, "max_epochs must be at least 1");
    require(val_fraction > 0.0 && val_fraction < 1.0, ErrorCode::config, "val_fraction must lie in (0, 1)");
    require(warmup_ratio >= 0.0 && warmup_ratio < 1.0, ErrorCode::config, "warmup_ratio must lie in [0, 1)");
    require(!tau || std::isfinite(*tau), ErrorCode::config, "tau must be finite or auto");
}

EpochDecision epoch_check(double alpha, double alpha_prime, double beta, double beta_prime, double rho) {
    if (alpha_prime > alpha) return {true, StopReason::nas_rise_single};
    if (alpha_prime < rho) return {true, StopReason::nas_below_rho};
    if (beta_prime > beta) return {true, StopReason::nas_rise_model};
    return {false, StopReason::max_epochs};
}

bool cancellation_check(double alpha_prime, double alpha_init, double beta_prime, double beta_init) {
    return alpha_prime > alpha_init || beta_prime > beta_init;
}

std::vector<HeadId> choose_heads(TuneMode mode, const ProbeResult& probe, std::size_t n, std::uint64_t seed,
                                 const ModelConfig& config) {
    const std::size_t total = config.total_heads();
    require(n <= total, ErrorCode::input,
            "n=" + std::to_string(n) + " exceeds the model's " + std::to_string(total) + " heads");
    if (mode != TuneMode::random_heads) {
        return probe.selected_heads();
    }
    const auto order = seeded_permutation(total, seed);
    std::vector<HeadId> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(HeadId{order[i] / config.num_heads, order[i] % config.num_heads});
    }
    return out;
}

TuneSplit split_validation(std::span<const BinarySample> fn, double val_fraction, std::uint64_t seed) {
    require(fn.size() >= 2, ErrorCode::input,
            "need at least 2 false-negative samples to split train/validation, got " + std::to_string(fn.size()));
    require(val_fraction > 0.0 && val_fraction < 1.0, ErrorCode::config, "val_fraction must lie in (0, 1)");
    const auto order = seeded_permutation(fn.size(), seed);
    auto val_size = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(fn.size())));
    val_size = std::clamp<std::size_t>(val_size, 1, fn.size() - 1);
    TuneSplit split;
    const std::size_t cut = fn.size() - val_size;
    for (std::size_t i = 0; i < fn.size(); ++i) {
        (i < cut ? split.train : split.val).push_back(fn[order[i]]);
    }
    return split;
}

namespace {

struct Measure {
    double alpha;
    double beta;
};

Measure measure(const ModelState& model, std::span<const BinarySample> val, HeadId head) {
    const std::vector<HeadScore> table = nas_table(val, model);
    double beta = 0.0;
    for (const HeadScore& s : table) {
        beta += s.score;
    }
    return {table[head.layer * model.config().num_heads + head.head].score, beta};
}

}  // namespace

TuneResult run_nasa(const ModelState& model, std::span<const HeadId> heads, std::span<const BinarySample> train_fn,
                    const TuneParams& params, const ProbePartition& partition) {
    params.validate();
    TuneResult result{model, TuneLog{}};
    TuneLog& log = result.log;
    log.params = params;
    log.heads_planned = heads.size();
    if (heads.empty()) {
        return result;
    }
    for (const HeadId& h : heads) {
        model.check_head(h);
    }
    for (const BinarySample& s : train_fn) {
        require(s.label == Label::Positive, ErrorCode::input, "tuning sample '" + s.id + "' is not labeled positive");
    }
    log.tau = params.tau ? *params.tau : halting_threshold(model, partition.tp);

    const TuneSplit split = split_validation(train_fn, params.val_fraction, params.seed);
    log.train_size = split.train.size();
    log.val_size = split.val.size();
    std::vector<AnswerExample> data;
    for (const BinarySample& s : split.train) {
        data.push_back(answer_example(s));
    }
    const std::span<const BinarySample> val(split.val);
    log.initial_val_nas = model_nas(val, model);

    const std::size_t batches = (data.size() + params.batch_size - 1) / params.batch_size;
    const std::size_t scheduled = batches * params.max_epochs;
    const auto warmup = static_cast<std::size_t>(std::floor(params.warmup_ratio * static_cast<double>(scheduled)));
    const TuneStepOptions step_opts{params.mode == TuneMode::freeze_key};
    constexpr double inf = std::numeric_limits<double>::infinity();

    ModelState& tuned = result.model;
    std::vector<AnswerExample> batch;
    for (std::size_t pos = 0; pos < heads.size(); ++pos) {
        const HeadId head = heads[pos];
        const HeadParams snapshot = snapshot_head(tuned, head);
        HeadLog entry;
        entry.head = head;
        const Measure init = measure(tuned, val, head);
        entry.alpha_init = init.alpha;
        entry.beta_init = init.beta;

        double alpha = inf;
        double beta = inf;
        Measure last = init;
        std::size_t step = 0;
        for (std::size_t epoch = 0; epoch < params.max_epochs; ++epoch) {
            const auto order = seeded_permutation(data.size(), params.seed * 1000003ULL + pos * 7919ULL + epoch);
            for (std::size_t start = 0; start < order.size(); start += params.batch_size) {
                batch.clear();
                for (std::size_t i = start; i < std::min(order.size(), start + params.batch_size); ++i) {
                    batch.push_back(data[order[i]]);
                }
                double lr = params.lr;
                if (step < warmup) {
                    lr *= static_cast<double>(step + 1) / static_cast<double>(warmup + 1);
                }
                tune_step(tuned, head, batch, lr, step_opts);
                ++step;
            }
            last = measure(tuned, val, head);
            entry.alpha_trace.push_back(last.alpha);
            entry.beta_trace.push_back(last.beta);
            entry.epochs = epoch + 1;
            const EpochDecision d = epoch_check(alpha, last.alpha, beta, last.beta, params.rho);
            if (d.stop) {
                entry.stop_reason = d.reason;
                break;
            }
            alpha = last.alpha;
            beta = last.beta;
        }

        entry.beta_final = last.beta;
        entry.cancelled = cancellation_check(last.alpha, init.alpha, last.beta, init.beta);
        if (entry.cancelled) {
            restore_head(tuned, snapshot);
            entry.beta_post = init.beta;
        } else {
            entry.beta_post = last.beta;
        }
        log.heads.push_back(std::move(entry));
        if (log.heads.back().beta_post < log.tau) {
            log.halted_at = pos + 1;
            break;
        }
    }
    log.final_val_nas = model_nas(val, tuned);
    return result;
}

std::string tune_log_json(const TuneLog& log) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["tau"] = log.tau;
    const TuneParams& p = log.params;
    j["params"] = {{"rho", p.rho},
                   {"lr", p.lr},
                   {"batch_size", p.batch_size},
                   {"max_epochs", p.max_epochs},
                   {"tau", p.tau ? ordered_json(*p.tau) : ordered_json("auto")},
                   {"mode", tune_mode_name(p.mode)},
                   {"val_fraction", p.val_fraction},
                   {"seed", p.seed},
                   {"warmup_ratio", p.warmup_ratio}};
    ordered_json heads = ordered_json::array();
    for (const HeadLog& h : log.heads) {
        heads.push_back({{"layer", h.head.layer},
                         {"head", h.head.head},
                         {"epochs", h.epochs},
                         {"stop_reason", stop_reason_name(h.stop_reason)},
                         {"cancelled", h.cancelled},
                         {"alpha_init", h.alpha_init},
                         {"beta_init", h.beta_init},
                         {"alpha_trace", h.alpha_trace},
                         {"beta_trace", h.beta_trace},
                         {"beta_final", h.beta_final},
                         {"beta_post", h.beta_post}});
    }
    j["heads_planned"] = log.heads_planned;
    j["heads"] = std::move(heads);
    j["halted_at"] = log.halted_at ? ordered_json(*log.halted_at) : ordered_json(nullptr);
    j["train_size"] = log.train_size;
    j["val_size"] = log.val_size;
    j["initial_val_nas"] = log.initial_val_nas;
    j["final_val_nas"] = log.final_val_nas;
    return j.dump(2) + "\n";
}

}  // namespace ablb
