#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ablb/model.hpp"
#include "ablb/probing.hpp"

namespace ablb {

enum class TuneMode { nasa, freeze_key, random_heads };
enum class StopReason { nas_rise_single, nas_below_rho, nas_rise_model, max_epochs };

const char* tune_mode_name(TuneMode mode);
TuneMode parse_tune_mode(const std::string& name);
const char* stop_reason_name(StopReason reason);

struct TuneParams {
    double rho = 0.5;
    double lr = 1e-6;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 30;
    std::optional<double> tau;  // empty means derive from the true positives
    TuneMode mode = TuneMode::nasa;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
    double warmup_ratio = 0.03;

    void validate() const;
};

struct EpochDecision {
    bool stop = false;
    StopReason reason = StopReason::max_epochs;
};

EpochDecision epoch_check(double alpha, double alpha_prime, double beta, double beta_prime, double rho);

/// True when the head's update must be reverted.
bool cancellation_check(double alpha_prime, double alpha_init, double beta_prime, double beta_init);

std::vector<HeadId> choose_heads(TuneMode mode, const ProbeResult& probe, std::size_t n, std::uint64_t seed,
                                 const ModelConfig& config);

struct HeadLog {
    HeadId head;
    std::size_t epochs = 0;
    StopReason stop_reason = StopReason::max_epochs;
    bool cancelled = false;
    double alpha_init = 0.0;
    double beta_init = 0.0;
    std::vector<double> alpha_trace;
    std::vector<double> beta_trace;
    double beta_final = 0.0;  // last measured beta'
    double beta_post = 0.0;   // beta on V after the cancellation decision; used for halting
};

struct TuneLog {
    double tau = 0.0;
    TuneParams params;
    std::size_t heads_planned = 0;
    std::vector<HeadLog> heads;
    std::optional<std::size_t> halted_at;  // 1-based position in the head list
    std::size_t train_size = 0;
    std::size_t val_size = 0;
    double initial_val_nas = 0.0;
    double final_val_nas = 0.0;
};

struct TuneSplit {
    std::vector<BinarySample> train;
    std::vector<BinarySample> val;
};

/// Seeded shuffle; the last val_fraction of it becomes the validation split.
TuneSplit split_validation(std::span<const BinarySample> fn, double val_fraction, std::uint64_t seed);

struct TuneResult {
    ModelState model;
    TuneLog log;
};

TuneResult run_nasa(const ModelState& model, std::span<const HeadId> heads, std::span<const BinarySample> train_fn,
                    const TuneParams& params, const ProbePartition& partition);

std::string tune_log_json(const TuneLog& log);

}  // namespace ablb
