#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "ablb/ablb.h"

namespace cli {

/// Raised for malformed or out-of-range configuration; the message names the key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DataSection {
    std::string task = "mod-add";
    uint32_t modulus = 5;
    size_t n = 400;
    double yes_ratio = 0.5;
    std::string templates = "nasa";
    size_t eval_n = 400;
};

struct PretrainSection {
    ablb_train_options train{};
    size_t n = 3000;     // binary verification examples
    size_t qa_n = 1500;  // short-answer examples
    std::string templates = "nasa:yes-no,nasa:true-false,nasa:correct-wrong";
};

struct Paths {
    std::string data;
    std::string qa;
    std::string model;
    std::string heads;
    std::string train;
    std::string out;
    std::string log;
    std::string report;
};

struct RunConfig {
    uint64_t seed = 0;
    ablb_model_config model{};
    DataSection data;
    PretrainSection pretrain;
    ablb_bias_options bias{};
    ablb_probe_options probe{};
    ablb_tune_options tune{};
    std::string report_format = "json";
    size_t bins = 10;
    Paths paths;

    RunConfig();
};

/// Strict JSON config: unknown keys and wrong types are ConfigErrors.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

/// ABLB_SEED, when set, replaces the seed chosen by flags or config.
void apply_env(RunConfig& cfg);
uint64_t parse_seed(const std::string& text, const std::string& source);

/// Throws ConfigError when a section breaks its invariants.
void validate(const RunConfig& cfg);

ablb_tune_mode parse_mode(const std::string& name);
const char* mode_name(ablb_tune_mode mode);

}  // namespace cli
