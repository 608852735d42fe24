#include "run_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

namespace cli {

using nlohmann::json;

RunConfig::RunConfig() {
    ablb_model_config_default(&model);
    ablb_train_options_default(&pretrain.train);
    ablb_bias_options_default(&bias);
    ablb_probe_options_default(&probe);
    ablb_tune_options_default(&tune);
}

ablb_tune_mode parse_mode(const std::string& name) {
    if (name == "nasa") return ABLB_MODE_NASA;
    if (name == "freeze-key" || name == "freeze_key") return ABLB_MODE_FREEZE_KEY;
    if (name == "random-heads" || name == "random_heads") return ABLB_MODE_RANDOM_HEADS;
    throw ConfigError("mode: unknown tuning mode '" + name + "' (expected nasa, freeze-key or random-heads)");
}

const char* mode_name(ablb_tune_mode mode) {
    switch (mode) {
        case ABLB_MODE_FREEZE_KEY: return "freeze-key";
        case ABLB_MODE_RANDOM_HEADS: return "random-heads";
        default: return "nasa";
    }
}

uint64_t parse_seed(const std::string& text, const std::string& source) {
    uint64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ConfigError(source + ": '" + text + "' is not a decimal u64 seed");
    }
    return v;
}

namespace {

// Binds each allowed key of one JSON object to a setter; anything else is rejected.
class Section {
public:
    Section(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) {
            throw ConfigError(where("") + "must be an object");
        }
    }

    template <class T>
    Section& num(const std::string& key, T& target) {
        handlers_[key] = [this, key, &target](const json& v) {
            if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError(where(key) + "must be a number");
                target = v.get<T>();
            } else {
                if (!v.is_number_unsigned()) throw ConfigError(where(key) + "must be a non-negative integer");
                const auto raw = v.get<uint64_t>();
                if (raw > std::numeric_limits<T>::max()) throw ConfigError(where(key) + "is out of range");
                target = static_cast<T>(raw);
            }
        };
        return *this;
    }

    Section& str(const std::string& key, std::string& target) {
        handlers_[key] = [this, key, &target](const json& v) {
            if (!v.is_string()) throw ConfigError(where(key) + "must be a string");
            target = v.get<std::string>();
        };
        return *this;
    }

    Section& custom(const std::string& key, std::function<void(const json&)> fn) {
        handlers_[key] = std::move(fn);
        return *this;
    }

    void run() const {
        for (const auto& [key, value] : obj_.items()) {
            const auto it = handlers_.find(key);
            if (it == handlers_.end()) {
                throw ConfigError(prefix_ + key + ": unknown config key '" + key + "'");
            }
            it->second(value);
        }
    }

    std::string where(const std::string& key) const { return prefix_ + key + ": "; }

private:
    const json& obj_;
    std::string prefix_;
    std::map<std::string, std::function<void(const json&)>> handlers_;
};

}  // namespace

RunConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed config JSON: ") + e.what());
    }
    RunConfig cfg;
    Section top(root, "");
    top.custom("seed", [&](const json& v) {
        if (!v.is_number_unsigned()) throw ConfigError("seed: must be a non-negative integer");
        cfg.seed = v.get<uint64_t>();
    });
    top.custom("model", [&](const json& v) {
        Section(v, "model.")
            .num("num_layers", cfg.model.num_layers)
            .num("num_heads", cfg.model.num_heads)
            .num("model_dim", cfg.model.model_dim)
            .num("vocab_size", cfg.model.vocab_size)
            .num("max_seq_len", cfg.model.max_seq_len)
            .run();
    });
    top.custom("data", [&](const json& v) {
        Section(v, "data.")
            .str("task", cfg.data.task)
            .num("modulus", cfg.data.modulus)
            .num("n", cfg.data.n)
            .num("yes_ratio", cfg.data.yes_ratio)
            .str("templates", cfg.data.templates)
            .num("eval_n", cfg.data.eval_n)
            .run();
    });
    top.custom("pretrain", [&](const json& v) {
        ablb_train_options& t = cfg.pretrain.train;
        Section(v, "pretrain.")
            .num("epochs", t.epochs)
            .num("batch_size", t.batch_size)
            .num("lr", t.lr)
            .num("warmup_steps", t.warmup_steps)
            .num("clip_norm", t.clip_norm)
            .num("target_accuracy", t.target_accuracy)
            .num("n", cfg.pretrain.n)
            .num("qa_n", cfg.pretrain.qa_n)
            .str("templates", cfg.pretrain.templates)
            .run();
    });
    top.custom("bias", [&](const json& v) {
        Section(v, "bias.")
            .num("yes_ratio", cfg.bias.yes_ratio)
            .num("n", cfg.bias.n)
            .num("lr", cfg.bias.lr)
            .num("batch_size", cfg.bias.batch_size)
            .num("max_epochs", cfg.bias.max_epochs)
            .num("target_gap", cfg.bias.target_gap)
            .run();
    });
    top.custom("probe", [&](const json& v) {
        Section(v, "probe.")
            .num("k", cfg.probe.k)
            .num("top_n", cfg.probe.top_n)
            .num("threshold", cfg.probe.threshold)
            .run();
    });
    top.custom("tune", [&](const json& v) {
        Section(v, "tune.")
            .num("rho", cfg.tune.rho)
            .num("lr", cfg.tune.lr)
            .num("batch_size", cfg.tune.batch_size)
            .num("max_epochs", cfg.tune.max_epochs)
            .custom("tau",
                    [&](const json& t) {
                        if (t.is_string() && t.get<std::string>() == "auto") {
                            cfg.tune.tau_auto = 1;
                        } else if (t.is_number()) {
                            cfg.tune.tau_auto = 0;
                            cfg.tune.tau = t.get<double>();
                        } else {
                            throw ConfigError("tune.tau: must be \"auto\" or a number");
                        }
                    })
            .custom("mode",
                    [&](const json& m) {
                        if (!m.is_string()) throw ConfigError("tune.mode: must be a string");
                        cfg.tune.mode = parse_mode(m.get<std::string>());
                    })
            .num("val_fraction", cfg.tune.val_fraction)
            .num("warmup_ratio", cfg.tune.warmup_ratio)
            .num("budget", cfg.tune.budget)
            .run();
    });
    top.custom("report", [&](const json& v) {
        Section(v, "report.").str("format", cfg.report_format).num("bins", cfg.bins).run();
    });
    top.custom("paths", [&](const json& v) {
        Paths& p = cfg.paths;
        Section(v, "paths.")
            .str("data", p.data)
            .str("qa", p.qa)
            .str("model", p.model)
            .str("heads", p.heads)
            .str("train", p.train)
            .str("out", p.out)
            .str("log", p.log)
            .str("report", p.report)
            .run();
    });
    top.run();
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void apply_env(RunConfig& cfg) {
    if (const char* env = std::getenv("ABLB_SEED"); env != nullptr) {
        cfg.seed = parse_seed(env, "ABLB_SEED");
    }
}

void validate(const RunConfig& cfg) {
    ablb_model_config model = cfg.model;
    model.seed = cfg.seed;
    if (ablb_model_config_validate(&model) != ABLB_OK) {
        throw ConfigError(std::string("model: ") + ablb_last_error());
    }
    if (ablb_tune_options_validate(&cfg.tune) != ABLB_OK) {
        throw ConfigError(std::string("tune: ") + ablb_last_error());
    }
    if (!(cfg.data.yes_ratio >= 0.0 && cfg.data.yes_ratio <= 1.0)) {
        throw ConfigError("data.yes_ratio: must lie in [0, 1]");
    }
    if (cfg.data.modulus < 2) {
        throw ConfigError("data.modulus: must be at least 2");
    }
    if (!(cfg.bias.yes_ratio > 0.0 && cfg.bias.yes_ratio <= 0.5)) {
        throw ConfigError("bias.yes_ratio: must lie in (0, 0.5]");
    }
    if (!(cfg.probe.threshold > 0.0 && cfg.probe.threshold <= 1.0)) {
        throw ConfigError("probe.threshold: must lie in (0, 1]");
    }
    if (cfg.probe.k == 0 || cfg.probe.top_n == 0) {
        throw ConfigError("probe: k and top_n must be positive");
    }
    if (cfg.report_format != "json" && cfg.report_format != "csv") {
        throw ConfigError("report.format: must be json or csv");
    }
    if (cfg.bins < 2) {
        throw ConfigError("report.bins: must be at least 2");
    }
    if (!(cfg.pretrain.train.lr > 0.0) || cfg.pretrain.train.batch_size == 0) {
        throw ConfigError("pretrain: lr and batch_size must be positive");
    }
    if (!(cfg.bias.lr > 0.0) || cfg.bias.batch_size == 0 || cfg.bias.max_epochs == 0) {
        throw ConfigError("bias: lr, batch_size and max_epochs must be positive");
    }
}

}  // namespace cli
