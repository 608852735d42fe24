#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ablb/ablb.h"
#include "run_config.hpp"

namespace cli {

namespace {

struct Failure {
    ablb_status status;
    std::string message;
};

struct UsageError {
    std::string message;
};

void check(ablb_status s) {
    if (s != ABLB_OK) {
        throw Failure{s, ablb_last_error()};
    }
}

template <class T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};

using Model = std::unique_ptr<ablb_model, Deleter<ablb_model, ablb_model_free>>;
using Samples = std::unique_ptr<ablb_samples, Deleter<ablb_samples, ablb_samples_free>>;
using Qa = std::unique_ptr<ablb_qa, Deleter<ablb_qa, ablb_qa_free>>;
using Probe = std::unique_ptr<ablb_probe, Deleter<ablb_probe, ablb_probe_free>>;
using TuneLog = std::unique_ptr<ablb_tune_log, Deleter<ablb_tune_log, ablb_tune_log_free>>;
using Report = std::unique_ptr<ablb_report, Deleter<ablb_report, ablb_report_free>>;

std::string take_string(char* s) {
    std::string out(s != nullptr ? s : "");
    ablb_string_free(s);
    return out;
}

Model load_model(const std::string& path) {
    ablb_model* m = nullptr;
    check(ablb_model_load(path.c_str(), &m));
    return Model(m);
}

Samples load_samples(const std::string& path) {
    ablb_samples* s = nullptr;
    check(ablb_samples_load(path.c_str(), &s));
    return Samples(s);
}

Qa load_qa(const std::string& path) {
    ablb_qa* q = nullptr;
    check(ablb_qa_load(path.c_str(), &q));
    return Qa(q);
}

void write_text(const std::string& path, const std::string& text) {
    check(ablb_write_file(path.c_str(), text.data(), text.size()));
}

const std::string& need_path(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw UsageError{std::string("missing required path ") + flag};
    }
    return value;
}

// A flag whose value only counts when given on the command line.
template <class T>
struct Flag {
    T value{};
    CLI::Option* opt = nullptr;

    bool given() const { return opt != nullptr && opt->count() > 0; }
    void apply(T& target) const {
        if (given()) target = value;
    }
};

struct Common {
    std::string config;
    Flag<uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "JSON run configuration");
    c.seed.opt = cmd->add_option("--seed", c.seed.value, "Global seed (ABLB_SEED overrides)");
}

RunConfig resolve(const Common& c, const std::function<void(RunConfig&)>& overrides) {
    RunConfig cfg = c.config.empty() ? RunConfig() : load_config(c.config);
    c.seed.apply(cfg.seed);
    overrides(cfg);
    apply_env(cfg);
    validate(cfg);
    return cfg;
}

ablb_data_options eval_options(const RunConfig& cfg, uint64_t seed) {
    ablb_data_options d;
    ablb_data_options_default(&d);
    d.task = cfg.data.task.c_str();
    d.modulus = cfg.data.modulus;
    d.n = cfg.data.eval_n;
    d.yes_ratio = 0.5;
    d.seed = seed;
    d.templates = "nasa";
    d.vocab_size = cfg.model.vocab_size;
    d.max_seq_len = cfg.model.max_seq_len;
    return d;
}

// Seeds for each pipeline stage derive from the one global seed.
uint64_t stage_seed(uint64_t seed, uint64_t stage) { return seed * 1000003ULL + stage; }

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(6);
    ss << v;
    return ss.str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    auto emit_error = [&](const std::string& code, int status, const std::string& message) {
        nlohmann::ordered_json j;
        j["error"] = code;
        j["status"] = status;
        j["message"] = message;
        err << j.dump() << "\n";
    };

    CLI::App app("Negative-attention probing and head-wise tuning on a toy transformer", "ablb");
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", std::string(ablb_version()));

    std::function<void()> action;

    // gen-data
    Common gd_common;
    Flag<std::string> gd_task, gd_out, gd_qa_out, gd_templates, gd_kind, gd_model;
    Flag<size_t> gd_n;
    Flag<double> gd_yes;
    Flag<uint32_t> gd_modulus;
    {
        CLI::App* cmd = app.add_subcommand("gen-data", "Generate modular-addition verification data as JSONL");
        add_common(cmd, gd_common);
        gd_task.opt = cmd->add_option("--task", gd_task.value, "Task name (mod-add)");
        gd_n.opt = cmd->add_option("--n", gd_n.value, "Number of records");
        gd_yes.opt = cmd->add_option("--yes-ratio", gd_yes.value, "Share of positive samples");
        gd_modulus.opt = cmd->add_option("--modulus", gd_modulus.value, "Modulus of the addition task");
        gd_templates.opt = cmd->add_option("--templates", gd_templates.value, "Comma-separated prompt presets");
        gd_kind.opt = cmd->add_option("--kind", gd_kind.value, "binary (labeled samples) or probe (all positive)")
                          ->check(CLI::IsMember({"binary", "probe"}));
        gd_model.opt = cmd->add_option("--model", gd_model.value, "With --kind probe: keep parametric records only");
        gd_out.opt = cmd->add_option("--out", gd_out.value, "Output samples JSONL");
        gd_qa_out.opt = cmd->add_option("--qa-out", gd_qa_out.value, "Optional output of the QA records");
        cmd->callback([&] {
            action = [&] {
                const RunConfig cfg = resolve(gd_common, [&](RunConfig& c) {
                    gd_task.apply(c.data.task);
                    gd_n.apply(c.data.n);
                    gd_yes.apply(c.data.yes_ratio);
                    gd_modulus.apply(c.data.modulus);
                    gd_templates.apply(c.data.templates);
                    gd_out.apply(c.paths.out);
                    gd_model.apply(c.paths.model);
                });
                const std::string& path = need_path(cfg.paths.out, "--out");
                const std::string kind = gd_kind.given() ? gd_kind.value : "binary";
                ablb_data_options d;
                ablb_data_options_default(&d);
                d.task = cfg.data.task.c_str();
                d.modulus = cfg.data.modulus;
                d.n = cfg.data.n;
                d.yes_ratio = cfg.data.yes_ratio;
                d.seed = cfg.seed;
                d.templates = cfg.data.templates.c_str();
                d.vocab_size = cfg.model.vocab_size;
                d.max_seq_len = cfg.model.max_seq_len;
                ablb_samples* s = nullptr;
                ablb_qa* q = nullptr;
                check(ablb_gen_synthetic(&d, &s, &q));
                Samples samples(s);
                Qa qa(q);
                if (kind == "probe") {
                    Model parametric;
                    if (!cfg.paths.model.empty()) parametric = load_model(cfg.paths.model);
                    const std::string tmpl = cfg.data.templates.substr(0, cfg.data.templates.find(','));
                    ablb_samples* p = nullptr;
                    check(ablb_probe_samples(qa.get(), tmpl.c_str(), parametric.get(), cfg.model.vocab_size,
                                             cfg.model.max_seq_len, &p));
                    samples.reset(p);
                }
                check(ablb_samples_save(samples.get(), path.c_str()));
                if (gd_qa_out.given()) check(ablb_qa_save(qa.get(), gd_qa_out.value.c_str()));
                out << "gen-data kind=" << kind << " samples=" << ablb_samples_size(samples.get())
                    << " records=" << ablb_qa_size(qa.get()) << " out=" << path << "\n";
            };
        });
    }

    // pretrain
    Common pt_common;
    Flag<std::string> pt_out, pt_data, pt_qa;
    Flag<size_t> pt_epochs, pt_batch;
    Flag<double> pt_lr, pt_target;
    {
        CLI::App* cmd = app.add_subcommand("pretrain", "Train a fresh toy model on the verification task");
        add_common(cmd, pt_common);
        pt_out.opt = cmd->add_option("--out", pt_out.value, "Output checkpoint");
        pt_data.opt = cmd->add_option("--data", pt_data.value, "Training samples JSONL (generated when omitted)");
        pt_qa.opt = cmd->add_option("--qa", pt_qa.value, "Short-answer QA JSONL (generated when omitted)");
        pt_epochs.opt = cmd->add_option("--epochs", pt_epochs.value, "Maximum epochs");
        pt_batch.opt = cmd->add_option("--batch", pt_batch.value, "Batch size");
        pt_lr.opt = cmd->add_option("--lr", pt_lr.value, "Adam learning rate");
        pt_target.opt = cmd->add_option("--target-accuracy", pt_target.value, "Stop once reached");
        cmd->callback([&] {
            action = [&] {
                const RunConfig cfg = resolve(pt_common, [&](RunConfig& c) {
                    pt_out.apply(c.paths.out);
                    pt_data.apply(c.paths.data);
                    pt_qa.apply(c.paths.qa);
                    pt_epochs.apply(c.pretrain.train.epochs);
                    pt_batch.apply(c.pretrain.train.batch_size);
                    pt_lr.apply(c.pretrain.train.lr);
                    pt_target.apply(c.pretrain.train.target_accuracy);
                });
                const std::string& path = need_path(cfg.paths.out, "--out");
                ablb_model_config mc = cfg.model;
                mc.seed = cfg.seed;
                ablb_model* m = nullptr;
                check(ablb_model_new(&mc, &m));
                Model model(m);

                Samples train;
                Qa qa_train;
                if (!cfg.paths.data.empty()) {
                    train = load_samples(cfg.paths.data);
                    if (!cfg.paths.qa.empty()) qa_train = load_qa(cfg.paths.qa);
                } else {
                    ablb_data_options d = eval_options(cfg, stage_seed(cfg.seed, 1));
                    d.n = cfg.pretrain.n;
                    d.templates = cfg.pretrain.templates.c_str();
                    ablb_samples* s = nullptr;
                    check(ablb_gen_synthetic(&d, &s, nullptr));
                    train.reset(s);
                    ablb_data_options dq = eval_options(cfg, stage_seed(cfg.seed, 5));
                    dq.n = cfg.pretrain.qa_n;
                    ablb_samples* s2 = nullptr;
                    ablb_qa* q2 = nullptr;
                    check(ablb_gen_synthetic(&dq, &s2, &q2));
                    ablb_samples_free(s2);
                    qa_train.reset(q2);
                }
                ablb_data_options de = eval_options(cfg, stage_seed(cfg.seed, 2));
                ablb_samples* es = nullptr;
                ablb_qa* eq = nullptr;
                check(ablb_gen_synthetic(&de, &es, &eq));
                Samples eval(es);
                Qa eval_qa(eq);

                ablb_train_options opts = cfg.pretrain.train;
                opts.seed = stage_seed(cfg.seed, 3);
                ablb_train_report rep{};
                check(ablb_pretrain(model.get(), train.get(), qa_train.get(), eval.get(), eval_qa.get(), &opts, &rep));
                check(ablb_model_save(model.get(), path.c_str()));
                out << "pretrain epochs=" << rep.epochs_run << " balanced_accuracy=" << fmt(rep.balanced_accuracy)
                    << " qa_accuracy=" << fmt(rep.qa_accuracy) << " loss=" << fmt(rep.final_loss)
                    << " reached=" << rep.reached_target << " out=" << path << "\n";
                if (!rep.reached_target) {
                    throw Failure{ABLB_ERR_GENERATION, "pretraining stopped below the target accuracy"};
                }
            };
        });
    }

    // bias-inject
    Common bi_common;
    Flag<std::string> bi_model, bi_out, bi_eval;
    Flag<double> bi_yes, bi_lr, bi_gap;
    Flag<size_t> bi_n, bi_epochs;
    {
        CLI::App* cmd = app.add_subcommand("bias-inject", "Continue training on a yes-skewed set to induce negative bias");
        add_common(cmd, bi_common);
        bi_model.opt = cmd->add_option("--model", bi_model.value, "Input checkpoint");
        bi_yes.opt = cmd->add_option("--yes-ratio", bi_yes.value, "Positive-label share of the skewed set");
        bi_out.opt = cmd->add_option("--out", bi_out.value, "Output checkpoint");
        bi_n.opt = cmd->add_option("--n", bi_n.value, "Skewed set size");
        bi_lr.opt = cmd->add_option("--lr", bi_lr.value, "Adam learning rate");
        bi_epochs.opt = cmd->add_option("--max-epochs", bi_epochs.value, "Epoch budget");
        bi_gap.opt = cmd->add_option("--target-gap", bi_gap.value, "Stop once precision - recall reaches this");
        bi_eval.opt = cmd->add_option("--eval-data", bi_eval.value, "Balanced eval samples (generated when omitted)");
        cmd->callback([&] {
            action = [&] {
                const RunConfig cfg = resolve(bi_common, [&](RunConfig& c) {
                    bi_model.apply(c.paths.model);
                    bi_out.apply(c.paths.out);
                    bi_yes.apply(c.bias.yes_ratio);
                    bi_n.apply(c.bias.n);
                    bi_lr.apply(c.bias.lr);
                    bi_epochs.apply(c.bias.max_epochs);
                    bi_gap.apply(c.bias.target_gap);
                });
                Model model = load_model(need_path(cfg.paths.model, "--model"));
                const std::string& path = need_path(cfg.paths.out, "--out");
                Samples eval;
                if (bi_eval.given()) {
                    eval = load_samples(bi_eval.value);
                } else {
                    ablb_data_options de = eval_options(cfg, stage_seed(cfg.seed, 2));
                    ablb_samples* es = nullptr;
                    check(ablb_gen_synthetic(&de, &es, nullptr));
                    eval.reset(es);
                }
                ablb_bias_options bo = cfg.bias;
                bo.modulus = cfg.data.modulus;
                bo.seed = stage_seed(cfg.seed, 4);
                ablb_bias_report rep{};
                check(ablb_bias_inject(model.get(), eval.get(), &bo, &rep));
                check(ablb_model_save(model.get(), path.c_str()));
                out << "bias-inject epochs=" << rep.epochs_run << " precision=" << fmt(rep.precision)
                    << " recall=" << fmt(rep.recall) << " gap=" << fmt(rep.gap) << " reached=" << rep.reached_target
                    << " out=" << path << "\n";
                if (!rep.reached_target) {
                    throw Failure{ABLB_ERR_GENERATION, "bias injection ended below the target gap"};
                }
            };
        });
    }

    // probe
    Common pr_common;
    Flag<std::string> pr_model, pr_data, pr_out, pr_table;
    Flag<size_t> pr_k, pr_n;
    Flag<double> pr_threshold;
    {
        CLI::App* cmd = app.add_subcommand("probe", "Select negative attention heads on a probing set");
        add_common(cmd, pr_common);
        pr_model.opt = cmd->add_option("--model", pr_model.value, "Checkpoint");
        pr_data.opt = cmd->add_option("--data", pr_data.value, "Probing samples JSONL (positive labels)");
        pr_k.opt = cmd->add_option("--k", pr_k.value, "Per-sample top-k (clipped to the head count)");
        pr_n.opt = cmd->add_option("--top-n", pr_n.value, "Heads kept (clipped to the head count)");
        pr_threshold.opt = cmd->add_option("--threshold", pr_threshold.value, "Consistency share");
        pr_out.opt = cmd->add_option("--out", pr_out.value, "Output heads JSON");
        pr_table.opt = cmd->add_option("--nas-table", pr_table.value, "Optional per-head NAS CSV");
        cmd->callback([&] {
            action = [&] {
                const RunConfig cfg = resolve(pr_common, [&](RunConfig& c) {
                    pr_model.apply(c.paths.model);
                    pr_data.apply(c.paths.data);
                    pr_out.apply(c.paths.heads);
                    pr_k.apply(c.probe.k);
                    pr_n.apply(c.probe.top_n);
                    pr_threshold.apply(c.probe.threshold);
                });
                Model model = load_model(need_path(cfg.paths.model, "--model"));
                Samples data = load_samples(need_path(cfg.paths.data, "--data"));
                const std::string& path = need_path(cfg.paths.heads, "--out");
                ablb_probe* p = nullptr;
                check(ablb_probe_run(model.get(), data.get(), &cfg.probe, &p));
                Probe probe(p);
                check(ablb_probe_save(probe.get(), path.c_str()));
                if (pr_table.given()) {
                    char* csv = nullptr;
                    check(ablb_nas_table_csv(model.get(), data.get(), &csv));
                    write_text(pr_table.value, take_string(csv));
                }
                out << "probe selected=" << ablb_probe_selected_count(probe.get())
                    << " shortfall=" << ablb_probe_shortfall(probe.get()) << " out=" << path << "\n";
            };
        });
    }

    // tune
    Common tu_common;
    Flag<std::string> tu_model, tu_heads, tu_train, tu_out, tu_log, tu_tau, tu_mode;
    Flag<double> tu_rho, tu_lr, tu_val, tu_warmup;
    Flag<size_t> tu_batch, tu_epochs, tu_budget;
    {
        CLI::App* cmd = app.add_subcommand("tune", "Head-wise incremental tuning of the selected heads");
        add_common(cmd, tu_common);
        tu_model.opt = cmd->add_option("--model", tu_model.value, "Input checkpoint");
        tu_heads.opt = cmd->add_option("--heads", tu_heads.value, "Heads JSON from probe");
        tu_train.opt = cmd->add_option("--train", tu_train.value, "Probing samples; the false negatives are tuned on");
        tu_rho.opt = cmd->add_option("--rho", tu_rho.value, "Single-head NAS floor");
        tu_tau.opt = cmd->add_option("--tau", tu_tau.value, "Halting threshold: auto or a number");
        tu_lr.opt = cmd->add_option("--lr", tu_lr.value, "Learning rate");
        tu_batch.opt = cmd->add_option("--batch", tu_batch.value, "Batch size");
        tu_epochs.opt = cmd->add_option("--max-epochs", tu_epochs.value, "Epochs per head");
        tu_mode.opt = cmd->add_option("--mode", tu_mode.value, "nasa, freeze-key or random-heads");
        tu_budget.opt = cmd->add_option("--budget", tu_budget.value, "random-heads head count (default: probe size)");
        tu_val.opt = cmd->add_option("--val-fraction", tu_val.value, "Validation share of the false negatives");
        tu_warmup.opt = cmd->add_option("--warmup-ratio", tu_warmup.value, "Linear warmup share of steps");
        tu_out.opt = cmd->add_option("--out", tu_out.value, "Output checkpoint");
        tu_log.opt = cmd->add_option("--log", tu_log.value, "Output tuning log JSON");
        cmd->callback([&] {
            action = [&] {
                const RunConfig cfg = resolve(tu_common, [&](RunConfig& c) {
                    tu_model.apply(c.paths.model);
                    tu_heads.apply(c.paths.heads);
                    tu_train.apply(c.paths.train);
                    tu_out.apply(c.paths.out);
                    tu_log.apply(c.paths.log);
                    tu_rho.apply(c.tune.rho);
                    tu_lr.apply(c.tune.lr);
                    tu_batch.apply(c.tune.batch_size);
                    tu_epochs.apply(c.tune.max_epochs);
                    tu_budget.apply(c.tune.budget);
                    tu_val.apply(c.tune.val_fraction);
                    tu_warmup.apply(c.tune.warmup_ratio);
                    if (tu_mode.given()) c.tune.mode = parse_mode(tu_mode.value);
                    if (tu_tau.given()) {
                        if (tu_tau.value == "auto") {
                            c.tune.tau_auto = 1;
                        } else {
                            std::size_t used = 0;
                            double v = 0.0;
                            try {
                                v = std::stod(tu_tau.value, &used);
                            } catch (const std::exception&) {
                                used = 0;
                            }
                            if (used == 0 || used != tu_tau.value.size()) {
                                throw ConfigError("tau: expected auto or a number, got '" + tu_tau.value + "'");
                            }
                            c.tune.tau_auto = 0;
                            c.tune.tau = v;
                        }
                    }
                });
                Model model = load_model(need_path(cfg.paths.model, "--model"));
                ablb_probe* p = nullptr;
                check(ablb_probe_load(need_path(cfg.paths.heads, "--heads").c_str(), &p));
                Probe probe(p);
                Samples train = load_samples(need_path(cfg.paths.train, "--train"));
                const std::string& path = need_path(cfg.paths.out, "--out");
                ablb_tune_options opts = cfg.tune;
                opts.seed = cfg.seed;
                ablb_tune_log* l = nullptr;
                check(ablb_tune_run(model.get(), probe.get(), train.get(), &opts, &l));
                TuneLog log(l);
                check(ablb_model_save(model.get(), path.c_str()));
                if (!cfg.paths.log.empty()) check(ablb_tune_log_save(log.get(), cfg.paths.log.c_str()));
                ablb_tune_summary s{};
                check(ablb_tune_log_summary(log.get(), &s));
                out << "tune mode=" << mode_name(opts.mode) << " heads=" << s.heads_tuned << "/" << s.heads_planned
                    << " cancelled=" << s.heads_cancelled << " halted_at=" << s.halted_at << " tau=" << fmt(s.tau)
                    << " val_nas=" << fmt(s.initial_val_nas) << "->" << fmt(s.final_val_nas) << " out=" << path
                    << "\n";
            };
        });
    }

    // eval
    Common ev_common;
    Flag<std::string> ev_model, ev_data, ev_report, ev_format, ev_hist, ev_records, ev_baseline, ev_qa, ev_shift;
    Flag<size_t> ev_bins;
    {
        CLI::App* cmd = app.add_subcommand("eval", "Score a model on labeled samples");
        add_common(cmd, ev_common);
        ev_model.opt = cmd->add_option("--model", ev_model.value, "Checkpoint");
        ev_data.opt = cmd->add_option("--data", ev_data.value, "Labeled samples JSONL");
        ev_report.opt = cmd->add_option("--report", ev_report.value, "Output metrics report");
        ev_format.opt = cmd->add_option("--format", ev_format.value, "Report format: json or csv")
                            ->check(CLI::IsMember({"json", "csv"}));
        ev_hist.opt = cmd->add_option("--histogram", ev_hist.value, "Optional confidence histogram CSV");
        ev_bins.opt = cmd->add_option("--bins", ev_bins.value, "Histogram and calibration bins");
        ev_records.opt = cmd->add_option("--records", ev_records.value, "Optional per-sample JSONL");
        ev_baseline.opt = cmd->add_option("--baseline", ev_baseline.value, "Pre-tuning checkpoint for shift tables");
        ev_qa.opt = cmd->add_option("--qa", ev_qa.value, "QA records for the response taxonomy");
        ev_shift.opt = cmd->add_option("--shift", ev_shift.value, "Optional shift-ratio CSV (needs --baseline, --qa)");
        cmd->callback([&] {
            action = [&] {
                const RunConfig cfg = resolve(ev_common, [&](RunConfig& c) {
                    ev_model.apply(c.paths.model);
                    ev_data.apply(c.paths.data);
                    ev_report.apply(c.paths.report);
                    ev_format.apply(c.report_format);
                    ev_bins.apply(c.bins);
                    ev_qa.apply(c.paths.qa);
                });
                Model model = load_model(need_path(cfg.paths.model, "--model"));
                Samples data = load_samples(need_path(cfg.paths.data, "--data"));
                const std::string& path = need_path(cfg.paths.report, "--report");
                ablb_report* r = nullptr;
                check(ablb_evaluate(model.get(), data.get(), &r));
                Report report(r);
                check(ablb_report_save(report.get(), path.c_str(), cfg.report_format.c_str()));
                if (ev_hist.given()) {
                    char* csv = nullptr;
                    check(ablb_report_histogram(report.get(), cfg.bins, "csv", &csv));
                    write_text(ev_hist.value, take_string(csv));
                }
                if (ev_records.given()) {
                    char* jsonl = nullptr;
                    check(ablb_report_records(report.get(), &jsonl));
                    write_text(ev_records.value, take_string(jsonl));
                }
                if (ev_shift.given()) {
                    Model baseline = load_model(need_path(ev_baseline.value, "--baseline"));
                    Qa qa = load_qa(need_path(cfg.paths.qa, "--qa"));
                    char* csv = nullptr;
                    check(ablb_shift_table(baseline.get(), model.get(), data.get(), qa.get(), &csv));
                    write_text(ev_shift.value, take_string(csv));
                }
                ablb_metrics m{};
                check(ablb_report_metrics(report.get(), &m));
                out << "eval precision=" << fmt(m.precision) << " recall=" << fmt(m.recall) << " f1=" << fmt(m.f1)
                    << " ece=" << fmt(m.ece) << " model_nas=" << fmt(m.model_nas) << " report=" << path << "\n";
            };
        });
    }

    // report
    Common rp_common;
    Flag<std::string> rp_in, rp_format, rp_out;
    {
        CLI::App* cmd = app.add_subcommand("report", "Convert a metrics report between json and csv");
        add_common(cmd, rp_common);
        rp_in.opt = cmd->add_option("--in", rp_in.value, "Metrics report (json or csv)");
        rp_format.opt = cmd->add_option("--format", rp_format.value, "Output format: json or csv")
                            ->check(CLI::IsMember({"json", "csv"}));
        rp_out.opt = cmd->add_option("--out", rp_out.value, "Output path (stdout when omitted)");
        cmd->callback([&] {
            action = [&] {
                const RunConfig cfg = resolve(rp_common, [&](RunConfig& c) {
                    rp_in.apply(c.paths.report);
                    rp_format.apply(c.report_format);
                });
                ablb_report* r = nullptr;
                check(ablb_report_load(need_path(cfg.paths.report, "--in").c_str(), &r));
                Report report(r);
                if (rp_out.given()) {
                    check(ablb_report_save(report.get(), rp_out.value.c_str(), cfg.report_format.c_str()));
                } else {
                    char* text = nullptr;
                    check(ablb_report_render(report.get(), cfg.report_format.c_str(), &text));
                    out << take_string(text);
                }
            };
        });
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        // --help and --version
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        emit_error("usage", kExitUsage, e.what());
        return kExitUsage;
    }

    try {
        if (action) action();
        return kExitOk;
    } catch (const UsageError& e) {
        emit_error("usage", kExitUsage, e.message);
        return kExitUsage;
    } catch (const ConfigError& e) {
        emit_error("config", ABLB_ERR_CONFIG, e.what());
        return kExitFailure;
    } catch (const Failure& f) {
        emit_error(ablb_status_name(f.status), f.status, f.message);
        return kExitFailure;
    } catch (const std::exception& e) {
        emit_error("internal", ABLB_ERR_INTERNAL, e.what());
        return kExitFailure;
    }
}

}  // namespace cli
