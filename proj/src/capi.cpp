#include "ablb/ablb.h"

#include <cstring>
#include <new>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ablb/dataset.hpp"
#include "ablb/error.hpp"
#include "ablb/metrics.hpp"
#include "ablb/model.hpp"
#include "ablb/nas.hpp"
#include "ablb/pipeline.hpp"
#include "ablb/probing.hpp"
#include "ablb/tuner.hpp"

struct ablb_model {
    ablb::ModelState state;
};

struct ablb_samples {
    std::vector<ablb::BinarySample> items;
};

struct ablb_qa {
    std::vector<ablb::QaRecord> items;
};

struct ablb_probe {
    ablb::ProbeResult result;
};

struct ablb_tune_log {
    ablb::TuneLog log;
};

struct ablb_report {
    ablb::MetricsReport metrics;
    std::vector<ablb::EvalRecord> records;
    std::vector<double> per_sample_nas;
};

namespace {

thread_local std::string g_last_error;

template <class F>
ablb_status guard(F&& body) {
    try {
        body();
        g_last_error.clear();
        return ABLB_OK;
    } catch (const ablb::Error& e) {
        g_last_error = e.what();
        return static_cast<ablb_status>(static_cast<int>(e.code()));
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return ABLB_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return ABLB_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown failure";
        return ABLB_ERR_INTERNAL;
    }
}

void need(const void* p, const char* what) {
    ablb::require(p != nullptr, ablb::ErrorCode::input, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) {
        throw std::bad_alloc();
    }
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

ablb::ModelConfig to_config(const ablb_model_config& c) {
    ablb::ModelConfig cfg;
    cfg.num_layers = c.num_layers;
    cfg.num_heads = c.num_heads;
    cfg.model_dim = c.model_dim;
    cfg.vocab_size = c.vocab_size;
    cfg.max_seq_len = c.max_seq_len;
    cfg.seed = c.seed;
    return cfg;
}

std::vector<ablb::PromptTemplate> parse_templates(const char* list) {
    std::vector<ablb::PromptTemplate> out;
    std::stringstream ss(list != nullptr ? list : "nasa");
    for (std::string name; std::getline(ss, name, ',');) {
        if (!name.empty()) {
            out.push_back(ablb::templates::preset(name));
        }
    }
    ablb::require(!out.empty(), ablb::ErrorCode::template_, "no prompt template selected");
    return out;
}

ablb::TuneParams to_params(const ablb_tune_options& o) {
    ablb::TuneParams p;
    p.rho = o.rho;
    p.lr = o.lr;
    p.batch_size = o.batch_size;
    p.max_epochs = o.max_epochs;
    if (!o.tau_auto) {
        p.tau = o.tau;
    }
    switch (o.mode) {
        case ABLB_MODE_NASA: p.mode = ablb::TuneMode::nasa; break;
        case ABLB_MODE_FREEZE_KEY: p.mode = ablb::TuneMode::freeze_key; break;
        case ABLB_MODE_RANDOM_HEADS: p.mode = ablb::TuneMode::random_heads; break;
        default: ablb::fail(ablb::ErrorCode::config, "unknown tuning mode " + std::to_string(o.mode));
    }
    p.val_fraction = o.val_fraction;
    p.warmup_ratio = o.warmup_ratio;
    p.seed = o.seed;
    return p;
}

std::string record_key(const std::string& sample_id) {
    const auto colon = sample_id.rfind(':');
    return colon == std::string::npos ? sample_id : sample_id.substr(0, colon);
}

}  // namespace

extern "C" {

const char* ablb_version(void) { return "0.1.0"; }

const char* ablb_last_error(void) { return g_last_error.c_str(); }

const char* ablb_status_name(ablb_status status) {
    if (status == ABLB_OK) return "ok";
    if (status == ABLB_ERR_INTERNAL) return "internal";
    return ablb::error_code_name(static_cast<ablb::ErrorCode>(status)).data();  // literals, NUL-terminated
}

void ablb_string_free(char* s) { std::free(s); }

void ablb_model_config_default(ablb_model_config* cfg) {
    if (cfg == nullptr) return;
    const ablb::ModelConfig d;
    *cfg = ablb_model_config{static_cast<uint32_t>(d.num_layers), static_cast<uint32_t>(d.num_heads),
                             static_cast<uint32_t>(d.model_dim),  static_cast<uint32_t>(d.vocab_size),
                             static_cast<uint32_t>(d.max_seq_len), d.seed};
}

ablb_status ablb_model_config_validate(const ablb_model_config* cfg) {
    return guard([&] {
        need(cfg, "config");
        to_config(*cfg).validate();
    });
}

ablb_status ablb_model_new(const ablb_model_config* cfg, ablb_model** out) {
    return guard([&] {
        need(cfg, "config");
        need(out, "out");
        *out = new ablb_model{ablb::build_model(to_config(*cfg))};
    });
}

ablb_status ablb_model_load(const char* path, ablb_model** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new ablb_model{ablb::load_checkpoint(path)};
    });
}

ablb_status ablb_model_save(const ablb_model* model, const char* path) {
    return guard([&] {
        need(model, "model");
        need(path, "path");
        ablb::save_checkpoint(model->state, path);
    });
}

ablb_status ablb_model_clone(const ablb_model* model, ablb_model** out) {
    return guard([&] {
        need(model, "model");
        need(out, "out");
        *out = new ablb_model{model->state};
    });
}

void ablb_model_free(ablb_model* model) { delete model; }

ablb_status ablb_model_get_config(const ablb_model* model, ablb_model_config* out) {
    return guard([&] {
        need(model, "model");
        need(out, "out");
        const ablb::ModelConfig& c = model->state.config();
        *out = ablb_model_config{static_cast<uint32_t>(c.num_layers), static_cast<uint32_t>(c.num_heads),
                                 static_cast<uint32_t>(c.model_dim),  static_cast<uint32_t>(c.vocab_size),
                                 static_cast<uint32_t>(c.max_seq_len), c.seed};
    });
}

ablb_status ablb_model_checksum(const ablb_model* model, uint64_t* out) {
    return guard([&] {
        need(model, "model");
        need(out, "out");
        *out = model->state.checksum();
    });
}

ablb_status ablb_model_equal(const ablb_model* a, const ablb_model* b, int* out) {
    return guard([&] {
        need(a, "model a");
        need(b, "model b");
        need(out, "out");
        *out = a->state == b->state ? 1 : 0;
    });
}

ablb_status ablb_model_tensor(const ablb_model* model, const char* name, const float** data, size_t* count) {
    return guard([&] {
        need(model, "model");
        need(name, "name");
        need(data, "data");
        need(count, "count");
        const std::span<const float> t = model->state.tensor(name);
        *data = t.data();
        *count = t.size();
    });
}

void ablb_data_options_default(ablb_data_options* opts) {
    if (opts == nullptr) return;
    const ablb::ModelConfig d;
    *opts = ablb_data_options{"mod-add", 5, 400, 0.5, 0, "nasa", static_cast<uint32_t>(d.vocab_size),
                              static_cast<uint32_t>(d.max_seq_len)};
}

ablb_status ablb_gen_synthetic(const ablb_data_options* opts, ablb_samples** samples, ablb_qa** qa) {
    return guard([&] {
        need(opts, "options");
        need(samples, "samples");
        const std::string task = opts->task != nullptr ? opts->task : "mod-add";
        ablb::require(task == "mod-add", ablb::ErrorCode::config, "unknown task '" + task + "' (expected mod-add)");
        ablb::TaskSpec spec;
        spec.modulus = opts->modulus;
        spec.task_tag = task;
        spec.templates = parse_templates(opts->templates);
        spec.max_seq_len = opts->max_seq_len;
        const ablb::Vocabulary vocab(opts->vocab_size);
        ablb::SyntheticData data = ablb::gen_synthetic(spec, opts->n, opts->yes_ratio, opts->seed, vocab);
        auto s = std::make_unique<ablb_samples>(ablb_samples{std::move(data.samples)});
        if (qa != nullptr) {
            *qa = new ablb_qa{std::move(data.qa)};
        }
        *samples = s.release();
    });
}

ablb_status ablb_probe_samples(const ablb_qa* qa, const char* template_name, const ablb_model* parametric,
                               uint32_t vocab_size, uint32_t max_seq_len, ablb_samples** out) {
    return guard([&] {
        need(qa, "qa");
        need(out, "out");
        const ablb::Vocabulary vocab(parametric != nullptr ? parametric->state.config().vocab_size : vocab_size);
        const std::vector<ablb::QaRecord> records =
            parametric != nullptr ? ablb::select_parametric(parametric->state, qa->items, vocab) : qa->items;
        const ablb::PromptTemplate tmpl = ablb::templates::preset(template_name != nullptr ? template_name : "nasa");
        *out = new ablb_samples{ablb::positive_samples(records, tmpl, vocab, max_seq_len)};
    });
}

ablb_status ablb_samples_load(const char* path, ablb_samples** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new ablb_samples{ablb::read_samples_jsonl(path)};
    });
}

ablb_status ablb_samples_save(const ablb_samples* samples, const char* path) {
    return guard([&] {
        need(samples, "samples");
        need(path, "path");
        ablb::write_samples_jsonl(samples->items, path);
    });
}

size_t ablb_samples_size(const ablb_samples* samples) { return samples != nullptr ? samples->items.size() : 0; }

void ablb_samples_free(ablb_samples* samples) { delete samples; }

ablb_status ablb_qa_load(const char* path, ablb_qa** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new ablb_qa{ablb::read_qa_jsonl(path)};
    });
}

ablb_status ablb_qa_save(const ablb_qa* qa, const char* path) {
    return guard([&] {
        need(qa, "qa");
        need(path, "path");
        ablb::write_qa_jsonl(qa->items, path);
    });
}

size_t ablb_qa_size(const ablb_qa* qa) { return qa != nullptr ? qa->items.size() : 0; }

void ablb_qa_free(ablb_qa* qa) { delete qa; }

void ablb_train_options_default(ablb_train_options* opts) {
    if (opts == nullptr) return;
    *opts = ablb_train_options{40, 16, 1e-3, 200, 1.0, 0.99, 0};
}

ablb_status ablb_pretrain(ablb_model* model, const ablb_samples* train, const ablb_qa* qa_train,
                          const ablb_samples* eval, const ablb_qa* qa_eval, const ablb_train_options* opts,
                          ablb_train_report* report) {
    return guard([&] {
        need(model, "model");
        need(train, "train");
        need(eval, "eval");
        need(opts, "options");
        ablb::PretrainOptions po;
        po.train.epochs = opts->epochs;
        po.train.batch_size = opts->batch_size;
        po.train.lr = opts->lr;
        po.train.warmup_steps = opts->warmup_steps;
        po.train.clip_norm = opts->clip_norm;
        po.train.seed = opts->seed;
        po.target_accuracy = opts->target_accuracy;
        const std::vector<ablb::QaRecord> none;
        const ablb::PretrainReport r =
            ablb::pretrain(model->state, train->items, qa_train != nullptr ? qa_train->items : none, eval->items,
                           qa_eval != nullptr ? qa_eval->items : none, po);
        if (report != nullptr) {
            *report = ablb_train_report{r.epochs_run, r.balanced_accuracy, r.qa_accuracy, r.final_loss,
                                        r.reached_target ? 1 : 0};
        }
    });
}

void ablb_bias_options_default(ablb_bias_options* opts) {
    if (opts == nullptr) return;
    const ablb::BiasOptions d;
    *opts = ablb_bias_options{d.yes_ratio, d.n, d.lr, d.batch_size, d.max_epochs, d.target_gap, 5, d.seed};
}

ablb_status ablb_bias_inject(ablb_model* model, const ablb_samples* eval, const ablb_bias_options* opts,
                             ablb_bias_report* report) {
    return guard([&] {
        need(model, "model");
        need(eval, "eval");
        need(opts, "options");
        ablb::BiasOptions bo;
        bo.yes_ratio = opts->yes_ratio;
        bo.n = opts->n;
        bo.lr = opts->lr;
        bo.batch_size = opts->batch_size;
        bo.max_epochs = opts->max_epochs;
        bo.target_gap = opts->target_gap;
        bo.seed = opts->seed;
        ablb::TaskSpec task = ablb::toy_task(opts->modulus, true);
        task.max_seq_len = model->state.config().max_seq_len;
        const ablb::BiasReport r = ablb::bias_inject(model->state, task, eval->items, bo);
        if (report != nullptr) {
            *report = ablb_bias_report{r.epochs_run, r.precision, r.recall, r.gap, r.reached_target ? 1 : 0};
        }
    });
}

ablb_status ablb_model_nas(const ablb_model* model, const ablb_samples* samples, double* out) {
    return guard([&] {
        need(model, "model");
        need(samples, "samples");
        need(out, "out");
        *out = ablb::model_nas(samples->items, model->state);
    });
}

ablb_status ablb_nas_table_csv(const ablb_model* model, const ablb_samples* samples, char** out) {
    return guard([&] {
        need(model, "model");
        need(samples, "samples");
        need(out, "out");
        *out = dup_string(ablb::nas_table_csv(ablb::nas_table(samples->items, model->state)));
    });
}

void ablb_probe_options_default(ablb_probe_options* opts) {
    if (opts == nullptr) return;
    *opts = ablb_probe_options{100, 30, ablb::kDefaultConsistency};
}

ablb_status ablb_probe_run(const ablb_model* model, const ablb_samples* probe_set, const ablb_probe_options* opts,
                           ablb_probe** out) {
    return guard([&] {
        need(model, "model");
        need(probe_set, "probe set");
        need(opts, "options");
        need(out, "out");
        const std::size_t total = model->state.config().total_heads();
        *out = new ablb_probe{ablb::select_negative_heads(model->state, probe_set->items, std::min(opts->k, total),
                                                          std::min(opts->top_n, total), opts->threshold)};
    });
}

ablb_status ablb_probe_load(const char* path, ablb_probe** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new ablb_probe{ablb::probe_result_from_json(ablb::read_file(path))};
    });
}

ablb_status ablb_probe_save(const ablb_probe* probe, const char* path) {
    return guard([&] {
        need(probe, "probe");
        need(path, "path");
        ablb::write_file_atomic(path, ablb::probe_result_json(probe->result));
    });
}

ablb_status ablb_probe_json(const ablb_probe* probe, char** out) {
    return guard([&] {
        need(probe, "probe");
        need(out, "out");
        *out = dup_string(ablb::probe_result_json(probe->result));
    });
}

size_t ablb_probe_selected_count(const ablb_probe* probe) {
    return probe != nullptr ? probe->result.selected.size() : 0;
}

ablb_status ablb_probe_selected(const ablb_probe* probe, size_t index, uint32_t* layer, uint32_t* head, double* nas) {
    return guard([&] {
        need(probe, "probe");
        ablb::require(index < probe->result.selected.size(), ablb::ErrorCode::input,
                      "selected head index " + std::to_string(index) + " out of range");
        const ablb::HeadScore& s = probe->result.selected[index];
        if (layer != nullptr) *layer = static_cast<uint32_t>(s.head.layer);
        if (head != nullptr) *head = static_cast<uint32_t>(s.head.head);
        if (nas != nullptr) *nas = s.score;
    });
}

int ablb_probe_shortfall(const ablb_probe* probe) { return probe != nullptr && probe->result.shortfall ? 1 : 0; }

void ablb_probe_free(ablb_probe* probe) { delete probe; }

void ablb_tune_options_default(ablb_tune_options* opts) {
    if (opts == nullptr) return;
    const ablb::TuneParams d;
    *opts = ablb_tune_options{d.rho,          d.lr,       d.batch_size, d.max_epochs, 1, 0.0, ABLB_MODE_NASA,
                              d.val_fraction, d.warmup_ratio, d.seed,   0};
}

ablb_status ablb_tune_options_validate(const ablb_tune_options* opts) {
    return guard([&] {
        need(opts, "options");
        to_params(*opts).validate();
    });
}

ablb_status ablb_tune_run(ablb_model* model, const ablb_probe* probe, const ablb_samples* probe_set,
                          const ablb_tune_options* opts, ablb_tune_log** out) {
    return guard([&] {
        need(model, "model");
        need(probe, "probe");
        need(probe_set, "probe set");
        need(opts, "options");
        need(out, "out");
        const ablb::TuneParams params = to_params(*opts);
        params.validate();
        const std::size_t budget = opts->budget != 0 ? opts->budget : probe->result.selected.size();
        const std::vector<ablb::HeadId> heads =
            ablb::choose_heads(params.mode, probe->result, budget, params.seed, model->state.config());
        const ablb::ProbePartition partition = ablb::partition_tp_fn(model->state, probe_set->items);
        ablb::TuneResult result = ablb::run_nasa(model->state, heads, partition.fn, params, partition);
        model->state = std::move(result.model);
        *out = new ablb_tune_log{std::move(result.log)};
    });
}

ablb_status ablb_tune_log_summary(const ablb_tune_log* log, ablb_tune_summary* out) {
    return guard([&] {
        need(log, "log");
        need(out, "out");
        const ablb::TuneLog& l = log->log;
        std::size_t cancelled = 0;
        for (const ablb::HeadLog& h : l.heads) {
            cancelled += h.cancelled ? 1 : 0;
        }
        *out = ablb_tune_summary{l.tau,        l.heads_planned, l.heads.size(), cancelled, l.halted_at.value_or(0),
                                 l.train_size, l.val_size,        l.initial_val_nas, l.final_val_nas};
    });
}

ablb_status ablb_tune_log_json(const ablb_tune_log* log, char** out) {
    return guard([&] {
        need(log, "log");
        need(out, "out");
        *out = dup_string(ablb::tune_log_json(log->log));
    });
}

ablb_status ablb_tune_log_save(const ablb_tune_log* log, const char* path) {
    return guard([&] {
        need(log, "log");
        need(path, "path");
        ablb::write_file_atomic(path, ablb::tune_log_json(log->log));
    });
}

void ablb_tune_log_free(ablb_tune_log* log) { delete log; }

ablb_status ablb_evaluate(const ablb_model* model, const ablb_samples* samples, ablb_report** out) {
    return guard([&] {
        need(model, "model");
        need(samples, "samples");
        need(out, "out");
        auto report = std::make_unique<ablb_report>();
        report->records = ablb::evaluate_records(model->state, samples->items);
        const auto matrix = ablb::nas_matrix(model->state, samples->items);
        for (const auto& row : matrix) {
            double total = 0.0;
            for (double v : row) total += v;
            report->per_sample_nas.push_back(total);
        }
        double model_nas = 0.0;
        for (const ablb::HeadScore& s : ablb::nas_table(matrix, model->state.config().num_heads)) {
            model_nas += s.score;
        }
        report->metrics = ablb::metrics_report(report->records, model_nas);
        *out = report.release();
    });
}

ablb_status ablb_report_load(const char* path, ablb_report** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        const std::string text = ablb::read_file(path);
        const auto first = text.find_first_not_of(" \t\r\n");
        auto report = std::make_unique<ablb_report>();
        report->metrics = first != std::string::npos && text[first] == '{' ? ablb::metrics_report_from_json(text)
                                                                            : ablb::metrics_report_from_csv(text);
        *out = report.release();
    });
}

ablb_status ablb_report_metrics(const ablb_report* report, ablb_metrics* out) {
    return guard([&] {
        need(report, "report");
        need(out, "out");
        const ablb::MetricsReport& m = report->metrics;
        *out = ablb_metrics{m.scores.accuracy, m.scores.precision, m.scores.recall, m.scores.f1, m.model_nas,
                            m.ece,             m.counts.tp,        m.counts.fp,     m.counts.tn, m.counts.fn};
    });
}

namespace {

std::string render(const ablb_report& report, const char* format) {
    const std::string f = format != nullptr ? format : "json";
    if (f == "json") return ablb::metrics_report_json(report.metrics);
    if (f == "csv") return ablb::metrics_report_csv(report.metrics);
    ablb::fail(ablb::ErrorCode::config, "unknown report format '" + f + "' (expected json or csv)");
}

}  // namespace

ablb_status ablb_report_render(const ablb_report* report, const char* format, char** out) {
    return guard([&] {
        need(report, "report");
        need(out, "out");
        *out = dup_string(render(*report, format));
    });
}

ablb_status ablb_report_save(const ablb_report* report, const char* path, const char* format) {
    return guard([&] {
        need(report, "report");
        need(path, "path");
        ablb::write_file_atomic(path, render(*report, format));
    });
}

ablb_status ablb_report_histogram(const ablb_report* report, size_t bins, const char* format, char** out) {
    return guard([&] {
        need(report, "report");
        need(out, "out");
        ablb::require(!report->records.empty(), ablb::ErrorCode::input, "report carries no per-sample records");
        const ablb::Histogram h = ablb::histogram(report->records, bins);
        const std::string f = format != nullptr ? format : "csv";
        ablb::require(f == "csv" || f == "json", ablb::ErrorCode::config, "unknown histogram format '" + f + "'");
        *out = dup_string(f == "csv" ? ablb::histogram_csv(h) : ablb::histogram_json(h));
    });
}

ablb_status ablb_report_records(const ablb_report* report, char** out) {
    return guard([&] {
        need(report, "report");
        need(out, "out");
        *out = dup_string(ablb::records_jsonl(report->records, report->per_sample_nas));
    });
}

void ablb_report_free(ablb_report* report) { delete report; }

ablb_status ablb_shift_table(const ablb_model* baseline, const ablb_model* tuned, const ablb_samples* samples,
                             const ablb_qa* qa, char** out) {
    return guard([&] {
        need(baseline, "baseline");
        need(tuned, "tuned");
        need(samples, "samples");
        need(qa, "qa");
        need(out, "out");
        const ablb::Vocabulary vocab(baseline->state.config().vocab_size);
        std::map<std::string, const ablb::QaRecord*> by_id;
        for (const ablb::QaRecord& r : qa->items) {
            by_id.emplace(r.id, &r);
        }
        std::vector<ablb::EvalRecord> before = ablb::evaluate_records(baseline->state, samples->items);
        const std::vector<ablb::EvalRecord> after = ablb::evaluate_records(tuned->state, samples->items);
        // Entropy for the taxonomy comes from the short answer, the response being classified.
        std::vector<ablb::EvalRecord> answers;
        for (const ablb::EvalRecord& r : before) {
            const auto it = by_id.find(record_key(r.id));
            ablb::require(it != by_id.end(), ablb::ErrorCode::input, "no QA record for sample '" + r.id + "'");
            const ablb::QaRecord& rec = *it->second;
            const std::vector<ablb::TokenId> prompt =
                ablb::short_answer_prompt(rec, vocab, baseline->state.config().max_seq_len);
            ablb::EvalRecord a = r;
            a.entropy = ablb::first_token_distribution(baseline->state, prompt).entropy;
            a.outcome = ablb::short_answer(baseline->state, rec, vocab).outcome;
            answers.push_back(a);
        }
        const double med = ablb::median_entropy(answers);
        std::map<std::string, ablb::ResponseCategory> category_of;
        for (const ablb::EvalRecord& a : answers) {
            category_of[a.id] = ablb::classify_response(a, med);
        }
        *out = dup_string(ablb::shift_table_csv(ablb::shift_ratios(before, after, category_of)));
    });
}

ablb_status ablb_write_file(const char* path, const char* data, size_t size) {
    return guard([&] {
        need(path, "path");
        ablb::require(data != nullptr || size == 0, ablb::ErrorCode::input, "data is null");
        ablb::write_file_atomic(path, std::string(data != nullptr ? data : "", size));
    });
}

}  // extern "C"
