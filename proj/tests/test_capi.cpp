#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <string>

#include "ablb/ablb.h"
#include "expect.hpp"

namespace {

std::string take(char* s) {
    std::string out = s != nullptr ? s : "";
    ablb_string_free(s);
    return out;
}

ablb_model_config small_config(uint64_t seed) {
    ablb_model_config c;
    ablb_model_config_default(&c);
    c.model_dim = 32;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_SUITE("capi") {

TEST_CASE("status reporting") {
    CHECK(std::string(ablb_status_name(ABLB_ERR_IO)) == "io");
    CHECK(std::string(ablb_status_name(ABLB_OK)) == "ok");
    CHECK(std::strlen(ablb_version()) > 0);

    ablb_model* m = nullptr;
    CHECK(ablb_model_new(nullptr, &m) == ABLB_ERR_INPUT);
    CHECK(std::string(ablb_last_error()).find("null") != std::string::npos);
    ablb_model_config bad = small_config(1);
    bad.model_dim = 65;
    CHECK(ablb_model_config_validate(&bad) == ABLB_ERR_CONFIG);
    CHECK(ablb_model_new(&bad, &m) == ABLB_ERR_CONFIG);
    CHECK(m == nullptr);
    CHECK(ablb_model_load("/nonexistent/model.ablb", &m) == ABLB_ERR_IO);
    CHECK(std::strlen(ablb_last_error()) > 0);

    const ablb_model_config good = small_config(1);
    REQUIRE(ablb_model_new(&good, &m) == ABLB_OK);
    CHECK(std::strlen(ablb_last_error()) == 0);
    ablb_model_free(m);
    ablb_model_free(nullptr);
}

TEST_CASE("model handles") {
    testutil::TempDir dir("capi-model");
    const ablb_model_config c = small_config(5);
    ablb_model* a = nullptr;
    ablb_model* b = nullptr;
    REQUIRE(ablb_model_new(&c, &a) == ABLB_OK);
    REQUIRE(ablb_model_save(a, dir.file("m.ablb").c_str()) == ABLB_OK);
    REQUIRE(ablb_model_load(dir.file("m.ablb").c_str(), &b) == ABLB_OK);
    int eq = 0;
    REQUIRE(ablb_model_equal(a, b, &eq) == ABLB_OK);
    CHECK(eq == 1);
    uint64_t ca = 0, cb = 0;
    ablb_model_checksum(a, &ca);
    ablb_model_checksum(b, &cb);
    CHECK(ca == cb);
    ablb_model_config back{};
    ablb_model_get_config(b, &back);
    CHECK(back.model_dim == 32);
    CHECK(back.seed == 5);

    const float* data = nullptr;
    size_t count = 0;
    REQUIRE(ablb_model_tensor(a, "layers.0.attn.1.wk", &data, &count) == ABLB_OK);
    CHECK(count == 32 * 8);
    CHECK(ablb_model_tensor(a, "nope", &data, &count) == ABLB_ERR_INPUT);

    ablb_model* clone = nullptr;
    REQUIRE(ablb_model_clone(a, &clone) == ABLB_OK);
    ablb_model_equal(a, clone, &eq);
    CHECK(eq == 1);
    ablb_model_free(clone);
    ablb_model_free(a);
    ablb_model_free(b);
}

TEST_CASE("probe, tune and evaluate through the C interface") {
    testutil::TempDir dir("capi-flow");
    ablb_data_options d;
    ablb_data_options_default(&d);
    d.n = 40;
    d.yes_ratio = 1.0;
    d.seed = 3;
    ablb_samples* generated = nullptr;
    ablb_qa* qa = nullptr;
    REQUIRE(ablb_gen_synthetic(&d, &generated, &qa) == ABLB_OK);
    CHECK(ablb_samples_size(generated) == 40);
    CHECK(ablb_qa_size(qa) == 40);
    ablb_samples* probe_set = nullptr;
    REQUIRE(ablb_probe_samples(qa, "nasa", nullptr, d.vocab_size, d.max_seq_len, &probe_set) == ABLB_OK);
    CHECK(ablb_samples_size(probe_set) == 40);

    // A random model whose decisions on the probe set include enough false negatives to tune on.
    ablb_model* model = nullptr;
    ablb_metrics before{};
    for (uint64_t seed = 1; seed < 40; ++seed) {
        ablb_model_free(model);
        const ablb_model_config c = small_config(seed);
        REQUIRE(ablb_model_new(&c, &model) == ABLB_OK);
        ablb_report* r = nullptr;
        REQUIRE(ablb_evaluate(model, probe_set, &r) == ABLB_OK);
        ablb_report_metrics(r, &before);
        ablb_report_free(r);
        if (before.fn >= 6 && before.tp >= 1) break;
    }
    REQUIRE(before.fn >= 6);

    double nas = 0.0;
    REQUIRE(ablb_model_nas(model, probe_set, &nas) == ABLB_OK);
    char* csv = nullptr;
    REQUIRE(ablb_nas_table_csv(model, probe_set, &csv) == ABLB_OK);
    const std::string table = take(csv);
    CHECK(std::count(table.begin(), table.end(), '\n') == 9);

    ablb_probe_options po;
    ablb_probe_options_default(&po);
    ablb_probe* probe = nullptr;
    REQUIRE(ablb_probe_run(model, probe_set, &po, &probe) == ABLB_OK);
    const size_t selected = ablb_probe_selected_count(probe);
    CHECK(selected <= 8);
    REQUIRE(ablb_probe_save(probe, dir.file("heads.json").c_str()) == ABLB_OK);
    ablb_probe* reloaded = nullptr;
    REQUIRE(ablb_probe_load(dir.file("heads.json").c_str(), &reloaded) == ABLB_OK);
    char* j1 = nullptr;
    char* j2 = nullptr;
    ablb_probe_json(probe, &j1);
    ablb_probe_json(reloaded, &j2);
    CHECK(take(j1) == take(j2));
    ablb_probe_free(reloaded);

    ablb_model* original = nullptr;
    REQUIRE(ablb_model_clone(model, &original) == ABLB_OK);
    ablb_tune_options to;
    ablb_tune_options_default(&to);
    to.lr = 0.05;
    to.batch_size = 8;
    to.max_epochs = 2;
    to.tau_auto = 0;
    to.tau = -1e9;
    to.rho = -1e9;
    to.mode = ABLB_MODE_RANDOM_HEADS;
    to.budget = 3;
    REQUIRE(ablb_tune_options_validate(&to) == ABLB_OK);
    ablb_tune_log* log = nullptr;
    REQUIRE(ablb_tune_run(model, probe, probe_set, &to, &log) == ABLB_OK);
    ablb_tune_summary s{};
    REQUIRE(ablb_tune_log_summary(log, &s) == ABLB_OK);
    CHECK(s.heads_planned == 3);
    CHECK(s.heads_tuned == 3);
    CHECK(s.halted_at == 0);
    CHECK(s.train_size + s.val_size == before.fn);
    char* lj = nullptr;
    REQUIRE(ablb_tune_log_json(log, &lj) == ABLB_OK);
    CHECK(take(lj).find("\"mode\": \"random_heads\"") != std::string::npos);
    REQUIRE(ablb_tune_log_save(log, dir.file("log.json").c_str()) == ABLB_OK);
    ablb_tune_log_free(log);

    ablb_report* report = nullptr;
    REQUIRE(ablb_evaluate(model, probe_set, &report) == ABLB_OK);
    ablb_metrics m{};
    ablb_report_metrics(report, &m);
    CHECK(m.tp + m.fn == 40);
    REQUIRE(ablb_report_save(report, dir.file("r.json").c_str(), "json") == ABLB_OK);
    REQUIRE(ablb_report_save(report, dir.file("r.csv").c_str(), "csv") == ABLB_OK);
    ablb_report* from_json = nullptr;
    ablb_report* from_csv = nullptr;
    REQUIRE(ablb_report_load(dir.file("r.json").c_str(), &from_json) == ABLB_OK);
    REQUIRE(ablb_report_load(dir.file("r.csv").c_str(), &from_csv) == ABLB_OK);
    ablb_metrics mj{}, mc{};
    ablb_report_metrics(from_json, &mj);
    ablb_report_metrics(from_csv, &mc);
    CHECK(std::memcmp(&mj, &mc, sizeof mj) == 0);
    CHECK(mj.f1 == m.f1);
    CHECK(mj.ece == m.ece);
    char* hist = nullptr;
    REQUIRE(ablb_report_histogram(report, 10, "csv", &hist) == ABLB_OK);
    CHECK(take(hist).rfind("bin_lo", 0) == 0);
    CHECK(ablb_report_histogram(from_json, 10, "csv", &hist) == ABLB_ERR_INPUT);
    char* rendered = nullptr;
    CHECK(ablb_report_render(report, "xml", &rendered) == ABLB_ERR_CONFIG);

    char* shift = nullptr;
    REQUIRE(ablb_shift_table(original, model, probe_set, qa, &shift) == ABLB_OK);
    CHECK(take(shift).rfind("shift,Det-T/high", 0) == 0);

    ablb_report_free(report);
    ablb_report_free(from_json);
    ablb_report_free(from_csv);
    ablb_probe_free(probe);
    ablb_model_free(original);
    ablb_model_free(model);
    ablb_samples_free(probe_set);
    ablb_samples_free(generated);
    ablb_qa_free(qa);
}

TEST_CASE("atomic writes") {
    testutil::TempDir dir("capi-write");
    const std::string path = dir.file("x.txt");
    REQUIRE(ablb_write_file(path.c_str(), "abc", 3) == ABLB_OK);
    CHECK(testutil::slurp(path) == "abc");
    CHECK(ablb_write_file(nullptr, "abc", 3) == ABLB_ERR_INPUT);
    CHECK(ablb_write_file((dir.file("no/such/dir") + "/x").c_str(), "abc", 3) == ABLB_ERR_IO);
}

}  // TEST_SUITE
