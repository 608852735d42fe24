#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "ablb/ablb.h"
#include "commands.hpp"
#include "expect.hpp"

using nlohmann::json;
using testutil::slurp;
using testutil::TempDir;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = cli::run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

void write(const std::string& path, const std::string& text) {
    REQUIRE(ablb_write_file(path.c_str(), text.data(), text.size()) == ABLB_OK);
}

std::string first_id(const std::string& jsonl) {
    return json::parse(jsonl.substr(0, jsonl.find('\n')))["id"].get<std::string>();
}

// Untrained small model whose probing-set decisions contain enough false negatives to tune on.
void save_small_model(const std::string& path, const std::string& probe_path) {
    ablb_samples* probe = nullptr;
    REQUIRE(ablb_samples_load(probe_path.c_str(), &probe) == ABLB_OK);
    for (uint64_t seed = 1; seed < 40; ++seed) {
        ablb_model_config c;
        ablb_model_config_default(&c);
        c.model_dim = 32;
        c.seed = seed;
        ablb_model* m = nullptr;
        REQUIRE(ablb_model_new(&c, &m) == ABLB_OK);
        ablb_report* r = nullptr;
        REQUIRE(ablb_evaluate(m, probe, &r) == ABLB_OK);
        ablb_metrics metrics{};
        ablb_report_metrics(r, &metrics);
        ablb_report_free(r);
        if (metrics.fn >= 6) {
            REQUIRE(ablb_model_save(m, path.c_str()) == ABLB_OK);
            ablb_model_free(m);
            ablb_samples_free(probe);
            return;
        }
        ablb_model_free(m);
    }
    ablb_samples_free(probe);
    FAIL("no seed produced enough false negatives");
}

const char* kSmallModel = R"({"model": {"model_dim": 32}})";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes and error lines") {
    TempDir dir("cli-codes");
    const Run ok = run({"gen-data", "--n", "10", "--out", dir.file("d.jsonl")});
    CHECK(ok.code == cli::kExitOk);
    CHECK(ok.out.find("samples=10") != std::string::npos);

    const Run usage = run({"gen-data", "--bogus-flag"});
    CHECK(usage.code == cli::kExitUsage);
    CHECK(json::parse(usage.err)["error"] == "usage");
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"gen-data", "--n", "10"}).code == cli::kExitUsage);  // missing --out

    const Run missing = run({"probe", "--model", dir.file("none.ablb"), "--data", dir.file("d.jsonl"), "--out",
                             dir.file("h.json")});
    CHECK(missing.code == cli::kExitFailure);
    const json e = json::parse(missing.err);
    CHECK(e["error"] == "io");
    CHECK(e["status"] == ABLB_ERR_IO);
}

TEST_CASE("strict configuration") {
    TempDir dir("cli-config");
    write(dir.file("bad.json"), R"({"tune": {"rho": 0.5, "foo": 1}})");
    const Run r = run({"gen-data", "--config", dir.file("bad.json"), "--out", dir.file("d.jsonl")});
    CHECK(r.code == cli::kExitFailure);
    const json e = json::parse(r.err);
    CHECK(e["error"] == "config");
    CHECK(e["message"].get<std::string>().find("foo") != std::string::npos);

    write(dir.file("type.json"), R"({"data": {"n": "ten"}})");
    CHECK(run({"gen-data", "--config", dir.file("type.json"), "--out", dir.file("d.jsonl")}).code ==
          cli::kExitFailure);
    write(dir.file("range.json"), R"({"probe": {"threshold": 1.5}})");
    CHECK(run({"gen-data", "--config", dir.file("range.json"), "--out", dir.file("d.jsonl")}).code ==
          cli::kExitFailure);
    CHECK(run({"gen-data", "--config", dir.file("absent.json"), "--out", dir.file("d.jsonl")}).code ==
          cli::kExitFailure);
}

TEST_CASE("seed precedence: config, then flag, then environment") {
    TempDir dir("cli-seed");
    write(dir.file("c.json"), R"({"seed": 5, "data": {"n": 4}})");
    const std::string out = dir.file("d.jsonl");
    ::unsetenv("ABLB_SEED");
    REQUIRE(run({"gen-data", "--config", dir.file("c.json"), "--out", out}).code == 0);
    CHECK(first_id(slurp(out)).rfind("mod-add-5-", 0) == 0);
    REQUIRE(run({"gen-data", "--config", dir.file("c.json"), "--seed", "6", "--out", out}).code == 0);
    CHECK(first_id(slurp(out)).rfind("mod-add-6-", 0) == 0);
    ::setenv("ABLB_SEED", "7", 1);
    REQUIRE(run({"gen-data", "--config", dir.file("c.json"), "--seed", "6", "--out", out}).code == 0);
    CHECK(first_id(slurp(out)).rfind("mod-add-7-", 0) == 0);
    ::setenv("ABLB_SEED", "seven", 1);
    CHECK(run({"gen-data", "--out", out}).code == cli::kExitFailure);
    ::unsetenv("ABLB_SEED");
}

TEST_CASE("help lists the flags") {
    const Run top = run({"--help"});
    CHECK(top.code == 0);
    for (const char* c : {"gen-data", "pretrain", "bias-inject", "probe", "tune", "eval", "report"}) {
        CHECK(top.out.find(c) != std::string::npos);
    }
    const Run tune = run({"tune", "--help"});
    CHECK(tune.code == 0);
    for (const char* f : {"--model", "--heads", "--train", "--rho", "--tau", "--lr", "--batch", "--max-epochs",
                          "--mode", "--out", "--log", "--config", "--seed"}) {
        CHECK(tune.out.find(f) != std::string::npos);
    }
}

TEST_CASE("probe, tune and report through the command line") {
    TempDir dir("cli-flow");
    ::unsetenv("ABLB_SEED");
    write(dir.file("small.json"), kSmallModel);
    const std::string cfg = dir.file("small.json");
    REQUIRE(run({"gen-data", "--config", cfg, "--kind", "probe", "--n", "40", "--seed", "3", "--out",
                 dir.file("probe.jsonl")})
                .code == 0);
    REQUIRE(run({"gen-data", "--config", cfg, "--n", "40", "--seed", "4", "--out", dir.file("eval.jsonl"), "--qa-out",
                 dir.file("eval_qa.jsonl")})
                .code == 0);
    save_small_model(dir.file("m.ablb"), dir.file("probe.jsonl"));

    const Run probe = run({"probe", "--config", cfg, "--model", dir.file("m.ablb"), "--data", dir.file("probe.jsonl"),
                           "--out", dir.file("heads.json"), "--nas-table", dir.file("nas.csv")});
    REQUIRE(probe.code == 0);
    CHECK(slurp(dir.file("nas.csv")).rfind("layer,head,nas\n", 0) == 0);

    SUBCASE("flags override the config file") {
        write(dir.file("tune.json"),
              R"({"model": {"model_dim": 32}, "tune": {"rho": 0.25, "lr": 0.01, "max_epochs": 2, "batch_size": 8}})");
        const Run t = run({"tune", "--config", dir.file("tune.json"), "--rho", "-3", "--tau", "-1e9", "--model",
                           dir.file("m.ablb"), "--heads", dir.file("heads.json"), "--train", dir.file("probe.jsonl"),
                           "--out", dir.file("t.ablb"), "--log", dir.file("log.json")});
        INFO(t.err);
        REQUIRE(t.code == 0);
        const json log = json::parse(slurp(dir.file("log.json")));
        CHECK(log["params"]["rho"] == -3.0);
        CHECK(log["params"]["lr"] == 0.01);
        CHECK(log["params"]["max_epochs"] == 2);
        CHECK(log["params"]["tau"] == -1e9);
        CHECK(run({"tune", "--tau", "soon", "--model", dir.file("m.ablb"), "--heads", dir.file("heads.json"),
                   "--train", dir.file("probe.jsonl"), "--out", dir.file("t.ablb")})
                  .code == cli::kExitFailure);
    }

    SUBCASE("reports are written atomically and convert losslessly") {
        const Run ev = run({"eval", "--config", cfg, "--model", dir.file("m.ablb"), "--data", dir.file("eval.jsonl"),
                            "--report", dir.file("r.json"), "--histogram", dir.file("h.csv"), "--records",
                            dir.file("rec.jsonl"), "--baseline", dir.file("m.ablb"), "--qa", dir.file("eval_qa.jsonl"),
                            "--shift", dir.file("shift.csv")});
        INFO(ev.err);
        REQUIRE(ev.code == 0);
        for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
            CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
        }
        const json report = json::parse(slurp(dir.file("r.json")));
        CHECK(report.contains("f1"));
        CHECK(slurp(dir.file("shift.csv")).rfind("shift,", 0) == 0);

        REQUIRE(run({"report", "--in", dir.file("r.json"), "--format", "csv", "--out", dir.file("r.csv")}).code == 0);
        REQUIRE(run({"report", "--in", dir.file("r.csv"), "--format", "json", "--out", dir.file("back.json")}).code ==
                0);
        CHECK(slurp(dir.file("back.json")) == slurp(dir.file("r.json")));

        const Run to_stdout = run({"report", "--in", dir.file("r.json"), "--format", "csv"});
        REQUIRE(to_stdout.code == 0);
        CHECK(to_stdout.out == slurp(dir.file("r.csv")));
        CHECK(run({"report", "--in", dir.file("r.json"), "--format", "xml"}).code == cli::kExitUsage);
    }
}

}  // TEST_SUITE
