#include <doctest.h>

#include <limits>
#include <set>

#include <json.hpp>

#include "ablb/tuner.hpp"
#include "checks.hpp"
#include "expect.hpp"

using namespace ablb;
using testutil::thrown_code;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Fixture {
    ModelState model;
    std::vector<BinarySample> fn;
    std::vector<HeadId> heads;
};

Fixture small_fixture() {
    ModelConfig c;
    c.model_dim = 32;
    c.seed = 3;
    Fixture f{build_model(c), checks::positive_fixture(c, 20, 6), {}};
    for (std::size_t h = 0; h < c.total_heads(); ++h) f.heads.push_back({h / c.num_heads, h % c.num_heads});
    return f;
}

TuneParams params_with(double lr, double tau) {
    TuneParams p;
    p.lr = lr;
    p.tau = tau;
    p.batch_size = 8;
    p.max_epochs = 3;
    p.rho = -1e9;
    p.seed = 4;
    return p;
}

}  // namespace

TEST_SUITE("tuner") {

TEST_CASE("epoch stopping rule") {
    CHECK_FALSE(epoch_check(kInf, 1.0, kInf, 2.0, 0.5).stop);
    CHECK(epoch_check(1.0, 1.2, 2.0, 1.0, 0.5).reason == StopReason::nas_rise_single);
    CHECK(epoch_check(1.0, 0.4, 2.0, 1.0, 0.5).reason == StopReason::nas_below_rho);
    CHECK(epoch_check(1.0, 0.9, 2.0, 2.5, 0.5).reason == StopReason::nas_rise_model);
    // Several reasons at once: the first in order wins.
    CHECK(epoch_check(0.1, 0.3, 1.0, 2.0, 0.5).reason == StopReason::nas_rise_single);
    CHECK(epoch_check(1.0, 0.3, 1.0, 2.0, 0.5).reason == StopReason::nas_below_rho);
    // Equality never stops.
    CHECK_FALSE(epoch_check(1.0, 1.0, 2.0, 2.0, 0.5).stop);
    CHECK_FALSE(epoch_check(1.0, 0.5, 2.0, 2.0, 0.5).stop);

    const double grid[] = {-1.0, 0.0, 1.0};
    for (double a : grid)
        for (double ap : grid)
            for (double b : grid)
                for (double bp : grid)
                    for (double rho : grid) {
                        const EpochDecision d = epoch_check(a, ap, b, bp, rho);
                        CHECK(d.stop == (ap > a || ap < rho || bp > b));
                        if (ap > a) {
                            CHECK(d.reason == StopReason::nas_rise_single);
                        } else if (ap < rho) {
                            CHECK(d.reason == StopReason::nas_below_rho);
                        } else if (bp > b) {
                            CHECK(d.reason == StopReason::nas_rise_model);
                        }
                    }
}

TEST_CASE("cancellation rule") {
    CHECK(cancellation_check(1.1, 1.0, 0.0, 0.0));
    CHECK(cancellation_check(0.9, 1.0, 0.1, 0.0));
    CHECK_FALSE(cancellation_check(1.0, 1.0, 0.0, 0.0));
    CHECK_FALSE(cancellation_check(0.2, 1.0, -3.0, 0.0));
    const double grid[] = {-1.0, 0.0, 1.0};
    for (double ap : grid)
        for (double a0 : grid)
            for (double bp : grid)
                for (double b0 : grid) CHECK(cancellation_check(ap, a0, bp, b0) == (ap > a0 || bp > b0));
}

TEST_CASE("head choice per mode") {
    ModelConfig c;
    ProbeResult probe;
    probe.selected = {{{1, 2}, 0.5}, {{0, 3}, 0.25}};
    CHECK(choose_heads(TuneMode::nasa, probe, 2, 1, c) == probe.selected_heads());
    CHECK(choose_heads(TuneMode::freeze_key, probe, 2, 1, c) == probe.selected_heads());
    const auto r1 = choose_heads(TuneMode::random_heads, probe, 5, 1, c);
    CHECK(r1.size() == 5);
    CHECK(std::set<HeadId>(r1.begin(), r1.end()).size() == 5);
    CHECK(r1 == choose_heads(TuneMode::random_heads, probe, 5, 1, c));
    CHECK(choose_heads(TuneMode::random_heads, probe, 8, 1, c).size() == 8);
    CHECK(thrown_code([&] { choose_heads(TuneMode::random_heads, probe, 9, 1, c); }) == ErrorCode::input);
    CHECK(thrown_code([] { parse_tune_mode("greedy"); }) == ErrorCode::config);
    CHECK(parse_tune_mode("freeze_key") == TuneMode::freeze_key);
}

TEST_CASE("validation split") {
    std::vector<BinarySample> fn = small_fixture().fn;
    const TuneSplit s = split_validation(fn, 0.2, 1);
    CHECK(s.train.size() == 16);
    CHECK(s.val.size() == 4);
    std::set<std::string> ids;
    for (const auto& x : s.train) ids.insert(x.id);
    for (const auto& x : s.val) ids.insert(x.id);
    CHECK(ids.size() == 20);
    CHECK(split_validation(fn, 0.2, 1).val == s.val);

    const std::span<const BinarySample> two(fn.data(), 2);
    CHECK(split_validation(two, 0.2, 1).val.size() == 1);
    const std::span<const BinarySample> three(fn.data(), 3);
    CHECK(split_validation(three, 0.2, 1).val.size() == 1);
    CHECK(split_validation(three, 0.9, 1).val.size() == 2);
    const std::span<const BinarySample> one(fn.data(), 1);
    CHECK(thrown_code([&] { split_validation(one, 0.2, 1); }) == ErrorCode::input);
}

TEST_CASE("loop properties over a settings grid") {
    checks::TunerStats st;
    const checks::Outcome r = checks::tuner_properties(&st);
    INFO(r.detail);
    CHECK(r.pass);
    CHECK(st.runs > 0);
    CHECK(st.cancelled > 0);
    CHECK(st.kept > 0);
    CHECK(st.halted_runs > 0);
}

TEST_CASE("halting after the second head") {
    const Fixture f = small_fixture();
    const ProbePartition none;
    // Find an order and rate where the second head is kept and lowers beta, then put tau between the two.
    bool found = false;
    for (std::size_t start = 0; start < f.heads.size() && !found; ++start) {
        std::vector<HeadId> order(f.heads.begin() + static_cast<std::ptrdiff_t>(start), f.heads.end());
        order.insert(order.end(), f.heads.begin(), f.heads.begin() + static_cast<std::ptrdiff_t>(start));
        for (double lr : {0.01, 0.05, 0.2, 0.5, 2.0}) {
            const TuneResult free_run = run_nasa(f.model, order, f.fn, params_with(lr, -1e9), none);
            REQUIRE(free_run.log.heads.size() == order.size());
            const double b1 = free_run.log.heads[0].beta_post;
            const double b2 = free_run.log.heads[1].beta_post;
            CHECK(b2 <= b1);
            if (!(b2 < b1)) continue;
            found = true;
            const TuneResult halted = run_nasa(f.model, order, f.fn, params_with(lr, b1), none);
            REQUIRE(halted.log.halted_at.has_value());
            CHECK(*halted.log.halted_at == 2);
            CHECK(halted.log.heads.size() == 2);
            for (std::size_t i = 2; i < order.size(); ++i) {
                CHECK(snapshot_head(halted.model, order[i]) == snapshot_head(f.model, order[i]));
            }
            const auto j = nlohmann::json::parse(tune_log_json(halted.log));
            CHECK(j["halted_at"] == 2);
            CHECK(j["heads"].size() == 2);
            break;
        }
    }
    CHECK(found);
}

TEST_CASE("degenerate inputs") {
    const Fixture f = small_fixture();
    const ProbePartition none;
    SUBCASE("no heads is a no-op") {
        const std::vector<HeadId> empty;
        const TuneResult r = run_nasa(f.model, empty, f.fn, params_with(0.5, 0.0), none);
        CHECK(r.model == f.model);
        CHECK(r.log.heads.empty());
        CHECK_FALSE(r.log.halted_at.has_value());
        CHECK(nlohmann::json::parse(tune_log_json(r.log))["halted_at"].is_null());
    }
    SUBCASE("automatic tau needs true positives") {
        TuneParams p = params_with(0.5, 0.0);
        p.tau.reset();
        CHECK(thrown_code([&] { run_nasa(f.model, f.heads, f.fn, p, none); }) == ErrorCode::probing);
    }
    SUBCASE("training data must be positive") {
        std::vector<BinarySample> bad = f.fn;
        bad[3].label = Label::Negative;
        CHECK(thrown_code([&] { run_nasa(f.model, f.heads, bad, params_with(0.5, 0.0), none); }) ==
              ErrorCode::input);
    }
    SUBCASE("parameter validation") {
        TuneParams p = params_with(-1.0, 0.0);
        CHECK(thrown_code([&] { p.validate(); }) == ErrorCode::config);
        p = params_with(0.1, 0.0);
        p.batch_size = 0;
        CHECK(thrown_code([&] { p.validate(); }) == ErrorCode::config);
        p = params_with(0.1, 0.0);
        p.val_fraction = 1.0;
        CHECK(thrown_code([&] { p.validate(); }) == ErrorCode::config);
        const std::vector<HeadId> invalid{{5, 0}};
        CHECK(thrown_code([&] { run_nasa(f.model, invalid, f.fn, params_with(0.1, 0.0), none); }) ==
              ErrorCode::input);
    }
}

}  // TEST_SUITE
