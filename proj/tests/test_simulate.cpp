#include "doctest.h"

#include <cmath>

#include <nlohmann/json.hpp>

#include "msmtrial/io_json.hpp"
#include "msmtrial/simulate.hpp"
#include "test_util.hpp"

using namespace msmtrial;

namespace {

ScenarioConfig scenario1_config(double d01, double d02, double d12, long n,
                                BoundaryFamily family = BoundaryFamily::pocock) {
  ScenarioConfig cfg;
  cfg.name = "scenario1";
  cfg.planning = {testutil::make_scenario_model(1, d01, d02, d12),
                  AccrualPlan{3.0, 2.0, 0.0, 0.5}, 0.0};
  cfg.events = testutil::pfs_os_events();
  cfg.design.stages = 2;
  cfg.design.analysis_times = {2.5, 5.0};
  cfg.design.alpha = 0.05;
  cfg.design.family = family;
  cfg.n = n;
  cfg.seed = 1234;
  cfg.seed_set = true;
  return cfg;
}

Boundaries bounds_for(const DesignSpec& d) {
  const auto w = d.effective_weights();
  std::vector<double> fr(w.size());
  double acc = 0.0;
  for (std::size_t r = 0; r < w.size(); ++r) {
    acc += w[r] * w[r];
    fr[r] = acc;
  }
  return sequential_boundaries(d.family, d.stages, d.alpha, fr, d.custom_z);
}

}  // namespace

TEST_CASE("replicates are deterministic and scenario results thread-stable") {
  ScenarioConfig cfg = scenario1_config(1.0, 1.0, 1.0, 80);
  cfg.replicates = 60;
  const Boundaries b = bounds_for(cfg.design);
  for (long k : {0L, 7L, 59L}) {
    const ReplicateOutcome a = run_replicate(cfg, b, k);
    const ReplicateOutcome c = run_replicate(cfg, b, k);
    CHECK(a.rejected == c.rejected);
    CHECK(a.stage == c.stage);
    CHECK(a.accrual_duration == c.accrual_duration);
  }
  const ScenarioResult r1 = run_scenario(cfg, 1);
  const ScenarioResult r2 = run_scenario(cfg, 2);
  CHECK(r1.rejected == r2.rejected);
  CHECK(r1.reject_by_stage == r2.reject_by_stage);
  CHECK(r1.mean_accrual == r2.mean_accrual);  // bitwise: order-fixed reduction
  CHECK(r1.flagged == r2.flagged);
}

TEST_CASE("config validation rejects broken scenarios") {
  ScenarioConfig cfg = scenario1_config(1.0, 1.0, 1.0, 0);
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // n = 0
  cfg.n = 10;
  cfg.seed_set = false;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // missing seed
  cfg.seed_set = true;
  cfg.replicates = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.replicates = 10;
  cfg.mode = TrialMode::adaptive;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // no accrual rate
}

TEST_CASE("event-free stages are flagged as rank-deficient, never dropped") {
  ScenarioConfig cfg = scenario1_config(1.0, 1.0, 1.0, 3);
  cfg.design.analysis_times = {0.02, 0.05};  // essentially no observable events
  cfg.replicates = 20;
  const ScenarioResult res = run_scenario(cfg, 1);
  CHECK(res.replicates == 20);
  CHECK(res.flagged == 20);
  CHECK(res.rejected == 0);
}

TEST_CASE("null rejection rate is near the nominal level") {
  ScenarioConfig cfg = scenario1_config(1.0, 1.0, 1.0, 250);
  cfg.replicates = 4000;
  const ScenarioResult res = run_scenario(cfg);
  // small samples are known to be mildly anti-conservative
  CHECK(res.rejection_rate > 0.040);
  CHECK(res.rejection_rate < 0.066);
  CHECK(res.flagged == 0);
}

TEST_CASE("adaptive replicates respect the extension bounds") {
  ScenarioConfig cfg;
  cfg.planning = {testutil::make_lung_model(), AccrualPlan{24.0, 12.0, 20.0, 0.5}, 0.0};
  cfg.truth = testutil::make_lung_model(1.0 / 1.3, 1.0, 1.0 / 1.25);
  cfg.events = testutil::pfs_os_events();
  cfg.design.stages = 2;
  cfg.design.analysis_times = {18.0, 36.0};
  cfg.design.alpha = 0.05;
  cfg.design.family = BoundaryFamily::obrien_fleming;
  cfg.mode = TrialMode::adaptive;
  cfg.arrivals = ArrivalProcess::rate_slots;
  cfg.a_add_min = 3.0;
  cfg.a_add_max = 30.0;
  cfg.seed = 5656;
  cfg.seed_set = true;
  const Boundaries b = bounds_for(cfg.design);
  for (long k = 0; k < 8; ++k) {
    const ReplicateOutcome o = run_replicate(cfg, b, k);
    if (o.rejected && o.stage == 1) {
      CHECK(o.accrual_duration == 18.0);
    } else {
      CHECK(o.a_add >= 3.0);
      CHECK(o.a_add <= 30.0);
      CHECK(o.accrual_duration == doctest::Approx(18.0 + o.a_add));
    }
    const ReplicateOutcome o2 = run_replicate(cfg, b, k);
    CHECK(o.a_add == o2.a_add);
  }
}

TEST_CASE("sample-size calibration brackets the reference value (scenario 1 strong effect)") {
  // reference per-group size 146 for delta = (0.6, 1, 0.75) under Pocock; the
  // calibration works on the total scale
  ScenarioConfig cfg = scenario1_config(0.6, 1.0, 0.75, 0);
  cfg.seed = 20240214;
  const CalibrationResult cal = calibrate_sample_size(cfg, 0.8, 3000);
  CHECK(std::fabs(static_cast<double>(cal.n) - 292.0) < 0.10 * 292.0);
  CHECK(!cal.flagged);
  CHECK(cal.power_at_n >= 0.8);

  // degenerate target at the null: no analytic seed, tiny n, flagged
  ScenarioConfig null_cfg = scenario1_config(1.0, 1.0, 1.0, 0);
  null_cfg.seed = 99;
  const CalibrationResult degenerate = calibrate_sample_size(null_cfg, 0.05, 800);
  CHECK(degenerate.n < 100);
  CHECK(degenerate.flagged);
}

TEST_CASE("scenario json round trip and validation") {
  const nlohmann::json j = {
      {"name", "demo"},
      {"design",
       {{"model",
         {{"states", 3},
          {"transitions",
           {{{"from", 0}, {"to", 1}, {"lambda", 0.6}, {"gamma", 1.0}, {"delta", 0.8}},
            {{"from", 0}, {"to", 2}, {"lambda", 0.075}},
            {{"from", 1}, {"to", 2}, {"lambda", 0.9}, {"delta", 0.85}}}}}},
        {"events",
         {{{"name", "PFS"}, {"states", {1, 2}}}, {{"name", "OS"}, {"states", {2}}}}},
        {"stages", 2},
        {"analysis_times", {2.5, 5.0}},
        {"alpha", 0.05},
        {"boundary", "pocock"},
        {"accrual",
         {{"duration", 3.0}, {"followup", 2.0}, {"rate", 0.0}, {"allocation", 0.5}}}}},
      {"n", 250},
      {"replicates", 100},
      {"seed", 42},
      {"mode", "fixed"}};
  const ScenarioConfig cfg = scenario_from_json(j);
  CHECK(cfg.name == "demo");
  CHECK(cfg.n == 250);
  CHECK(cfg.seed == 42);
  CHECK(cfg.planning.model.transitions()[0].delta == 0.8);
  CHECK(cfg.events[0].states == std::vector<int>{1, 2});
  cfg.validate();

  nlohmann::json no_seed = j;
  no_seed.erase("seed");
  CHECK_THROWS_AS(scenario_from_json(no_seed).validate(), std::invalid_argument);

  const nlohmann::json back = model_to_json(cfg.planning.model);
  const MultiStateModel m2 = model_from_json(back);
  CHECK(m2.transitions().size() == 3);
  CHECK(m2.transitions()[2].delta == 0.85);
}
