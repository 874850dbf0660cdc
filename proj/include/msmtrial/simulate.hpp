#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msmtrial/design.hpp"

namespace msmtrial {

enum class TrialMode { fixed, adaptive };
enum class ArrivalProcess { iid_uniform, rate_slots };

/// One Monte Carlo study: the design/planning side plus the generating
/// truth. `planning.model` carries the design-stage hazard ratios; `truth`
/// (defaulting to the planning model) generates the data.
struct ScenarioConfig {
  std::string name;
  PlanningAssumptions planning;
  std::optional<MultiStateModel> truth;
  std::vector<EventDefinition> events;
  DesignSpec design;
  long n = 0;                       // total sample size (fixed mode)
  long replicates = 10'000;
  std::uint64_t seed = 0;           // mandatory, no entropy defaults
  bool seed_set = false;
  TrialMode mode = TrialMode::fixed;
  ArrivalProcess arrivals = ArrivalProcess::iid_uniform;
  double a_add_min = 0.0;           // adaptive bounds, counted from the interim
  double a_add_max = 0.0;
  double conditional_target = 0.8;
  int recalc_quad_panels = 1024;

  const MultiStateModel& generating_model() const {
    return truth ? *truth : planning.model;
  }
  void validate() const;
};

struct ReplicateOutcome {
  bool rejected = false;
  int stage = 0;                    // 1-based stopping stage, 0 when run to the end
  double accrual_duration = 0.0;    // realized (truncated at the stopping time)
  double a_add = 0.0;               // adaptive extension chosen (0 in fixed mode)
  bool flagged = false;             // a rank-deficient stage covariance occurred
};

struct ScenarioResult {
  std::string name;
  long replicates = 0;
  long rejected = 0;
  double rejection_rate = 0.0;
  double rate_se = 0.0;
  std::vector<long> reject_by_stage;
  long flagged = 0;
  double mean_accrual = 0.0;
  double mean_a_add = 0.0;          // over continuing replicates (adaptive)
  double wall_seconds = 0.0;
};

/// Deterministic patient panel for one replicate: `count` patients with
/// alternating group labels, arrival process per config, paths sampled to
/// `horizon` on the trial clock.
Cohort simulate_patients(const ScenarioConfig& config, long replicate_index, long count,
                         double horizon);

ReplicateOutcome run_replicate(const ScenarioConfig& config, const Boundaries& bounds,
                               long replicate_index);

using ProgressFn = std::function<void(long done, long total)>;

/// Aggregates run_replicate over the replicate range. Parallel over a fixed
/// replicate partition with order-fixed reduction: byte-identical results
/// for a given (config, seed) regardless of thread count.
ScenarioResult run_scenario(const ScenarioConfig& config, int threads = 0,
                            const ProgressFn& progress = {});

struct CalibrationResult {
  long n = 0;
  long analytic_n = 0;
  double power_at_n = 0.0;
  bool flagged = false;  // empirical result > 20% away from the analytic seed
};

/// Smallest n with empirical power >= target, integer bisection seeded by
/// the analytic required_sample_size (common random numbers across n).
/// Throws when the power estimates are non-monotone beyond MC noise.
CalibrationResult calibrate_sample_size(const ScenarioConfig& config_template,
                                        double target, long replicates, int threads = 0);

}  // namespace msmtrial
