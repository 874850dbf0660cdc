#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msmtrial/cohort.hpp"
#include "msmtrial/linalg.hpp"
#include "msmtrial/model.hpp"
#include "msmtrial/stats.hpp"

namespace msmtrial {

enum class BoundaryFamily { pocock, obrien_fleming, custom };

/// Group-sequential design: analysis calendar times, overall alpha, the
/// boundary family on the inverse-normal combination scale and the
/// combination weights (sum of squares 1). No futility stopping.
struct DesignSpec {
  int stages = 2;
  std::vector<double> analysis_times;   // t_1 < ... < t_m
  double alpha = 0.05;
  BoundaryFamily family = BoundaryFamily::pocock;
  std::vector<double> weights;          // empty -> equal 1/sqrt(m)
  std::vector<double> custom_z;         // family == custom: per-stage z-thresholds

  std::vector<double> effective_weights() const;
  void validate() const;
};

struct Boundaries {
  std::vector<double> z_thresholds;     // on the cumulative standardized scale
  std::vector<double> p_thresholds;     // nominal stagewise level at empty history
  std::vector<double> info_fractions;   // tau_r = sum_{k<=r} w_k^2
  double alpha = 0.0;                   // attained overall level
};

/// Null crossing probability of the open sequential procedure for given
/// cumulative z-scale thresholds (recursive numerical integration).
double sequential_crossing_prob(const std::vector<double>& z_thresholds,
                                const std::vector<double>& info_fractions,
                                double tol = 1e-6);

/// Thresholds with overall null crossing probability alpha. For the custom
/// family the supplied thresholds are kept and the attained alpha reported.
Boundaries sequential_boundaries(BoundaryFamily family, int stages, double alpha,
                                 const std::vector<double>& info_fractions,
                                 const std::vector<double>& custom_z = {});

/// Decision state after r observed stagewise p-values.
struct CombineResult {
  bool reject = false;
  int decided_stage = 0;                 // first rejecting stage (1-based), 0 otherwise
  std::vector<double> cumulative_z;      // running weighted sums (score scale)
  std::vector<double> stage_levels;      // conditional stagewise level, per stage entered
  double next_conditional_level = 0.0;   // level available to stage r+1 (0 when r == m)
};

CombineResult combine_stages(const std::vector<double>& p_values,
                             const std::vector<double>& weights,
                             const Boundaries& bounds);

/// Planning inputs: control-group model whose `delta` fields carry the
/// transition-wise hazard ratios of the experimental group.
struct PlanningAssumptions {
  MultiStateModel model;
  AccrualPlan accrual;
  double dropout_rate = 0.0;
};

/// Per-stage drift and covariance increments on the per-patient scale:
/// E[dU_r] = sqrt(n) * dtheta_r, Cov[dU_r] = dV_r. Drift components are
/// reported with the positive-under-benefit sign convention (the raw
/// statistic drifts to -sqrt(n)*theta when hazard ratios are < 1); the
/// noncentrality n*eta_r is invariant to that choice.
struct PlanningMoments {
  std::vector<std::vector<double>> dtheta;  // [stage][event]
  std::vector<SymMatrix> dv;                // [stage]
  std::vector<double> eta;                  // per-patient eta_r
};

PlanningMoments planning_moments(const PlanningAssumptions& assumptions,
                                 const std::vector<EventDefinition>& events,
                                 const DesignSpec& design, int quad_panels = 4096);

/// Drift/covariance of the cumulative statistic at one calendar time
/// (building block of planning_moments; also used for conditional power).
std::pair<std::vector<double>, SymMatrix> planning_moments_at(
    const PlanningAssumptions& assumptions, const std::vector<EventDefinition>& events,
    double t, int quad_panels = 4096);

/// Overall rejection probability of the sequential procedure at total
/// sample size n, by Monte Carlo over the independent stagewise normal
/// increments (seeded, shard-stable).
double design_power(const PlanningMoments& moments, const DesignSpec& design,
                    const Boundaries& bounds, double n, std::size_t draws = 1'000'000,
                    std::uint64_t seed = 20240901);

/// Smallest total n with design_power >= target (integer bisection with
/// common random numbers). Throws when the target is unreachable at 1e6.
long required_sample_size(const PlanningMoments& moments, const DesignSpec& design,
                          const Boundaries& bounds, double target,
                          std::size_t draws = 200'000, std::uint64_t seed = 20240901);

/// Occurrence/exposure estimate for one transition in one group.
struct RateEstimate {
  long events = 0;
  double exposure = 0.0;
  std::optional<double> rate;  // missing when exposure == 0
};

/// Per-group homogeneous intensity MLEs from the data observed at calendar
/// time t: events / time-at-risk for each of the model's transitions,
/// keyed by (from, to). Rate is missing when the source state has zero
/// observed exposure.
std::map<std::pair<int, int>, RateEstimate> estimate_intensities(const Cohort& cohort,
                                                                 const MultiStateModel& model,
                                                                 double t, int group);

struct RecalcDecision {
  double p1 = 1.0;
  double conditional_level = 0.0;
  std::map<std::pair<int, int>, RateEstimate> rates[2];
  std::vector<TransitionIntensity> updated;   // estimated control rates + ratios
  std::vector<std::pair<int, int>> fallbacks; // transitions kept at planning values
  std::vector<std::pair<double, double>> psi_curve;  // (a_add, psi) samples
  int branch = 0;                  // which arm of the four-branch rule fired
  double a_add = 0.0;
  double new_accrual_duration = 0.0;   // t1 + a_add
  double new_final_time = 0.0;         // t1 + a_add + f
  double projected_n = 0.0;            // rate * (t1 + a_add)
};

/// Interim accrual re-calculation at the first analysis of a
/// two-stage design: estimates per-group homogeneous rates, computes the
/// conditional power psi(a_add) of the updated design at the conditional
/// level implied by the observed stage-1 p-value, and applies the
/// four-branch rule on [a_min, a_max] (bisection tolerance 0.01 for the
/// psi = target crossing). a_add counts from the interim time; the new
/// accrual period is t1 + a_add and the final analysis t1 + a_add + f.
RecalcDecision accrual_recalc(const Cohort& interim_cohort,
                              const PlanningAssumptions& assumptions,
                              const std::vector<EventDefinition>& events,
                              const DesignSpec& design, const Boundaries& bounds,
                              double a_min, double a_max, double target_power = 0.8,
                              int quad_panels = 1024);

/// Conditional power of the updated two-stage design for a given extension
/// (exposed for trace output and tests).
double conditional_power(const PlanningAssumptions& updated,
                         const std::vector<EventDefinition>& events, double t1,
                         double a_add, double followup, double rate,
                         double conditional_level, int quad_panels = 1024);

}  // namespace msmtrial
