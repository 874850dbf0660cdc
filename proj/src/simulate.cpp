#include "msmtrial/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "msmtrial/dist.hpp"
#include "msmtrial/rng.hpp"

namespace msmtrial {

void ScenarioConfig::validate() const {
  design.validate();
  if (!seed_set) throw std::invalid_argument("scenario seed is mandatory");
  if (replicates < 1) throw std::invalid_argument("need at least one replicate");
  if (mode == TrialMode::fixed) {
    if (n < 1) throw std::invalid_argument("fixed-design scenarios need n >= 1");
  } else {
    if (design.stages != 2)
      throw std::invalid_argument("adaptive scenarios use a two-stage design");
    if (!(planning.accrual.rate > 0.0))
      throw std::invalid_argument("adaptive scenarios need a positive accrual rate");
    if (a_add_min > a_add_max)
      throw std::invalid_argument("a_add_min must not exceed a_add_max");
  }
  if (truth && truth->n_states() != planning.model.n_states())
    throw std::invalid_argument("truth and planning models must share the state space");
}

Cohort simulate_patients(const ScenarioConfig& config, long replicate_index, long count,
                         double horizon) {
  const MultiStateModel& gen = config.generating_model();
  RngStream rng(config.seed, static_cast<std::uint64_t>(replicate_index));
  Cohort cohort;
  cohort.reserve(count);
  const double a = config.planning.accrual.duration;
  const double rate = config.planning.accrual.rate;
  for (long i = 0; i < count; ++i) {
    PatientRecord rec;
    rec.id = i + 1;
    rec.group = static_cast<int>(i % 2);
    const double u = rng.uniform();
    rec.entry = config.arrivals == ArrivalProcess::iid_uniform
                    ? a * u
                    : (static_cast<double>(i) + 1.0 - u) / rate;
    if (config.planning.dropout_rate > 0.0)
      rec.dropout = rng.exponential(config.planning.dropout_rate);
    rec.path = sample_path(gen, rec.group, horizon, rng);
    cohort.push_back(std::move(rec));
  }
  return cohort;
}

namespace {

struct StageEval {
  double p = 1.0;
  bool rank_deficient = false;
};

StageEval eval_stage(const Cohort& cohort, const std::vector<EventDefinition>& events,
                     double t_prev, double t_now, std::size_t n_scale) {
  Statistics now = compute_statistics(cohort, events, {}, t_now, n_scale);
  std::vector<double> du = now.u.values;
  SymMatrix dv = now.v.values;
  if (t_prev > 0.0) {
    const Statistics prev = compute_statistics(cohort, events, {}, t_prev, n_scale);
    for (std::size_t c = 0; c < du.size(); ++c) du[c] -= prev.u.values[c];
    dv -= prev.v.values;
  }
  const StageResult sr = stage_statistic(du, dv);
  return {sr.p, sr.rank_deficient};
}

}  // namespace

ReplicateOutcome run_replicate(const ScenarioConfig& config, const Boundaries& bounds,
                               long replicate_index) {
  config.validate();
  const auto w = config.design.effective_weights();
  const auto& times = config.design.analysis_times;
  const double a_plan = config.planning.accrual.duration;
  ReplicateOutcome out;

  if (config.mode == TrialMode::fixed) {
    if (config.n < 1) throw std::invalid_argument("empty cohort");
    const double horizon = times.back();
    const Cohort cohort = simulate_patients(config, replicate_index, config.n, horizon);
    double score = 0.0;
    double t_prev = 0.0;
    for (int r = 0; r < config.design.stages; ++r) {
      const StageEval ev = eval_stage(cohort, config.events, t_prev, times[r], cohort.size());
      out.flagged = out.flagged || ev.rank_deficient;
      score += w[r] * norm_isf(ev.p);
      const double b_r = bounds.z_thresholds[r] * std::sqrt(bounds.info_fractions[r]);
      if (score >= b_r) {
        out.rejected = true;
        out.stage = r + 1;
        break;
      }
      t_prev = times[r];
    }
    const double t_stop = out.rejected ? times[out.stage - 1] : times.back();
    out.accrual_duration = std::min(a_plan, t_stop);
    return out;
  }

  // adaptive: two stages, rate-driven enrollment, extension decided at t1
  const double t1 = times[0];
  const double f = config.planning.accrual.followup;
  const double rate = config.planning.accrual.rate;
  const double horizon = t1 + config.a_add_max + f;
  const long n_max =
      static_cast<long>(std::ceil(rate * (t1 + config.a_add_max))) + 1;
  const Cohort panel = simulate_patients(config, replicate_index, n_max, horizon);

  const auto enrolled_by = [&](double cutoff) {
    Cohort sub;
    for (const auto& rec : panel)
      if (rec.entry <= cutoff) sub.push_back(rec);
    return sub;
  };

  const Cohort interim = enrolled_by(t1);
  if (interim.empty()) throw std::invalid_argument("empty interim cohort");
  const StageEval ev1 = eval_stage(interim, config.events, 0.0, t1, interim.size());
  out.flagged = ev1.rank_deficient;
  double score = w[0] * norm_isf(ev1.p);
  if (score >= bounds.z_thresholds[0] * std::sqrt(bounds.info_fractions[0])) {
    out.rejected = true;
    out.stage = 1;
    out.accrual_duration = std::min(a_plan, t1);
    return out;
  }

  const RecalcDecision dec = accrual_recalc(
      interim, config.planning, config.events, config.design, bounds, config.a_add_min,
      config.a_add_max, config.conditional_target, config.recalc_quad_panels);
  out.a_add = dec.a_add;

  const double t2 = t1 + dec.a_add + f;
  const Cohort full = enrolled_by(t1 + dec.a_add);
  const StageEval ev2 = eval_stage(full, config.events, t1, t2, full.size());
  out.flagged = out.flagged || ev2.rank_deficient;
  score += w[1] * norm_isf(ev2.p);
  if (score >= bounds.z_thresholds[1] * std::sqrt(bounds.info_fractions[1])) {
    out.rejected = true;
    out.stage = 2;
  }
  out.accrual_duration = t1 + dec.a_add;
  return out;
}

ScenarioResult run_scenario(const ScenarioConfig& config, int threads,
                            const ProgressFn& progress) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto weights = config.design.effective_weights();
  std::vector<double> fractions(weights.size());
  double acc = 0.0;
  for (std::size_t r = 0; r < weights.size(); ++r) {
    acc += weights[r] * weights[r];
    fractions[r] = acc;
  }
  const Boundaries bounds = sequential_boundaries(config.design.family, config.design.stages,
                                                  config.design.alpha, fractions,
                                                  config.design.custom_z);

  const long reps = config.replicates;
  std::vector<ReplicateOutcome> outcomes(reps);
  int hw = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;

  std::atomic<long> next{0};
  std::atomic<long> done{0};
  auto worker = [&]() {
    for (;;) {
      const long k = next.fetch_add(1);
      if (k >= reps) return;
      outcomes[k] = run_replicate(config, bounds, k);
      const long d = done.fetch_add(1) + 1;
      if (progress && (d % 500 == 0 || d == reps)) progress(d, reps);
    }
  };
  if (hw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < hw; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ScenarioResult res;
  res.name = config.name;
  res.replicates = reps;
  res.reject_by_stage.assign(config.design.stages, 0);
  double dur = 0.0, aadd = 0.0;
  long cont = 0;
  for (const auto& o : outcomes) {
    if (o.rejected) {
      ++res.rejected;
      ++res.reject_by_stage[o.stage - 1];
    }
    if (o.flagged) ++res.flagged;
    dur += o.accrual_duration;
    if (config.mode == TrialMode::adaptive && !(o.rejected && o.stage == 1)) {
      aadd += o.a_add;
      ++cont;
    }
  }
  res.rejection_rate = static_cast<double>(res.rejected) / reps;
  res.rate_se = std::sqrt(res.rejection_rate * (1.0 - res.rejection_rate) / reps);
  res.mean_accrual = dur / reps;
  res.mean_a_add = cont > 0 ? aadd / cont : 0.0;
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

CalibrationResult calibrate_sample_size(const ScenarioConfig& config_template, double target,
                                        long replicates, int threads) {
  if (!(target > 0.0 && target < 1.0))
    throw std::invalid_argument("target power must lie in (0,1)");
  ScenarioConfig cfg = config_template;
  cfg.replicates = replicates;
  if (cfg.n < 1) cfg.n = 2;  // the search assigns the real candidates
  cfg.validate();
  if (cfg.mode != TrialMode::fixed)
    throw std::invalid_argument("sample-size calibration works on fixed designs");

  // analytic seed under the generating truth
  PlanningAssumptions truth_plan = cfg.planning;
  truth_plan.model = cfg.generating_model();
  const PlanningMoments moments = planning_moments(truth_plan, cfg.events, cfg.design);
  const auto weights = cfg.design.effective_weights();
  std::vector<double> fractions(weights.size());
  double acc = 0.0;
  for (std::size_t r = 0; r < weights.size(); ++r) {
    acc += weights[r] * weights[r];
    fractions[r] = acc;
  }
  const Boundaries bounds = sequential_boundaries(cfg.design.family, cfg.design.stages,
                                                  cfg.design.alpha, fractions,
                                                  cfg.design.custom_z);
  long analytic = 0;
  bool analytic_failed = false;
  try {
    analytic = required_sample_size(moments, cfg.design, bounds, target);
  } catch (const std::exception&) {
    // degenerate targets (at or below the attainable level) have no analytic
    // seed; fall back to a small bracket and search empirically
    analytic_failed = true;
    analytic = 16;
  }

  const double se = std::sqrt(target * (1.0 - target) / replicates);
  std::vector<std::pair<long, double>> seen;
  auto empirical = [&](long n) {
    cfg.n = n;
    const double p = run_scenario(cfg, threads).rejection_rate;
    for (const auto& [n0, p0] : seen) {
      const bool bad = (n > n0 && p < p0 - 4.0 * se) || (n < n0 && p > p0 + 4.0 * se);
      if (bad)
        throw std::runtime_error("non-monotone empirical power beyond MC noise: n=" +
                                 std::to_string(n0) + " -> " + std::to_string(p0) +
                                 " vs n=" + std::to_string(n) + " -> " + std::to_string(p));
    }
    seen.emplace_back(n, p);
    return p;
  };

  long lo = std::max(2L, analytic / 2), hi = analytic;
  while (empirical(hi) < target) {
    lo = hi;
    hi = hi * 3 / 2 + 1;
    if (hi > 4 * analytic + 1000)
      throw std::runtime_error("empirical power stays below target far beyond the analytic n");
  }
  while (empirical(lo) >= target && lo > 2) {
    hi = lo;
    lo = std::max(2L, lo / 2);
  }
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    (empirical(mid) >= target ? hi : lo) = mid;
  }
  CalibrationResult out;
  out.n = hi;
  out.analytic_n = analytic;
  cfg.n = hi;
  out.power_at_n = run_scenario(cfg, threads).rejection_rate;
  out.flagged = analytic_failed ||
                std::fabs(static_cast<double>(out.n) - analytic) >
                    0.2 * static_cast<double>(analytic);
  return out;
}

}  // namespace msmtrial
