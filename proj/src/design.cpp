#include "msmtrial/design.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "msmtrial/dist.hpp"
#include "msmtrial/rng.hpp"

namespace msmtrial {

std::vector<double> DesignSpec::effective_weights() const {
  if (!weights.empty()) return weights;
  return std::vector<double>(stages, 1.0 / std::sqrt(static_cast<double>(stages)));
}

void DesignSpec::validate() const {
  if (stages < 1) throw std::invalid_argument("need at least one stage");
  if (static_cast<int>(analysis_times.size()) != stages)
    throw std::invalid_argument("analysis_times must have one entry per stage");
  double prev = 0.0;
  for (double t : analysis_times) {
    if (t <= prev) throw std::invalid_argument("analysis times must be strictly increasing");
    prev = t;
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  if (!weights.empty()) {
    if (static_cast<int>(weights.size()) != stages)
      throw std::invalid_argument("weights must have one entry per stage");
    double ss = 0.0;
    for (double w : weights) {
      if (!(w > 0.0)) throw std::invalid_argument("weights must be positive");
      ss += w * w;
    }
    if (std::fabs(ss - 1.0) > 1e-8)
      throw std::invalid_argument("combination weights must have unit sum of squares");
  }
  if (family == BoundaryFamily::custom &&
      static_cast<int>(custom_z.size()) != stages)
    throw std::invalid_argument("custom boundaries need one z-threshold per stage");
}

// ------------------------------------------------- boundary computation

double sequential_crossing_prob(const std::vector<double>& z_thresholds,
                                const std::vector<double>& info_fractions, double tol) {
  const std::size_t m = z_thresholds.size();
  if (m == 0 || info_fractions.size() != m)
    throw std::invalid_argument("thresholds and information fractions must align");
  std::vector<double> b(m), v(m);
  for (std::size_t r = 0; r < m; ++r) {
    b[r] = z_thresholds[r] * std::sqrt(info_fractions[r]);
    v[r] = info_fractions[r] - (r ? info_fractions[r - 1] : 0.0);
    if (!(v[r] > 0.0)) throw std::invalid_argument("information fractions must increase");
  }
  if (m == 1) return norm_sf(z_thresholds[0]);

  auto run = [&](int grid_n) {
    // density of the continuing score after each stage, composite Simpson
    std::vector<double> x(grid_n + 1), g(grid_n + 1);
    double lo = -8.0 * std::sqrt(info_fractions[0]);
    double hi = b[0];
    double sd = std::sqrt(v[0]);
    for (int i = 0; i <= grid_n; ++i) {
      x[i] = lo + (hi - lo) * i / grid_n;
      g[i] = std::exp(-0.5 * x[i] * x[i] / v[0]) / (sd * 2.5066282746310005);
    }
    for (std::size_t r = 1; r < m; ++r) {
      const double lon = -8.0 * std::sqrt(info_fractions[r]);
      const double hin = b[r];
      const double h = (hi - lo) / grid_n;
      sd = std::sqrt(v[r]);
      std::vector<double> xn(grid_n + 1), gn(grid_n + 1);
      for (int i = 0; i <= grid_n; ++i) xn[i] = lon + (hin - lon) * i / grid_n;
      for (int i = 0; i <= grid_n; ++i) {
        double acc = 0.0;
        for (int k = 0; k <= grid_n; ++k) {
          const double w = (k == 0 || k == grid_n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
          const double dz = (xn[i] - x[k]) / sd;
          acc += w * g[k] * std::exp(-0.5 * dz * dz);
        }
        gn[i] = acc * h / 3.0 / (sd * 2.5066282746310005);
      }
      x.swap(xn);
      g.swap(gn);
      lo = lon;
      hi = hin;
    }
    double total = 0.0;
    const double h = (hi - lo) / grid_n;
    for (int i = 0; i <= grid_n; ++i) {
      const double w = (i == 0 || i == grid_n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      total += w * g[i];
    }
    return 1.0 - total * h / 3.0;
  };

  double prev = run(256);
  for (int grid_n = 512; grid_n <= 4096; grid_n *= 2) {
    const double cur = run(grid_n);
    if (std::fabs(cur - prev) < 0.5 * tol) return cur;
    prev = cur;
  }
  return prev;
}

Boundaries sequential_boundaries(BoundaryFamily family, int stages, double alpha,
                                 const std::vector<double>& info_fractions,
                                 const std::vector<double>& custom_z) {
  if (stages < 1) throw std::invalid_argument("need at least one stage");
  if (static_cast<int>(info_fractions.size()) != stages)
    throw std::invalid_argument("need one information fraction per stage");
  Boundaries out;
  out.info_fractions = info_fractions;

  auto thresholds_for = [&](double c) {
    std::vector<double> z(stages);
    for (int r = 0; r < stages; ++r) {
      switch (family) {
        case BoundaryFamily::pocock: z[r] = c; break;
        case BoundaryFamily::obrien_fleming:
          z[r] = c / std::sqrt(info_fractions[r]);
          break;
        case BoundaryFamily::custom: z[r] = custom_z[r]; break;
      }
    }
    return z;
  };

  if (family == BoundaryFamily::custom) {
    if (static_cast<int>(custom_z.size()) != stages)
      throw std::invalid_argument("custom family needs one z-threshold per stage");
    out.z_thresholds = custom_z;
    out.alpha = sequential_crossing_prob(custom_z, info_fractions);
  } else {
    double lo = 0.5, hi = 6.0;
    const double plo = sequential_crossing_prob(thresholds_for(lo), info_fractions);
    const double phi = sequential_crossing_prob(thresholds_for(hi), info_fractions);
    if (!(plo >= alpha && phi <= alpha))
      throw std::runtime_error("boundary search bracket failed");
    for (int it = 0; it < 60 && hi - lo > 1e-9; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double p = sequential_crossing_prob(thresholds_for(mid), info_fractions);
      (p > alpha ? lo : hi) = mid;
    }
    const double c = 0.5 * (lo + hi);
    out.z_thresholds = thresholds_for(c);
    out.alpha = sequential_crossing_prob(out.z_thresholds, info_fractions);
  }
  out.p_thresholds.resize(stages);
  for (int r = 0; r < stages; ++r) out.p_thresholds[r] = norm_sf(out.z_thresholds[r]);
  return out;
}

CombineResult combine_stages(const std::vector<double>& p_values,
                             const std::vector<double>& weights, const Boundaries& bounds) {
  const std::size_t m = bounds.z_thresholds.size();
  if (p_values.empty() || p_values.size() > m)
    throw std::invalid_argument("need between 1 and m stagewise p-values");
  if (weights.size() != m) throw std::invalid_argument("need one weight per stage");
  for (double p : p_values)
    if (!(p > 0.0) || p > 1.0)
      throw std::invalid_argument("stagewise p-values must lie in (0,1]");

  CombineResult res;
  double score = 0.0;
  for (std::size_t r = 0; r < p_values.size(); ++r) {
    const double b_r = bounds.z_thresholds[r] * std::sqrt(bounds.info_fractions[r]);
    res.stage_levels.push_back(norm_sf((b_r - score) / weights[r]));
    score += weights[r] * norm_isf(p_values[r]);
    res.cumulative_z.push_back(score);
    if (score >= b_r) {  // boundary inclusive
      res.reject = true;
      res.decided_stage = static_cast<int>(r + 1);
      break;
    }
  }
  if (!res.reject && p_values.size() < m) {
    const std::size_t r = p_values.size();
    const double b_next = bounds.z_thresholds[r] * std::sqrt(bounds.info_fractions[r]);
    res.next_conditional_level = norm_sf((b_next - score) / weights[r]);
  }
  return res;
}

// --------------------------------------------------- planning moments

namespace {

struct Surfaces {
  // occupation of the stopped model per group on the half-step grid
  std::vector<std::vector<double>> occ[2];
};

}  // namespace

std::pair<std::vector<double>, SymMatrix> planning_moments_at(
    const PlanningAssumptions& assumptions, const std::vector<EventDefinition>& events,
    double t, int quad_panels) {
  const MultiStateModel& model = assumptions.model;
  const std::size_t d = events.size();
  if (d == 0) throw std::invalid_argument("need events");
  const bool first_hit = events[0].mode == EventMode::first_hitting;
  const double rho = assumptions.accrual.allocation;
  const double a = assumptions.accrual.duration;

  // stopping sets: events then pairwise unions (deduped); all-entries mode
  // uses the plain occupation for everything
  std::vector<std::vector<int>> sets;
  std::vector<int> event_set(d), union_set(d * d, -1);
  auto find_or_add = [&](std::vector<int> states) {
    std::sort(states.begin(), states.end());
    states.erase(std::unique(states.begin(), states.end()), states.end());
    for (std::size_t k = 0; k < sets.size(); ++k)
      if (sets[k] == states) return static_cast<int>(k);
    sets.push_back(states);
    return static_cast<int>(sets.size() - 1);
  };
  for (std::size_t c = 0; c < d; ++c) event_set[c] = find_or_add(events[c].states);
  for (std::size_t b = 0; b < d; ++b)
    for (std::size_t c = b + 1; c < d; ++c) {
      std::vector<int> u = events[b].states;
      u.insert(u.end(), events[c].states.begin(), events[c].states.end());
      union_set[b * d + c] = union_set[c * d + b] = find_or_add(std::move(u));
    }

  // half-step grid: panel i spans [grid[2i], grid[2i+2]], midpoint grid[2i+1]
  const int n_pts = 2 * quad_panels + 1;
  std::vector<double> grid(n_pts);
  for (int i = 0; i < n_pts; ++i) grid[i] = t * i / (n_pts - 1);
  grid[0] = 0.0;

  std::vector<Surfaces> surf(sets.size());
  std::vector<std::vector<double>> plain[2];
  for (int g = 0; g < 2; ++g) {
    if (!first_hit) plain[g] = occupation_on_grid(model, g, grid);
    for (std::size_t k = 0; k < sets.size(); ++k) {
      if (first_hit)
        surf[k].occ[g] = occupation_on_grid(model.stopped_at(sets[k]), g, grid);
    }
  }
  auto occ_of = [&](int set_idx, int g) -> const std::vector<std::vector<double>>& {
    return first_hit ? surf[set_idx].occ[g] : plain[g];
  };

  auto mu_at = [&](int set_idx, int j, int mid_idx) {
    const double p1 = occ_of(set_idx, 1)[mid_idx][j];
    const double p0 = occ_of(set_idx, 0)[mid_idx][j];
    const double den = rho * p1 + (1.0 - rho) * p0;
    return den > 0.0 ? rho * p1 / den : rho;
  };

  std::vector<double> theta(d, 0.0);
  SymMatrix v(d);
  const auto& trs = model.transitions();
  for (int panel = 0; panel < quad_panels; ++panel) {
    const int lo = 2 * panel, mid = 2 * panel + 1, hi = 2 * panel + 2;
    const double u_mid = grid[mid];
    const double accr = std::clamp((t - u_mid) / a, 0.0, 1.0);
    if (accr == 0.0) continue;
    const double thin =
        assumptions.dropout_rate > 0.0 ? std::exp(-assumptions.dropout_rate * u_mid) : 1.0;
    const double ca = accr * thin;

    for (std::size_t ti = 0; ti < trs.size(); ++ti) {
      const auto& tr = trs[ti];
      const double dL0 = model.cumulative(static_cast<int>(ti), grid[lo], grid[hi], 0);
      const double dL1 = tr.delta * dL0;
      for (std::size_t c = 0; c < d; ++c) {
        if (!events[c].contains(tr.to) || events[c].contains(tr.from)) continue;
        const int sc = event_set[c];
        const double y1 = rho * occ_of(sc, 1)[mid][tr.from] * ca;
        const double mc = mu_at(sc, tr.from, mid);
        theta[c] += (1.0 - tr.delta) * (1.0 - mc) * y1 * dL0;
      }
      for (std::size_t b = 0; b < d; ++b)
        for (std::size_t c = b; c < d; ++c) {
          const bool enters_both = events[b].contains(tr.to) && events[c].contains(tr.to);
          const bool outside_both =
              !events[b].contains(tr.from) && !events[c].contains(tr.from);
          if (!enters_both || !outside_both) continue;
          const int su = (b == c) ? event_set[b] : union_set[b * d + c];
          const double y1u = rho * occ_of(su, 1)[mid][tr.from] * ca;
          const double y0u = (1.0 - rho) * occ_of(su, 0)[mid][tr.from] * ca;
          const double mb = mu_at(event_set[b], tr.from, mid);
          const double mc = mu_at(event_set[c], tr.from, mid);
          v(b, c) += y1u * dL1 * (1.0 - mb) * (1.0 - mc) + y0u * dL0 * mb * mc;
        }
    }
  }
  for (std::size_t b = 0; b < d; ++b)
    for (std::size_t c = b + 1; c < d; ++c) v(c, b) = v(b, c);
  return {theta, v};
}

PlanningMoments planning_moments(const PlanningAssumptions& assumptions,
                                 const std::vector<EventDefinition>& events,
                                 const DesignSpec& design, int quad_panels) {
  design.validate();
  const std::size_t d = events.size();

  auto compute = [&](int panels) {
    PlanningMoments m;
    std::vector<double> prev_t(d, 0.0);
    SymMatrix prev_v(d);
    for (double t : design.analysis_times) {
      auto [th, vv] = planning_moments_at(assumptions, events, t, panels);
      std::vector<double> dth(d);
      for (std::size_t c = 0; c < d; ++c) dth[c] = th[c] - prev_t[c];
      SymMatrix dv = vv - prev_v;
      try {
        const auto z = standardize_cholesky(dth, dv);
        double eta = 0.0;
        for (double zi : z) eta += zi * zi;
        m.eta.push_back(eta);
      } catch (const not_positive_definite&) {
        throw std::invalid_argument(
            "planning covariance increment is singular; check invertibility_report "
            "for this model/event configuration");
      }
      m.dtheta.push_back(std::move(dth));
      m.dv.push_back(std::move(dv));
      prev_t = th;
      prev_v = vv;
    }
    return m;
  };

  PlanningMoments coarse = compute(quad_panels);
  for (int panels = 2 * quad_panels; panels <= 16 * quad_panels; panels *= 2) {
    PlanningMoments fine = compute(panels);
    double rel = 0.0;
    for (std::size_t r = 0; r < coarse.eta.size(); ++r) {
      const double scale = std::max({std::fabs(fine.eta[r]), std::fabs(coarse.eta[r]), 1e-12});
      rel = std::max(rel, std::fabs(fine.eta[r] - coarse.eta[r]) / scale);
    }
    if (rel < 1e-7) return fine;
    coarse = std::move(fine);
  }
  return coarse;
}

// ------------------------------------------------------ power and size

double design_power(const PlanningMoments& moments, const DesignSpec& design,
                    const Boundaries& bounds, double n, std::size_t draws,
                    std::uint64_t seed) {
  design.validate();
  const std::size_t m = moments.dtheta.size();
  const std::size_t d = moments.dtheta.empty() ? 0 : moments.dtheta[0].size();
  if (m != static_cast<std::size_t>(design.stages))
    throw std::invalid_argument("moments do not match the design's stage count");
  const auto w = design.effective_weights();

  // mean of the standardized increment: sqrt(n) * L_r^{-1} dtheta_r
  std::vector<std::vector<double>> mean(m);
  for (std::size_t r = 0; r < m; ++r) {
    const auto L = cholesky_lower(moments.dv[r]);
    auto z = forward_solve(L, d, moments.dtheta[r]);
    for (double& zi : z) zi *= std::sqrt(n);
    mean[r] = std::move(z);
  }
  std::vector<double> score_bound(m);
  for (std::size_t r = 0; r < m; ++r)
    score_bound[r] = bounds.z_thresholds[r] * std::sqrt(bounds.info_fractions[r]);

  constexpr std::size_t kShards = 64;
  const std::size_t per_shard = (draws + kShards - 1) / kShards;
  std::vector<std::size_t> hits(kShards, 0), counts(kShards, 0);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());

  auto run_shard = [&](std::size_t shard) {
    RngStream rng(seed, shard + 1);
    std::size_t local_hits = 0;
    const std::size_t todo = std::min(per_shard, draws - std::min(draws, shard * per_shard));
    for (std::size_t i = 0; i < todo; ++i) {
      double score = 0.0;
      bool rejected = false;
      for (std::size_t r = 0; r < m && !rejected; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double x = mean[r][c] + rng.normal();
          s += x * x;
        }
        const double p = (d == 2) ? std::exp(-0.5 * s) : chi2_sf(s, static_cast<unsigned>(d));
        score += w[r] * norm_isf(p);
        if (score >= score_bound[r]) rejected = true;
      }
      if (rejected) ++local_hits;
    }
    hits[shard] = local_hits;
    counts[shard] = todo;
  };

  if (hw >= 2 && draws >= 100000) {
    const unsigned workers = std::min<unsigned>(hw, 4);
    std::vector<std::thread> pool;
    for (unsigned th = 0; th < workers; ++th)
      pool.emplace_back([&, th]() {
        for (std::size_t s = th; s < kShards; s += workers) run_shard(s);
      });
    for (auto& th : pool) th.join();
  } else {
    for (std::size_t s = 0; s < kShards; ++s) run_shard(s);
  }
  std::size_t total_hits = 0, total = 0;
  for (std::size_t s = 0; s < kShards; ++s) {
    total_hits += hits[s];
    total += counts[s];
  }
  return static_cast<double>(total_hits) / static_cast<double>(total);
}

long required_sample_size(const PlanningMoments& moments, const DesignSpec& design,
                          const Boundaries& bounds, double target, std::size_t draws,
                          std::uint64_t seed) {
  if (!(target > 0.0 && target < 1.0))
    throw std::invalid_argument("target power must lie in (0,1)");
  double drift = 0.0;
  for (const auto& th : moments.dtheta)
    for (double x : th) drift += std::fabs(x);
  if (drift == 0.0)
    throw std::invalid_argument("target power unreachable: planning drift is zero");

  long lo = 1, hi = 64;
  while (design_power(moments, design, bounds, static_cast<double>(hi), draws, seed) < target) {
    lo = hi;
    hi *= 2;
    if (hi > 1'000'000)
      throw std::runtime_error("target power unreachable below n = 1e6");
  }
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    if (design_power(moments, design, bounds, static_cast<double>(mid), draws, seed) >= target)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

// --------------------------------------------- interim estimation, recalc

std::map<std::pair<int, int>, RateEstimate> estimate_intensities(const Cohort& cohort,
                                                                 const MultiStateModel& model,
                                                                 double t, int group) {
  std::vector<double> exposure(model.n_states(), 0.0);
  std::map<std::pair<int, int>, long> counts;
  for (const auto& rec : cohort) {
    if (rec.group != group) continue;
    const ObservedRecord obs = observe_at(rec, t);
    if (obs.censor <= 0.0) continue;
    int state = 0;
    double last = 0.0;
    for (const auto& j : obs.jumps) {
      if (state < model.n_states()) exposure[state] += j.time - last;
      counts[{state, j.state}] += 1;
      state = j.state;
      last = j.time;
    }
    if (state < model.n_states()) exposure[state] += obs.censor - last;
  }
  std::map<std::pair<int, int>, RateEstimate> out;
  for (const auto& tr : model.transitions()) {
    RateEstimate est;
    const auto it = counts.find({tr.from, tr.to});
    est.events = it == counts.end() ? 0 : it->second;
    est.exposure = exposure[tr.from];
    if (est.exposure > 0.0) est.rate = static_cast<double>(est.events) / est.exposure;
    out[{tr.from, tr.to}] = est;
  }
  return out;
}

double conditional_power(const PlanningAssumptions& updated,
                         const std::vector<EventDefinition>& events, double t1,
                         double a_add, double followup, double rate,
                         double conditional_level, int quad_panels) {
  if (conditional_level <= 0.0) return 0.0;
  if (conditional_level >= 1.0) return 1.0;
  PlanningAssumptions plan = updated;
  plan.accrual.duration = t1 + a_add;
  const double t2 = t1 + a_add + followup;
  const double n2 = rate * (t1 + a_add);
  auto [theta, v] = planning_moments_at(plan, events, t2, quad_panels);
  std::size_t rank = 0;
  const SymMatrix pinv = pseudo_inverse(v, kPinvRelTol, &rank);
  const double eta = std::max(0.0, quad_form(pinv, theta));
  const double q = chi2_isf(conditional_level, static_cast<unsigned>(events.size()));
  return nc_chi2_sf(q, static_cast<unsigned>(events.size()), n2 * eta);
}

RecalcDecision accrual_recalc(const Cohort& interim_cohort,
                              const PlanningAssumptions& assumptions,
                              const std::vector<EventDefinition>& events,
                              const DesignSpec& design, const Boundaries& bounds,
                              double a_min, double a_max, double target_power,
                              int quad_panels) {
  if (a_min > a_max) throw std::invalid_argument("a_min must not exceed a_max");
  if (interim_cohort.empty()) throw std::invalid_argument("empty interim cohort");
  if (design.stages != 2)
    throw std::invalid_argument("accrual recalculation expects a two-stage design");
  if (!assumptions.model.homogeneous())
    throw std::invalid_argument(
        "intensity estimation assumes a time-homogeneous model (all gamma == 1)");

  const double t1 = design.analysis_times[0];
  const double followup = assumptions.accrual.followup;

  RecalcDecision dec;
  const Statistics st = compute_statistics(interim_cohort, events, {}, t1);
  const StageResult sr = stage_statistic(st.u.values, st.v.values);
  dec.p1 = sr.p;
  const CombineResult comb = combine_stages({dec.p1}, design.effective_weights(), bounds);
  dec.conditional_level = comb.reject ? 1.0 : comb.next_conditional_level;

  // per-group occurrence/exposure MLEs for the model's transitions
  PlanningAssumptions updated = assumptions;
  for (int g = 0; g < 2; ++g)
    dec.rates[g] = estimate_intensities(interim_cohort, assumptions.model, t1, g);
  std::vector<TransitionIntensity> newtr;
  for (const auto& tr : assumptions.model.transitions()) {
    const RateEstimate& e0 = dec.rates[0][{tr.from, tr.to}];
    const RateEstimate& e1 = dec.rates[1][{tr.from, tr.to}];
    TransitionIntensity up = tr;
    if (e0.rate && e1.rate && *e0.rate > 0.0) {
      up.lambda = *e0.rate;
      up.delta = *e1.rate / *e0.rate;
    } else {
      dec.fallbacks.emplace_back(tr.from, tr.to);  // keep planning values
    }
    newtr.push_back(up);
  }
  updated.model = MultiStateModel(assumptions.model.n_states(), newtr);
  dec.updated = newtr;

  const double rate = assumptions.accrual.rate;
  auto psi = [&](double a_add) {
    return conditional_power(updated, events, t1, a_add, followup, rate,
                             dec.conditional_level, quad_panels);
  };

  const double psi_min = psi(a_min);
  dec.psi_curve.emplace_back(a_min, psi_min);
  if (psi_min >= target_power) {
    dec.branch = 1;
    dec.a_add = a_min;
  } else {
    const double psi_max = psi(a_max);
    dec.psi_curve.emplace_back(a_max, psi_max);
    if (psi_max >= target_power) {
      dec.branch = 2;
      double lo = a_min, hi = a_max;
      while (hi - lo > 0.01) {
        const double mid = 0.5 * (lo + hi);
        (psi(mid) >= target_power ? hi : lo) = mid;
      }
      dec.a_add = hi;
      dec.psi_curve.emplace_back(hi, psi(hi));
    } else if (psi_max >= 0.5) {
      dec.branch = 3;
      dec.a_add = a_max;
    } else {
      dec.branch = 4;
      dec.a_add = a_min;
    }
  }
  dec.new_accrual_duration = t1 + dec.a_add;
  dec.new_final_time = t1 + dec.a_add + followup;
  dec.projected_n = rate * dec.new_accrual_duration;
  return dec;
}

}  // namespace msmtrial
