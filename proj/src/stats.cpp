#include "msmtrial/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <stdexcept>

#include "msmtrial/dist.hpp"

namespace msmtrial {

namespace {

std::uint64_t state_mask(const std::vector<int>& states) {
  std::uint64_t m = 0;
  for (int s : states) m |= (1ULL << s);
  return m;
}

struct SweepUpdate {
  double time;
  int kind;  // 0 = jump, 1 = censor exit
  int patient;
  int from;
  int to;
};

void validate_events(const std::vector<EventDefinition>& events) {
  if (events.empty()) throw std::invalid_argument("need at least one event definition");
  for (const auto& e : events) {
    if (e.states.empty()) throw std::invalid_argument("event '" + e.name + "' has no states");
    for (int s : e.states) {
      if (s == 0) throw std::invalid_argument("event '" + e.name + "' contains the initial state");
      if (s < 0 || s >= 64) throw std::invalid_argument("event state out of range");
    }
  }
  for (std::size_t i = 1; i < events.size(); ++i)
    if (events[i].mode != events[0].mode)
      throw std::invalid_argument("all events of one analysis must share the counting mode");
}

}  // namespace

Statistics compute_statistics(const Cohort& cohort, const std::vector<EventDefinition>& events,
                              const WeightFunction& weight, double t, std::size_t n_scale) {
  validate_events(events);
  if (cohort.empty()) throw std::invalid_argument("empty cohort");
  const std::size_t d = events.size();
  const std::size_t n = n_scale ? n_scale : cohort.size();
  const bool first_hit = events[0].mode == EventMode::first_hitting;

  int n_states = 1;
  for (const auto& rec : cohort)
    for (const auto& j : rec.path.jumps) n_states = std::max(n_states, j.state + 1);
  for (const auto& e : events)
    for (int s : e.states) n_states = std::max(n_states, s + 1);
  if (n_states > 64) throw std::invalid_argument("more than 64 states not supported");

  // stopping sets: the events themselves, then the pairwise unions (deduped)
  std::vector<std::uint64_t> masks(d);
  for (std::size_t c = 0; c < d; ++c) masks[c] = state_mask(events[c].states);
  std::vector<std::uint64_t> sets(masks);
  std::vector<std::vector<int>> union_idx(d, std::vector<int>(d, -1));
  for (std::size_t b = 0; b < d; ++b)
    for (std::size_t c = b + 1; c < d; ++c) {
      const std::uint64_t u = masks[b] | masks[c];
      int idx = -1;
      for (std::size_t k = 0; k < sets.size(); ++k)
        if (sets[k] == u) {
          idx = static_cast<int>(k);
          break;
        }
      if (idx < 0) {
        idx = static_cast<int>(sets.size());
        sets.push_back(u);
      }
      union_idx[b][c] = union_idx[c][b] = idx;
    }
  const std::size_t ns = sets.size();

  // observations and the update timeline
  std::vector<int> group, cur_state;
  std::vector<SweepUpdate> updates;
  int np = 0;
  for (const auto& rec : cohort) {
    const ObservedRecord obs = observe_at(rec, t);
    if (obs.censor <= 0.0) continue;
    const int pid = np++;
    group.push_back(obs.group);
    cur_state.push_back(0);
    int prev = 0;
    for (const auto& j : obs.jumps) {
      updates.push_back({j.time, 0, pid, prev, j.state});
      prev = j.state;
    }
    updates.push_back({obs.censor, 1, pid, prev, prev});
  }
  std::sort(updates.begin(), updates.end(), [](const SweepUpdate& a, const SweepUpdate& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.kind < b.kind;
  });

  // counts: plain and per stopping set, by stratum
  std::vector<double> U(d, 0.0);
  SymMatrix V(d);
  std::vector<int> Y(n_states, 0), Y1(n_states, 0);
  std::vector<std::vector<int>> Ys, Ys1;
  std::vector<std::vector<char>> active;  // [set][patient]
  if (first_hit) {
    Ys.assign(ns, std::vector<int>(n_states, 0));
    Ys1.assign(ns, std::vector<int>(n_states, 0));
    active.assign(ns, std::vector<char>(np, 1));
  }
  Y[0] = np;
  for (int p = 0; p < np; ++p)
    if (group[p] == 1) Y1[0] += 1;
  if (first_hit)
    for (std::size_t k = 0; k < ns; ++k) {
      Ys[k][0] = Y[0];
      Ys1[k][0] = Y1[0];
    }

  std::size_t i = 0;
  while (i < updates.size()) {
    const double s = updates[i].time;
    std::size_t j = i;
    while (j < updates.size() && updates[j].time == s) ++j;

    // contributions at s use the s- risk sets
    for (std::size_t k = i; k < j; ++k) {
      const auto& up = updates[k];
      if (up.kind != 0) continue;
      const double z = group[up.patient];
      for (std::size_t c = 0; c < d; ++c) {
        const bool enters = (masks[c] >> up.to) & 1u;
        const bool from_outside = !((masks[c] >> up.from) & 1u);
        if (!enters || !from_outside) continue;
        const double w = weight ? weight(up.from, up.to, t, s) : 1.0;
        if (first_hit) {
          if (!active[c][up.patient]) continue;
          const double p = static_cast<double>(Ys1[c][up.from]) / Ys[c][up.from];
          U[c] += w * (z - p);
          V(c, c) += w * w * p * (1.0 - p);
        } else {
          const double p = static_cast<double>(Y1[up.from]) / Y[up.from];
          U[c] += w * (z - p);
          V(c, c) += w * w * p * (1.0 - p);
        }
      }
      for (std::size_t b = 0; b < d; ++b) {
        for (std::size_t c = b + 1; c < d; ++c) {
          const std::uint64_t inter = masks[b] & masks[c];
          const std::uint64_t uni = masks[b] | masks[c];
          if (!((inter >> up.to) & 1u) || ((uni >> up.from) & 1u)) continue;
          const double w = weight ? weight(up.from, up.to, t, s) : 1.0;
          if (first_hit) {
            const int ui = union_idx[b][c];
            if (!active[ui][up.patient]) continue;
            const double yu = Ys[ui][up.from];
            const double y1u = Ys1[ui][up.from];
            const double pb = static_cast<double>(Ys1[b][up.from]) / Ys[b][up.from];
            const double pc = static_cast<double>(Ys1[c][up.from]) / Ys[c][up.from];
            V(b, c) += w * w *
                       (y1u * (1.0 - pb) * (1.0 - pc) + (yu - y1u) * pb * pc) / yu;
          } else {
            const double p = static_cast<double>(Y1[up.from]) / Y[up.from];
            V(b, c) += w * w * p * (1.0 - p);
          }
        }
      }
    }

    // state moves, first-hit removals and censor exits
    for (std::size_t k = i; k < j; ++k) {
      const auto& up = updates[k];
      const int z1 = group[up.patient] == 1;
      if (up.kind == 0) {
        Y[up.from] -= 1;
        Y[up.to] += 1;
        Y1[up.from] -= z1;
        Y1[up.to] += z1;
        cur_state[up.patient] = up.to;
        if (first_hit) {
          for (std::size_t sk = 0; sk < ns; ++sk) {
            if (!active[sk][up.patient]) continue;
            Ys[sk][up.from] -= 1;
            Ys1[sk][up.from] -= z1;
            if ((sets[sk] >> up.to) & 1u) {
              active[sk][up.patient] = 0;  // first entry stops the restricted set
            } else {
              Ys[sk][up.to] += 1;
              Ys1[sk][up.to] += z1;
            }
          }
        }
      } else {
        const int cs = cur_state[up.patient];
        Y[cs] -= 1;
        Y1[cs] -= z1;
        if (first_hit) {
          for (std::size_t sk = 0; sk < ns; ++sk) {
            if (!active[sk][up.patient]) continue;
            Ys[sk][cs] -= 1;
            Ys1[sk][cs] -= z1;
            active[sk][up.patient] = 0;
          }
        }
      }
    }
    i = j;
  }

  Statistics out;
  out.n = n;
  out.u.t = t;
  out.u.values.resize(d);
  const double sqn = std::sqrt(static_cast<double>(n));
  for (std::size_t c = 0; c < d; ++c) out.u.values[c] = U[c] / sqn;
  out.v.t = t;
  out.v.values = SymMatrix(d);
  for (std::size_t b = 0; b < d; ++b)
    for (std::size_t c = b; c < d; ++c) {
      const double v = V(b, c) / static_cast<double>(n);
      out.v.values(b, c) = v;
      out.v.values(c, b) = v;
    }
  return out;
}

StatVector u_vector(const Cohort& cohort, const std::vector<EventDefinition>& events,
                    const WeightFunction& weight, double t) {
  return compute_statistics(cohort, events, weight, t).u;
}

CovMatrix covariance_hat(const Cohort& cohort, const std::vector<EventDefinition>& events,
                         const WeightFunction& weight, double t) {
  return compute_statistics(cohort, events, weight, t).v;
}

std::pair<StatVector, CovMatrix> stage_increment(const Cohort& cohort,
                                                 const std::vector<EventDefinition>& events,
                                                 const WeightFunction& weight, double t_prev,
                                                 double t_now) {
  if (t_prev < 0.0 || t_now <= t_prev)
    throw std::invalid_argument("need 0 <= t_prev < t_now");
  Statistics now = compute_statistics(cohort, events, weight, t_now);
  if (t_prev == 0.0) return {now.u, now.v};
  const Statistics prev = compute_statistics(cohort, events, weight, t_prev);
  for (std::size_t c = 0; c < now.u.values.size(); ++c)
    now.u.values[c] -= prev.u.values[c];
  now.v.values -= prev.v.values;
  return {now.u, now.v};
}

std::vector<double> standardize_cholesky(const std::vector<double>& du, const SymMatrix& dv) {
  if (du.size() != dv.dim()) throw std::invalid_argument("dimension mismatch");
  const auto L = cholesky_lower(dv);
  return forward_solve(L, dv.dim(), du);
}

StageResult stage_statistic(const std::vector<double>& du, const SymMatrix& dv) {
  if (du.size() != dv.dim()) throw std::invalid_argument("dimension mismatch");
  const std::size_t d = dv.dim();
  StageResult res;
  res.du = du;
  res.dv = dv;
  std::size_t rank = 0;
  const SymMatrix pinv = pseudo_inverse(dv, kPinvRelTol, &rank);
  res.s = std::max(0.0, quad_form(pinv, du));
  res.p = chi2_sf(res.s, static_cast<unsigned>(d));
  res.rank = rank;
  res.rank_deficient = rank < d;
  if (!res.rank_deficient) {
    try {
      res.z = standardize_cholesky(du, dv);
    } catch (const not_positive_definite&) {
      res.z.reset();
    }
  }
  return res;
}

// ---------------------------------------------------------- invertibility

namespace {

// exact rank of a 0/1 matrix over the rationals (integer Gaussian
// elimination, d and n_trans are small)
std::size_t exact_rank(std::vector<std::vector<long long>> m) {
  if (m.empty()) return 0;
  const std::size_t rows = m.size(), cols = m[0].size();
  std::size_t rank = 0;
  for (std::size_t col = 0; col < cols && rank < rows; ++col) {
    std::size_t piv = rank;
    while (piv < rows && m[piv][col] == 0) ++piv;
    if (piv == rows) continue;
    std::swap(m[rank], m[piv]);
    for (std::size_t r = 0; r < rows; ++r) {
      if (r == rank || m[r][col] == 0) continue;
      const long long a = m[rank][col], b = m[r][col];
      for (std::size_t c2 = 0; c2 < cols; ++c2) m[r][c2] = m[r][c2] * a - m[rank][c2] * b;
    }
    ++rank;
  }
  return rank;
}

bool is_exclusive(const MultiStateModel& model, const std::vector<std::uint64_t>& masks,
                  int ti, std::size_t c, const std::vector<std::size_t>& index_set) {
  const auto& tr = model.transitions()[ti];
  if (((masks[c] >> tr.from) & 1u) || !((masks[c] >> tr.to) & 1u)) return false;
  for (std::size_t other : index_set) {
    if (other == c) continue;
    const bool from_in = (masks[other] >> tr.from) & 1u;
    const bool to_in = (masks[other] >> tr.to) & 1u;
    if (!from_in && to_in) return false;
  }
  return true;
}

bool has_exclusive_transition(const MultiStateModel& model,
                              const std::vector<std::uint64_t>& masks, std::size_t c,
                              const std::vector<std::size_t>& index_set) {
  for (std::size_t ti = 0; ti < model.transitions().size(); ++ti)
    if (is_exclusive(model, masks, static_cast<int>(ti), c, index_set)) return true;
  return false;
}

std::vector<int> in_transitions(const MultiStateModel& model, std::uint64_t mask) {
  std::vector<int> out;
  for (std::size_t ti = 0; ti < model.transitions().size(); ++ti) {
    const auto& tr = model.transitions()[ti];
    if (!((mask >> tr.from) & 1u) && ((mask >> tr.to) & 1u)) out.push_back(static_cast<int>(ti));
  }
  return out;
}

// source of `ti` reachable from state 0 without using transition `avoid`
bool reachable_avoiding(const MultiStateModel& model, int target_state, int avoid_ti) {
  std::vector<bool> seen(model.n_states(), false);
  std::vector<int> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    if (u == target_state) return true;
    for (int ti : model.outgoing(u)) {
      if (ti == avoid_ti) continue;
      const int k = model.transitions()[ti].to;
      if (!seen[k]) {
        seen[k] = true;
        stack.push_back(k);
      }
    }
  }
  return false;
}

bool d_criteria(const MultiStateModel& model, const std::vector<std::uint64_t>& masks,
                const std::vector<std::size_t>& I, bool* d1 = nullptr, bool* d2 = nullptr,
                bool* d3 = nullptr) {
  // D1: overlap graph of In(E_c) sets is connected over I
  std::vector<std::vector<int>> ins;
  for (std::size_t c : I) ins.push_back(in_transitions(model, masks[c]));
  const std::size_t m = I.size();
  std::vector<bool> seen(m, false);
  std::vector<std::size_t> stack{0};
  if (m > 0) seen[0] = true;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v = 0; v < m; ++v) {
      if (seen[v]) continue;
      bool overlap = false;
      for (int a : ins[u])
        if (std::find(ins[v].begin(), ins[v].end(), a) != ins[v].end()) {
          overlap = true;
          break;
        }
      if (overlap) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  const bool c1 = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });

  // D2: each In(E_c1) transition is shared with at most one other event
  bool c2 = true;
  for (std::size_t a = 0; a < m && c2; ++a)
    for (int ti : ins[a]) {
      int shared = 0;
      for (std::size_t b = 0; b < m; ++b)
        if (b != a && std::find(ins[b].begin(), ins[b].end(), ti) != ins[b].end()) ++shared;
      if (shared > 1) {
        c2 = false;
        break;
      }
    }

  // D3: some event has an exclusive transition, or a shared transition whose
  // partner event can also be entered another way (positive probability of
  // entering E_c2 before the shared transition)
  bool c3 = false;
  for (std::size_t a = 0; a < m && !c3; ++a)
    if (has_exclusive_transition(model, masks, I[a], I)) c3 = true;
  for (std::size_t a = 0; a < m && !c3; ++a)
    for (std::size_t b = 0; b < m && !c3; ++b) {
      if (a == b) continue;
      for (int ti : ins[a]) {
        if (std::find(ins[b].begin(), ins[b].end(), ti) == ins[b].end()) continue;
        for (int other : ins[b]) {
          if (other == ti) continue;
          if (reachable_avoiding(model, model.transitions()[other].from, ti)) {
            c3 = true;
            break;
          }
        }
        if (c3) break;
      }
    }

  if (d1) *d1 = c1;
  if (d2) *d2 = c2;
  if (d3) *d3 = c3;
  return c1 && c2 && c3;
}

bool first_hitting_invertible(const MultiStateModel& model,
                              const std::vector<std::uint64_t>& masks,
                              const std::vector<std::size_t>& I) {
  if (I.empty()) return true;
  if (d_criteria(model, masks, I)) return true;
  std::vector<std::size_t> keep;
  bool removed = false;
  for (std::size_t c : I) {
    if (has_exclusive_transition(model, masks, c, I))
      removed = true;
    else
      keep.push_back(c);
  }
  if (!removed) return false;
  return first_hitting_invertible(model, masks, keep);
}

}  // namespace

const char* to_string(InvertibilityVerdict v) {
  switch (v) {
    case InvertibilityVerdict::guaranteed_invertible: return "guaranteed-invertible";
    case InvertibilityVerdict::not_guaranteed: return "not-guaranteed";
    case InvertibilityVerdict::provably_singular: return "provably-singular";
  }
  return "?";
}

std::string InvertibilityReport::describe() const {
  std::string s = "overall: ";
  s += to_string(overall);
  s += " (all-entries: ";
  s += to_string(all_entries);
  s += ", first-hitting: ";
  s += to_string(first_hitting);
  s += ")";
  return s;
}

InvertibilityReport invertibility_report(const MultiStateModel& model,
                                         const std::vector<EventDefinition>& events) {
  validate_events(events);
  const std::size_t d = events.size();
  const std::size_t nt = model.transitions().size();
  InvertibilityReport rep;

  std::vector<std::uint64_t> masks(d);
  for (std::size_t c = 0; c < d; ++c) masks[c] = state_mask(events[c].states);

  rep.psi.assign(d, std::vector<int>(nt, 0));
  std::vector<std::vector<long long>> psi_ll(d, std::vector<long long>(nt, 0));
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t ti = 0; ti < nt; ++ti) {
      const auto& tr = model.transitions()[ti];
      const int bit = (!((masks[c] >> tr.from) & 1u) && ((masks[c] >> tr.to) & 1u)) ? 1 : 0;
      rep.psi[c][ti] = bit;
      psi_ll[c][ti] = bit;
    }
  rep.psi_independent = exact_rank(psi_ll) == d;

  for (std::size_t b = 0; b < d && !rep.duplicate_events; ++b)
    for (std::size_t c = b + 1; c < d; ++c)
      if (masks[b] == masks[c]) {
        rep.duplicate_events = true;
        break;
      }

  std::vector<std::size_t> I(d);
  std::iota(I.begin(), I.end(), 0);
  rep.has_exclusive.resize(d);
  for (std::size_t c = 0; c < d; ++c)
    rep.has_exclusive[c] = has_exclusive_transition(model, masks, c, I);
  rep.criterion_I1 =
      std::all_of(rep.has_exclusive.begin(), rep.has_exclusive.end(), [](bool b) { return b; });
  rep.criterion_I2 = first_hitting_invertible(model, masks, I);
  d_criteria(model, masks, I, &rep.criterion_D1, &rep.criterion_D2, &rep.criterion_D3);

  if (rep.duplicate_events) {
    rep.all_entries = InvertibilityVerdict::provably_singular;
    rep.first_hitting = InvertibilityVerdict::provably_singular;
  } else {
    rep.all_entries = rep.psi_independent ? InvertibilityVerdict::guaranteed_invertible
                                          : InvertibilityVerdict::provably_singular;
    const bool fh = rep.criterion_I1 || rep.criterion_I2 ||
                    (rep.criterion_D1 && rep.criterion_D2 && rep.criterion_D3);
    rep.first_hitting = fh ? InvertibilityVerdict::guaranteed_invertible
                           : InvertibilityVerdict::not_guaranteed;
  }
  rep.overall =
      events[0].mode == EventMode::all_entries ? rep.all_entries : rep.first_hitting;
  return rep;
}

}  // namespace msmtrial
