#include "msmtrial/model.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>

namespace msmtrial {

MultiStateModel::MultiStateModel(int n_states, std::vector<TransitionIntensity> transitions)
    : n_states_(n_states), transitions_(std::move(transitions)) {
  if (n_states_ < 1) throw std::invalid_argument("model needs at least one state");
  std::set<std::pair<int, int>> seen;
  out_.assign(n_states_, {});
  for (std::size_t i = 0; i < transitions_.size(); ++i) {
    const auto& tr = transitions_[i];
    if (tr.from < 0 || tr.from >= n_states_ || tr.to < 0 || tr.to >= n_states_)
      throw std::invalid_argument("transition state out of range");
    if (tr.from == tr.to)
      throw std::invalid_argument("self-loop transition " + std::to_string(tr.from));
    if (!(tr.lambda > 0.0) || !(tr.gamma > 0.0) || !(tr.delta > 0.0))
      throw std::invalid_argument("transition rates, shapes and hazard ratios must be positive");
    if (!seen.insert({tr.from, tr.to}).second)
      throw std::invalid_argument("duplicate transition " + std::to_string(tr.from) + "->" +
                                  std::to_string(tr.to));
    out_[tr.from].push_back(static_cast<int>(i));
  }
  if (out_[0].empty())
    throw std::invalid_argument("state 0 has no outgoing intensity");
}

double MultiStateModel::hazard(int ti, double s, int group) const {
  const auto& tr = transitions_[ti];
  const double mult = (group == 1) ? tr.delta : 1.0;
  if (tr.gamma == 1.0) return mult * tr.lambda;
  return mult * tr.lambda * std::pow(s, tr.gamma - 1.0);
}

double MultiStateModel::cumulative(int ti, double s1, double s2, int group) const {
  const auto& tr = transitions_[ti];
  const double mult = (group == 1) ? tr.delta : 1.0;
  if (tr.gamma == 1.0) return mult * tr.lambda * (s2 - s1);
  return mult * tr.lambda * (std::pow(s2, tr.gamma) - std::pow(s1, tr.gamma)) / tr.gamma;
}

MultiStateModel MultiStateModel::stopped_at(const std::vector<int>& absorb) const {
  std::vector<bool> stop(n_states_, false);
  for (int j : absorb) stop[j] = true;
  std::vector<TransitionIntensity> kept;
  for (const auto& tr : transitions_)
    if (!stop[tr.from]) kept.push_back(tr);
  return MultiStateModel(n_states_, std::move(kept));
}

bool MultiStateModel::homogeneous() const {
  for (const auto& tr : transitions_)
    if (tr.gamma != 1.0) return false;
  return true;
}

int MultiStateModel::transition_index(int from, int to) const {
  for (int ti : out_[from])
    if (transitions_[ti].to == to) return ti;
  return -1;
}

ModelReport validate_model(const MultiStateModel& model) {
  ModelReport rep;
  const int m = model.n_states();
  for (int j = 0; j < m; ++j)
    if (model.is_absorbing(j)) rep.absorbing_states.push_back(j);

  std::vector<bool> reach(m, false);
  std::queue<int> q;
  q.push(0);
  reach[0] = true;
  while (!q.empty()) {
    const int j = q.front();
    q.pop();
    for (int ti : model.outgoing(j)) {
      const int k = model.transitions()[ti].to;
      if (!reach[k]) {
        reach[k] = true;
        q.push(k);
      }
    }
  }
  for (int j = 0; j < m; ++j)
    if (reach[j]) rep.reachable_states.push_back(j);

  rep.all_reach_absorbing = true;
  for (int j = 0; j < m; ++j) {
    if (!reach[j] || model.is_absorbing(j)) continue;
    std::vector<bool> seen(m, false);
    std::queue<int> qq;
    qq.push(j);
    seen[j] = true;
    bool hits = false;
    while (!qq.empty() && !hits) {
      const int u = qq.front();
      qq.pop();
      for (int ti : model.outgoing(u)) {
        const int k = model.transitions()[ti].to;
        if (model.is_absorbing(k)) {
          hits = true;
          break;
        }
        if (!seen[k]) {
          seen[k] = true;
          qq.push(k);
        }
      }
    }
    if (!hits) {
      rep.all_reach_absorbing = false;
      break;
    }
  }
  return rep;
}

double cumulative_intensity(const MultiStateModel& model, int from, int to, double s1,
                            double s2, int group) {
  if (s1 < 0.0 || s2 < s1) throw std::invalid_argument("need 0 <= s1 <= s2");
  const int ti = model.transition_index(from, to);
  if (ti < 0)
    throw std::invalid_argument("unknown transition " + std::to_string(from) + "->" +
                                std::to_string(to));
  return model.cumulative(ti, s1, s2, group);
}

int PatientPath::state_at(double s) const {
  int st = 0;
  for (const auto& j : jumps) {
    if (j.time <= s)
      st = j.state;
    else
      break;
  }
  return st;
}

int PatientPath::state_before(double s) const {
  int st = 0;
  for (const auto& j : jumps) {
    if (j.time < s)
      st = j.state;
    else
      break;
  }
  return st;
}

double PatientPath::hitting_time(const std::vector<int>& states) const {
  for (const auto& j : jumps)
    if (std::find(states.begin(), states.end(), j.state) != states.end()) return j.time;
  return kInfTime;
}

PatientPath sample_path(const MultiStateModel& model, int group, double horizon,
                        RngStream& rng) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  PatientPath path;
  int state = 0;
  double s = 0.0;
  while (!model.is_absorbing(state) && s < horizon) {
    const auto& out = model.outgoing(state);
    const double target = -std::log(rng.uniform());
    const double wmax = horizon - s;

    double total_at_wmax = 0.0;
    for (int ti : out) total_at_wmax += model.cumulative(ti, s, s + wmax, group);
    if (total_at_wmax < target) break;  // stays in `state` up to the horizon

    // sojourn: invert sum_k Lambda^{jk}(s, s+w) = target
    double w;
    bool common_shape = true;
    const double g0 = model.transitions()[out[0]].gamma;
    for (int ti : out) common_shape = common_shape && model.transitions()[ti].gamma == g0;
    if (common_shape) {
      double c = 0.0;  // sum of delta*lambda/gamma
      for (int ti : out) {
        const auto& tr = model.transitions()[ti];
        c += ((group == 1) ? tr.delta : 1.0) * tr.lambda / tr.gamma;
      }
      w = std::pow(std::pow(s, g0) + target / c, 1.0 / g0) - s;
      if (w > wmax) w = wmax;
    } else {
      double lo = 0.0, hi = wmax;
      int iter = 0;
      while (hi - lo > 1e-12 * hi && hi - lo > 1e-300) {
        if (++iter > 200)
          throw std::runtime_error("sojourn inversion did not converge in state " +
                                   std::to_string(state) + " at s=" + std::to_string(s));
        const double mid = 0.5 * (lo + hi);
        double h = 0.0;
        for (int ti : out) h += model.cumulative(ti, s, s + mid, group);
        (h < target ? lo : hi) = mid;
      }
      w = hi;
    }

    const double jump_time = s + w;
    double total_haz = 0.0;
    for (int ti : out) total_haz += model.hazard(ti, jump_time, group);
    if (!(total_haz > 0.0))
      throw std::runtime_error("zero total intensity at sampled jump time");
    double u = rng.uniform() * total_haz;
    int chosen = out.back();
    for (int ti : out) {
      u -= model.hazard(ti, jump_time, group);
      if (u <= 0.0) {
        chosen = ti;
        break;
      }
    }
    state = model.transitions()[chosen].to;
    path.jumps.push_back({jump_time, state});
    s = jump_time;
  }
  return path;
}

namespace {

// exp(A) for a small dense matrix by scaling-and-squaring with a Taylor
// series; panel generators have tiny norm so few terms are needed.
std::vector<double> expm_small(std::vector<double> a, int m) {
  double norm = 0.0;
  for (int i = 0; i < m; ++i) {
    double row = 0.0;
    for (int j = 0; j < m; ++j) row += std::fabs(a[i * m + j]);
    norm = std::max(norm, row);
  }
  int squarings = 0;
  while (norm > 0.25) {
    norm *= 0.5;
    ++squarings;
  }
  const double scale = std::ldexp(1.0, -squarings);
  for (double& v : a) v *= scale;

  std::vector<double> result(m * m, 0.0), term(m * m, 0.0), next(m * m);
  for (int i = 0; i < m; ++i) {
    result[i * m + i] = 1.0;
    term[i * m + i] = 1.0;
  }
  for (int k = 1; k <= 24; ++k) {
    // term = term * a / k
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int l = 0; l < m; ++l) s += term[i * m + l] * a[l * m + j];
        next[i * m + j] = s / k;
      }
    term.swap(next);
    double tmax = 0.0;
    for (int i = 0; i < m * m; ++i) {
      result[i] += term[i];
      tmax = std::max(tmax, std::fabs(term[i]));
    }
    if (tmax < 1e-18) break;
  }
  for (int sq = 0; sq < squarings; ++sq) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int l = 0; l < m; ++l) s += result[i * m + l] * result[l * m + j];
        next[i * m + j] = s;
      }
    result.swap(next);
  }
  return result;
}

}  // namespace

std::vector<std::vector<double>> occupation_on_grid(const MultiStateModel& model, int group,
                                                    const std::vector<double>& grid) {
  if (grid.empty() || grid[0] != 0.0)
    throw std::invalid_argument("occupation grid must start at 0");
  const int m = model.n_states();
  std::vector<std::vector<double>> out(grid.size(), std::vector<double>(m, 0.0));
  std::vector<double> cur(m, 0.0);
  cur[0] = 1.0;
  out[0] = cur;

  // homogeneous + uniform grid: one panel exponential serves every step
  bool uniform = true;
  const double h0 = grid.size() > 1 ? grid[1] - grid[0] : 0.0;
  for (std::size_t i = 2; i < grid.size(); ++i)
    if (std::fabs((grid[i] - grid[i - 1]) - h0) > 1e-12 * std::max(h0, 1.0)) {
      uniform = false;
      break;
    }
  const bool cached = model.homogeneous() && uniform;

  std::vector<double> gen(m * m), panel;
  std::vector<double> nxt(m);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!cached || i == 1) {
      std::fill(gen.begin(), gen.end(), 0.0);
      for (std::size_t ti = 0; ti < model.transitions().size(); ++ti) {
        const auto& tr = model.transitions()[ti];
        const double dL = model.cumulative(static_cast<int>(ti), grid[i - 1], grid[i], group);
        gen[tr.from * m + tr.to] += dL;
        gen[tr.from * m + tr.from] -= dL;
      }
      panel = expm_small(gen, m);
    }
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int l = 0; l < m; ++l) s += cur[l] * panel[l * m + j];
      nxt[j] = s;
    }
    cur = nxt;
    out[i] = cur;
  }
  return out;
}

double state_occupation(const MultiStateModel& model, int state, double s, int group) {
  if (state < 0 || state >= model.n_states())
    throw std::invalid_argument("invalid state");
  if (s < 0.0) throw std::invalid_argument("time must be nonnegative");
  if (s == 0.0) return state == 0 ? 1.0 : 0.0;

  double prev = -1.0;
  for (int n = 256; n <= (1 << 20); n *= 2) {
    std::vector<double> grid(n + 1);
    for (int i = 0; i <= n; ++i) grid[i] = s * i / n;
    grid[0] = 0.0;
    const auto occ = occupation_on_grid(model, group, grid);
    const double val = occ.back()[state];
    if (prev >= 0.0 && std::fabs(val - prev) < 1e-8) return val;
    prev = val;
    if (model.homogeneous()) return val;  // panel exponentials are exact
  }
  return prev;
}

std::vector<double> hitting_cdf_on_grid(const MultiStateModel& model,
                                        const std::vector<int>& event_states, int group,
                                        const std::vector<double>& grid) {
  const MultiStateModel stopped = model.stopped_at(event_states);
  const auto occ = occupation_on_grid(stopped, group, grid);
  std::vector<double> cdf(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (int j : event_states) cdf[i] += occ[i][j];
  return cdf;
}

double expected_event_fraction(const MultiStateModel& model,
                               const std::vector<int>& event_states, double t,
                               const AccrualPlan& plan, double dropout_rate) {
  if (t < 0.0) throw std::invalid_argument("calendar time must be nonnegative");
  if (t == 0.0) return 0.0;
  const double a = plan.duration;
  const double lo = std::max(0.0, t - a);

  double prev = -1.0;
  for (int n = 512; n <= (1 << 16); n *= 2) {
    // grid over [0, t] with `lo` as an explicit node
    std::vector<double> grid;
    grid.push_back(0.0);
    if (lo > 0.0) {
      const int n1 = std::max(1, static_cast<int>(n * lo / t));
      for (int i = 1; i <= n1; ++i) grid.push_back(lo * i / n1);
    }
    const int n2 = std::max(1, static_cast<int>(n * (t - lo) / t));
    for (int i = 1; i <= n2; ++i) grid.push_back(lo + (t - lo) * i / n2);

    double mix = 0.0;
    for (int g = 0; g < 2; ++g) {
      const double wg = (g == 1) ? plan.allocation : 1.0 - plan.allocation;
      if (wg == 0.0) continue;
      const auto cdf = hitting_cdf_on_grid(model, event_states, g, grid);
      // observed-event CDF against dropout: H(w) = int_0^w e^{-rate*u} dF(u)
      std::vector<double> h(grid.size(), 0.0);
      for (std::size_t i = 1; i < grid.size(); ++i) {
        const double survive =
            dropout_rate > 0.0
                ? std::exp(-dropout_rate * 0.5 * (grid[i - 1] + grid[i]))
                : 1.0;
        h[i] = h[i - 1] + survive * (cdf[i] - cdf[i - 1]);
      }
      // (1/a) * int_lo^t H(u) du
      double integral = 0.0;
      for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] > lo)
          integral += 0.5 * (h[i] + h[i - 1]) * (grid[i] - grid[i - 1]);
      mix += wg * integral / a;
    }
    if (prev >= 0.0 && std::fabs(mix - prev) < 1e-6) return mix;
    prev = mix;
  }
  return prev;
}

}  // namespace msmtrial
