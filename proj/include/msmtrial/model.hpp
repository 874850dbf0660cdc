#pragma once

#include <limits>
#include <vector>

#include "msmtrial/rng.hpp"

namespace msmtrial {

/// One directed transition with Weibull intensity
///   lambda * s^(gamma-1),
/// multiplied by the group hazard ratio delta when group == 1.
struct TransitionIntensity {
  int from = 0;
  int to = 0;
  double lambda = 0.0;
  double gamma = 1.0;
  double delta = 1.0;
};

/// Markovian multi-state model on states 0..n_states-1, initial state 0.
/// Structural invariants (positive rates/shapes, no self-loops, no duplicate
/// transitions, state 0 has an outgoing intensity) are enforced on
/// construction; reachability diagnostics live in validate_model().
class MultiStateModel {
 public:
  MultiStateModel(int n_states, std::vector<TransitionIntensity> transitions);
  /// Placeholder two-state model (0 -> 1 at unit rate); real models come
  /// from configuration or the scenario factories.
  MultiStateModel() : MultiStateModel(2, {{0, 1, 1.0, 1.0, 1.0}}) {}

  int n_states() const { return n_states_; }
  const std::vector<TransitionIntensity>& transitions() const { return transitions_; }
  const std::vector<int>& outgoing(int state) const { return out_[state]; }
  bool is_absorbing(int state) const { return out_[state].empty(); }

  /// Intensity of transition index ti at trial time s for the given group.
  double hazard(int ti, double s, int group) const;

  /// Integrated intensity of transition ti over [s1, s2] for the given
  /// group: delta^{1{group==1}} * lambda * (s2^gamma - s1^gamma) / gamma.
  double cumulative(int ti, double s1, double s2, int group) const;

  /// Model with every state in `absorb` made absorbing (outgoing
  /// transitions removed); used for first-hitting-time distributions.
  MultiStateModel stopped_at(const std::vector<int>& absorb) const;

  /// Model with all gamma == 1?
  bool homogeneous() const;

  int transition_index(int from, int to) const;  // -1 when absent

 private:
  int n_states_;
  std::vector<TransitionIntensity> transitions_;
  std::vector<std::vector<int>> out_;
};

/// Reachability / absorbing-state report.
struct ModelReport {
  std::vector<int> absorbing_states;
  std::vector<int> reachable_states;     // from state 0, ascending
  bool all_reach_absorbing = false;      // every reachable non-absorbing state
};

ModelReport validate_model(const MultiStateModel& model);

/// Integrated intensity of the (from,to) transition over [s1, s2].
/// Throws std::invalid_argument for unknown transitions or s1 > s2.
double cumulative_intensity(const MultiStateModel& model, int from, int to,
                            double s1, double s2, int group);

/// A sampled patient trajectory: ordered jumps (time, new state), starting
/// implicitly in state 0 at time 0.
struct PatientPath {
  struct Jump {
    double time;
    int state;
  };
  std::vector<Jump> jumps;

  int state_at(double s) const;        // X(s), right-continuous
  int state_before(double s) const;    // X(s-)
  double hitting_time(const std::vector<int>& states) const;  // inf if never
};

constexpr double kInfTime = std::numeric_limits<double>::infinity();

/// Samples one trajectory up to `horizon`. Sojourn times invert the total
/// cumulative out-intensity (closed form when all outgoing shapes agree,
/// bracketed bisection to 1e-12 relative otherwise); the destination is
/// drawn proportional to the intensities at the jump time.
PatientPath sample_path(const MultiStateModel& model, int group, double horizon,
                        RngStream& rng);

/// Occupation probabilities P(X(s) = j | X(0) = 0) for all j at each grid
/// time. The grid must start at 0 and be strictly increasing. Computed with
/// a product-exponential integrator over cumulative intensity increments
/// (exact per panel for homogeneous models, robust to gamma < 1).
std::vector<std::vector<double>> occupation_on_grid(const MultiStateModel& model,
                                                    int group,
                                                    const std::vector<double>& grid);

/// P(X(s) = state), panel-doubling until successive refinements agree to
/// 1e-8.
double state_occupation(const MultiStateModel& model, int state, double s, int group);

/// Uniform-accrual plan over [0, duration] plus fixed follow-up.
struct AccrualPlan {
  double duration = 1.0;       // a
  double followup = 0.0;       // f
  double rate = 1.0;           // patients per time unit (both groups)
  double allocation = 0.5;     // fraction assigned to group 1
};

/// P(T^E <= u) for u on the grid, where T^E is the first hitting time of
/// `event_states`, per group.
std::vector<double> hitting_cdf_on_grid(const MultiStateModel& model,
                                        const std::vector<int>& event_states,
                                        int group, const std::vector<double>& grid);

/// Expected fraction of trial participants with an observed E-event by
/// calendar time t:  (1/a) * int_0^{min(a,t)} P(T^E <= t - r) dr,
/// mixing groups by the allocation fraction. `dropout_rate` (exponential)
/// further thins observation when positive.
double expected_event_fraction(const MultiStateModel& model,
                               const std::vector<int>& event_states, double t,
                               const AccrualPlan& plan, double dropout_rate = 0.0);

}  // namespace msmtrial
