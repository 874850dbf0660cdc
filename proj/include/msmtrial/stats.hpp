#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msmtrial/cohort.hpp"
#include "msmtrial/linalg.hpp"

namespace msmtrial {

/// Optional transition weight Q^{jk}(t, s); empty means Q == 1.
using WeightFunction = std::function<double(int from, int to, double t, double s)>;

struct StatVector {
  double t = 0.0;
  std::vector<double> values;  // scaled by 1/sqrt(n)
};

struct CovMatrix {
  double t = 0.0;
  SymMatrix values;  // scaled by 1/n
};

/// U(t) and V-hat(t) computed in one pass over the observed event times.
struct Statistics {
  StatVector u;
  CovMatrix v;
  std::size_t n = 0;
};

/// Relative eigenvalue cutoff for the Moore-Penrose pseudo-inverse.
inline constexpr double kPinvRelTol = 1e-10;

Statistics compute_statistics(const Cohort& cohort,
                              const std::vector<EventDefinition>& events,
                              const WeightFunction& weight, double t,
                              std::size_t n_scale = 0);

StatVector u_vector(const Cohort& cohort, const std::vector<EventDefinition>& events,
                    const WeightFunction& weight, double t);

CovMatrix covariance_hat(const Cohort& cohort, const std::vector<EventDefinition>& events,
                         const WeightFunction& weight, double t);

/// Stagewise increments: values at t_now minus values at t_prev, each side
/// computed from the data visible at its own calendar time.
std::pair<StatVector, CovMatrix> stage_increment(const Cohort& cohort,
                                                 const std::vector<EventDefinition>& events,
                                                 const WeightFunction& weight,
                                                 double t_prev, double t_now);

/// Z_r = L^{-1} dU for the lower Cholesky factor L of dV.
/// Throws not_positive_definite when dV is not PD.
std::vector<double> standardize_cholesky(const std::vector<double>& du, const SymMatrix& dv);

struct StageResult {
  int stage = 0;
  double t = 0.0;
  std::vector<double> du;
  SymMatrix dv;
  std::optional<std::vector<double>> z;  // defined only when dV is PD
  double s = 0.0;                        // dU^T (dV)^+ dU
  double p = 1.0;                        // 1 - F_{chi2_d}(S)
  std::size_t rank = 0;
  bool rank_deficient = false;
};

/// S_r via the spectral pseudo-inverse; p-value always uses d degrees of
/// freedom (rank deficiency is flagged, not adjusted).
StageResult stage_statistic(const std::vector<double>& du, const SymMatrix& dv);

// ------------------------------------------------------- invertibility

enum class InvertibilityVerdict { guaranteed_invertible, not_guaranteed, provably_singular };

struct InvertibilityReport {
  // one row per event: psi over the model's transitions (1 iff the
  // transition starts outside E and enters E)
  std::vector<std::vector<int>> psi;
  bool psi_independent = false;             // exact rank test over the rationals
  std::vector<bool> has_exclusive;          // per event, w.r.t. the full index set
  bool criterion_I1 = false;                // every event has an exclusive transition
  bool criterion_I2 = false;                // recursive exclusive/submatrix decomposition
  bool criterion_D1 = false;                // In(E)-overlap graph irreducible
  bool criterion_D2 = false;                // diagonal dominance (sharing <= 1 other event)
  bool criterion_D3 = false;                // strict dominance for at least one event
  bool duplicate_events = false;
  InvertibilityVerdict all_entries = InvertibilityVerdict::not_guaranteed;
  InvertibilityVerdict first_hitting = InvertibilityVerdict::not_guaranteed;
  InvertibilityVerdict overall = InvertibilityVerdict::not_guaranteed;

  std::string describe() const;
};

InvertibilityReport invertibility_report(const MultiStateModel& model,
                                         const std::vector<EventDefinition>& events);

const char* to_string(InvertibilityVerdict v);

}  // namespace msmtrial
