#pragma once

#include <string>
#include <vector>

#include "msmtrial/model.hpp"

namespace msmtrial {

/// One trial participant on the calendar/trial two-scale clock.
struct PatientRecord {
  long id = 0;
  double entry = 0.0;               // calendar entry time R
  int group = 0;                    // Z in {0,1}
  double dropout = kInfTime;        // random dropout time C~ on the trial scale
  PatientPath path;
};

using Cohort = std::vector<PatientRecord>;

enum class EventMode { first_hitting, all_entries };

/// Composite event: a nonempty subset E of {1..l} plus the counting mode.
struct EventDefinition {
  std::string name;
  std::vector<int> states;
  EventMode mode = EventMode::first_hitting;

  bool contains(int state) const;
};

/// Censoring time induced by an analysis at calendar time t:
/// C(t) = dropout ∧ (t - entry)_+.
double censoring_time(const PatientRecord& rec, double t);

/// A record truncated at C(t); jumps after the censoring time are invisible.
struct ObservedRecord {
  long id = 0;
  int group = 0;
  double censor = 0.0;                     // C_i(t)
  std::vector<PatientPath::Jump> jumps;    // jump times <= censor

  int state_before(double s) const;        // X(s-) among observed jumps
  /// First observed entry into E, or kInfTime when unobserved.
  double hitting_time(const EventDefinition& event) const;
};

ObservedRecord observe_at(const PatientRecord& rec, double t);

/// First observed entry of a raw record into E at calendar time infinity
/// (i.e. subject only to dropout); kInfTime when never observed.
double hitting_time(const PatientRecord& rec, const EventDefinition& event);

/// Risk-set table row at one observed transition time.
struct RiskSetSnapshot {
  double time = 0.0;                       // trial time s
  std::vector<int> y;                      // Y^j(t,s) per state
  std::vector<int> y1;                     // Y^{j,Z=1}(t,s)
  std::vector<std::vector<int>> y_event;   // [event][state] Y^{j->E}
  std::vector<std::vector<int>> y1_event;  // [event][state] Y^{j->E,Z=1}
};

/// Left-limit risk sets at every distinct observed transition time.
std::vector<RiskSetSnapshot> risk_sets(const Cohort& cohort,
                                       const std::vector<EventDefinition>& events,
                                       double t);

/// CSV persistence. Transitions file: one row per jump with columns
/// (patient_id, R, Z, Ctilde, from_state, to_state, s); roster file:
/// (patient_id, R, Z, Ctilde) covering every patient. Empty Ctilde means
/// no dropout. Malformed input raises std::invalid_argument with the line
/// number.
Cohort load_cohort(const std::string& transitions_csv, const std::string& roster_csv);
void save_cohort(const Cohort& cohort, const std::string& transitions_csv,
                 const std::string& roster_csv);

}  // namespace msmtrial
