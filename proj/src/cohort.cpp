#include "msmtrial/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace msmtrial {

bool EventDefinition::contains(int state) const {
  return std::find(states.begin(), states.end(), state) != states.end();
}

double censoring_time(const PatientRecord& rec, double t) {
  const double admin = std::max(t - rec.entry, 0.0);
  return std::min(rec.dropout, admin);
}

int ObservedRecord::state_before(double s) const {
  int st = 0;
  for (const auto& j : jumps) {
    if (j.time < s)
      st = j.state;
    else
      break;
  }
  return st;
}

double ObservedRecord::hitting_time(const EventDefinition& event) const {
  for (const auto& j : jumps)
    if (event.contains(j.state)) return j.time;
  return kInfTime;
}

ObservedRecord observe_at(const PatientRecord& rec, double t) {
  ObservedRecord obs;
  obs.id = rec.id;
  obs.group = rec.group;
  obs.censor = censoring_time(rec, t);
  for (const auto& j : rec.path.jumps) {
    if (j.time <= obs.censor)
      obs.jumps.push_back(j);
    else
      break;
  }
  return obs;
}

double hitting_time(const PatientRecord& rec, const EventDefinition& event) {
  for (const auto& j : rec.path.jumps) {
    if (j.time > rec.dropout) break;
    if (event.contains(j.state)) return j.time;
  }
  return kInfTime;
}

std::vector<RiskSetSnapshot> risk_sets(const Cohort& cohort,
                                       const std::vector<EventDefinition>& events,
                                       double t) {
  int n_states = 1;
  for (const auto& rec : cohort)
    for (const auto& j : rec.path.jumps) n_states = std::max(n_states, j.state + 1);
  const std::size_t ne = events.size();

  struct Obs {
    ObservedRecord rec;
    std::vector<double> event_hit;  // observed T^E per event
  };
  std::vector<Obs> obs;
  std::vector<double> times;
  for (const auto& rec : cohort) {
    Obs o{observe_at(rec, t), {}};
    if (o.rec.censor <= 0.0) continue;
    o.event_hit.resize(ne);
    for (std::size_t e = 0; e < ne; ++e) o.event_hit[e] = o.rec.hitting_time(events[e]);
    for (const auto& j : o.rec.jumps) times.push_back(j.time);
    obs.push_back(std::move(o));
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  std::vector<RiskSetSnapshot> table;
  for (double s : times) {
    RiskSetSnapshot row;
    row.time = s;
    row.y.assign(n_states, 0);
    row.y1.assign(n_states, 0);
    row.y_event.assign(ne, std::vector<int>(n_states, 0));
    row.y1_event.assign(ne, std::vector<int>(n_states, 0));
    for (const auto& o : obs) {
      if (s > o.rec.censor) continue;  // at risk requires s <= C_i(t)
      const int j = o.rec.state_before(s);
      row.y[j] += 1;
      if (o.rec.group == 1) row.y1[j] += 1;
      for (std::size_t e = 0; e < ne; ++e) {
        if (s > o.event_hit[e]) continue;  // restricted set: s <= T^E
        row.y_event[e][j] += 1;
        if (o.rec.group == 1) row.y1_event[e][j] += 1;
      }
    }
    table.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------- CSV I/O

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& file, int lineno) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(file + ":" + std::to_string(lineno) +
                                ": cannot parse number '" + s + "'");
  }
}

long parse_long(const std::string& s, const std::string& file, int lineno) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(file + ":" + std::to_string(lineno) +
                                ": cannot parse integer '" + s + "'");
  }
}

struct RosterEntry {
  double entry;
  int group;
  double dropout;
};

}  // namespace

Cohort load_cohort(const std::string& transitions_csv, const std::string& roster_csv) {
  std::ifstream roster(roster_csv);
  if (!roster) throw std::invalid_argument("cannot open roster file " + roster_csv);
  std::string line;
  int lineno = 0;
  std::map<long, RosterEntry> entries;
  std::vector<long> order;
  while (std::getline(roster, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line.find("patient_id") == std::string::npos)
        throw std::invalid_argument(roster_csv + ":1: missing header row");
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 4)
      throw std::invalid_argument(roster_csv + ":" + std::to_string(lineno) +
                                  ": expected 4 columns (patient_id,R,Z,Ctilde)");
    const long id = parse_long(f[0], roster_csv, lineno);
    RosterEntry e;
    e.entry = parse_double(f[1], roster_csv, lineno);
    const long z = parse_long(f[2], roster_csv, lineno);
    if (z != 0 && z != 1)
      throw std::invalid_argument(roster_csv + ":" + std::to_string(lineno) +
                                  ": Z must be 0 or 1");
    e.group = static_cast<int>(z);
    e.dropout = f[3].empty() ? kInfTime : parse_double(f[3], roster_csv, lineno);
    if (e.entry < 0.0 || e.dropout <= 0.0)
      throw std::invalid_argument(roster_csv + ":" + std::to_string(lineno) +
                                  ": R must be >= 0 and Ctilde > 0");
    if (!entries.emplace(id, e).second)
      throw std::invalid_argument(roster_csv + ":" + std::to_string(lineno) +
                                  ": duplicate patient_id " + std::to_string(id));
    order.push_back(id);
  }

  std::ifstream trans(transitions_csv);
  if (!trans) throw std::invalid_argument("cannot open transitions file " + transitions_csv);
  lineno = 0;
  std::map<long, std::vector<std::tuple<double, int, int>>> jumps;  // s, from, to
  while (std::getline(trans, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line.find("patient_id") == std::string::npos)
        throw std::invalid_argument(transitions_csv + ":1: missing header row");
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 7)
      throw std::invalid_argument(
          transitions_csv + ":" + std::to_string(lineno) +
          ": expected 7 columns (patient_id,R,Z,Ctilde,from_state,to_state,s)");
    const long id = parse_long(f[0], transitions_csv, lineno);
    const auto it = entries.find(id);
    if (it == entries.end())
      throw std::invalid_argument(transitions_csv + ":" + std::to_string(lineno) +
                                  ": patient " + std::to_string(id) + " not in roster");
    const double r = parse_double(f[1], transitions_csv, lineno);
    const long z = parse_long(f[2], transitions_csv, lineno);
    const double ct = f[3].empty() ? kInfTime : parse_double(f[3], transitions_csv, lineno);
    if (r != it->second.entry || z != it->second.group || ct != it->second.dropout)
      throw std::invalid_argument(transitions_csv + ":" + std::to_string(lineno) +
                                  ": R/Z/Ctilde disagree with the roster for patient " +
                                  std::to_string(id));
    const long from = parse_long(f[4], transitions_csv, lineno);
    const long to = parse_long(f[5], transitions_csv, lineno);
    const double s = parse_double(f[6], transitions_csv, lineno);
    if (s <= 0.0)
      throw std::invalid_argument(transitions_csv + ":" + std::to_string(lineno) +
                                  ": jump time must be positive");
    jumps[id].emplace_back(s, static_cast<int>(from), static_cast<int>(to));
  }

  Cohort cohort;
  for (long id : order) {
    const auto& e = entries[id];
    PatientRecord rec;
    rec.id = id;
    rec.entry = e.entry;
    rec.group = e.group;
    rec.dropout = e.dropout;
    auto it = jumps.find(id);
    if (it != jumps.end()) {
      auto& js = it->second;
      std::sort(js.begin(), js.end());
      int cur = 0;
      double last = 0.0;
      for (const auto& [s, from, to] : js) {
        if (s == last)
          throw std::invalid_argument(transitions_csv + ": duplicate jump time " +
                                      std::to_string(s) + " for patient " +
                                      std::to_string(id));
        if (from != cur)
          throw std::invalid_argument(transitions_csv + ": patient " + std::to_string(id) +
                                      " jumps from state " + std::to_string(from) +
                                      " but was in state " + std::to_string(cur));
        rec.path.jumps.push_back({s, to});
        cur = to;
        last = s;
      }
    }
    cohort.push_back(std::move(rec));
  }
  return cohort;
}

void save_cohort(const Cohort& cohort, const std::string& transitions_csv,
                 const std::string& roster_csv) {
  std::ofstream roster(roster_csv);
  if (!roster) throw std::invalid_argument("cannot write roster file " + roster_csv);
  roster << "patient_id,R,Z,Ctilde\n";
  roster.precision(17);
  for (const auto& rec : cohort) {
    roster << rec.id << ',' << rec.entry << ',' << rec.group << ',';
    if (std::isfinite(rec.dropout)) roster << rec.dropout;
    roster << '\n';
  }

  std::ofstream trans(transitions_csv);
  if (!trans) throw std::invalid_argument("cannot write transitions file " + transitions_csv);
  trans << "patient_id,R,Z,Ctilde,from_state,to_state,s\n";
  trans.precision(17);
  for (const auto& rec : cohort) {
    int cur = 0;
    for (const auto& j : rec.path.jumps) {
      trans << rec.id << ',' << rec.entry << ',' << rec.group << ',';
      if (std::isfinite(rec.dropout)) trans << rec.dropout;
      trans << ',' << cur << ',' << j.state << ',' << j.time << '\n';
      cur = j.state;
    }
  }
}

}  // namespace msmtrial
