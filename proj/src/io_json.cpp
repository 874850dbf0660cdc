#include "msmtrial/io_json.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace msmtrial {

using nlohmann::json;

MultiStateModel model_from_json(const json& j) {
  if (!j.contains("states") || !j.contains("transitions"))
    throw std::invalid_argument("model needs 'states' and 'transitions'");
  std::vector<TransitionIntensity> trs;
  for (const auto& t : j.at("transitions")) {
    TransitionIntensity tr;
    tr.from = t.at("from").get<int>();
    tr.to = t.at("to").get<int>();
    tr.lambda = t.at("lambda").get<double>();
    tr.gamma = t.value("gamma", 1.0);
    tr.delta = t.value("delta", 1.0);
    trs.push_back(tr);
  }
  return MultiStateModel(j.at("states").get<int>(), std::move(trs));
}

json model_to_json(const MultiStateModel& model) {
  json trs = json::array();
  for (const auto& t : model.transitions())
    trs.push_back({{"from", t.from},
                   {"to", t.to},
                   {"lambda", t.lambda},
                   {"gamma", t.gamma},
                   {"delta", t.delta}});
  return {{"states", model.n_states()}, {"transitions", trs}};
}

std::vector<EventDefinition> events_from_json(const json& j) {
  std::vector<EventDefinition> events;
  for (const auto& e : j) {
    EventDefinition ev;
    ev.name = e.value("name", "E" + std::to_string(events.size() + 1));
    ev.states = e.at("states").get<std::vector<int>>();
    const std::string mode = e.value("mode", "first_hitting");
    if (mode == "first_hitting")
      ev.mode = EventMode::first_hitting;
    else if (mode == "all_entries")
      ev.mode = EventMode::all_entries;
    else
      throw std::invalid_argument("unknown event mode '" + mode + "'");
    events.push_back(std::move(ev));
  }
  return events;
}

namespace {

BoundaryFamily family_from_string(const std::string& s) {
  if (s == "pocock") return BoundaryFamily::pocock;
  if (s == "obrien_fleming") return BoundaryFamily::obrien_fleming;
  if (s == "custom") return BoundaryFamily::custom;
  throw std::invalid_argument("unknown boundary family '" + s + "'");
}

}  // namespace

DesignFile design_from_json(const json& j) {
  DesignFile out{PlanningAssumptions{model_from_json(j.at("model")), {}, 0.0}, {}, {}, 0.8};
  out.events = events_from_json(j.at("events"));
  out.design.stages = j.at("stages").get<int>();
  out.design.analysis_times = j.at("analysis_times").get<std::vector<double>>();
  out.design.alpha = j.value("alpha", 0.05);
  out.design.family = family_from_string(j.value("boundary", "pocock"));
  if (j.contains("weights")) out.design.weights = j.at("weights").get<std::vector<double>>();
  if (j.contains("custom_z_thresholds"))
    out.design.custom_z = j.at("custom_z_thresholds").get<std::vector<double>>();
  const auto& a = j.at("accrual");
  out.assumptions.accrual.duration = a.at("duration").get<double>();
  out.assumptions.accrual.followup = a.value("followup", 0.0);
  out.assumptions.accrual.rate = a.value("rate", 0.0);
  out.assumptions.accrual.allocation = a.value("allocation", 0.5);
  out.assumptions.dropout_rate = j.value("dropout_rate", 0.0);
  out.target_power = j.value("target_power", 0.8);
  out.design.validate();
  return out;
}

DesignFile load_design_file(const std::string& path) {
  return design_from_json(load_json_file(path));
}

ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig cfg;
  cfg.name = j.value("name", "scenario");
  DesignFile df = design_from_json(j.at("design"));
  cfg.planning = df.assumptions;
  cfg.events = df.events;
  cfg.design = df.design;
  if (j.contains("truth")) cfg.truth = model_from_json(j.at("truth"));
  cfg.n = j.value("n", 0L);
  cfg.replicates = j.value("replicates", 10000L);
  if (j.contains("seed")) {
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.seed_set = true;
  }
  const std::string mode = j.value("mode", "fixed");
  if (mode == "fixed")
    cfg.mode = TrialMode::fixed;
  else if (mode == "adaptive")
    cfg.mode = TrialMode::adaptive;
  else
    throw std::invalid_argument("unknown mode '" + mode + "'");
  const std::string arr = j.value("arrivals", mode == "adaptive" ? "rate" : "iid");
  if (arr == "iid")
    cfg.arrivals = ArrivalProcess::iid_uniform;
  else if (arr == "rate")
    cfg.arrivals = ArrivalProcess::rate_slots;
  else
    throw std::invalid_argument("unknown arrival process '" + arr + "'");
  cfg.a_add_min = j.value("a_add_min", 0.0);
  cfg.a_add_max = j.value("a_add_max", 0.0);
  cfg.conditional_target = j.value("conditional_target", 0.8);
  return cfg;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  return scenario_from_json(load_json_file(path));
}

json scenario_result_to_json(const ScenarioResult& res) {
  return {{"name", res.name},
          {"replicates", res.replicates},
          {"rejected", res.rejected},
          {"rejection_rate", res.rejection_rate},
          {"rate_se", res.rate_se},
          {"reject_by_stage", res.reject_by_stage},
          {"flagged", res.flagged},
          {"mean_accrual", res.mean_accrual},
          {"mean_a_add", res.mean_a_add},
          {"wall_seconds", res.wall_seconds}};
}

json stage_result_to_json(const StageResult& res, const InvertibilityReport& inv) {
  json dv = json::array();
  for (std::size_t i = 0; i < res.dv.dim(); ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < res.dv.dim(); ++k) row.push_back(res.dv(i, k));
    dv.push_back(row);
  }
  json out = {{"stage", res.stage},       {"t", res.t},
              {"dU", res.du},             {"dV", dv},
              {"S", res.s},               {"p", res.p},
              {"rank", res.rank},         {"rank_deficient", res.rank_deficient},
              {"invertibility_verdict", to_string(inv.overall)}};
  if (res.z)
    out["Z"] = *res.z;
  else
    out["Z"] = nullptr;
  return out;
}

json recalc_to_json(const RecalcDecision& dec) {
  json rates = json::array();
  for (int g = 0; g < 2; ++g) {
    json m = json::array();
    for (const auto& [key, est] : dec.rates[g]) {
      json e = {{"from", key.first},
                {"to", key.second},
                {"events", est.events},
                {"exposure", est.exposure}};
      if (est.rate)
        e["rate"] = *est.rate;
      else
        e["rate"] = nullptr;
      m.push_back(e);
    }
    rates.push_back(m);
  }
  json fallbacks = json::array();
  for (const auto& [f, t] : dec.fallbacks) fallbacks.push_back({{"from", f}, {"to", t}});
  json curve = json::array();
  for (const auto& [a, psi] : dec.psi_curve) curve.push_back({{"a_add", a}, {"psi", psi}});
  return {{"p1", dec.p1},
          {"conditional_level", dec.conditional_level},
          {"rates_by_group", rates},
          {"fallback_transitions", fallbacks},
          {"psi_curve", curve},
          {"branch", dec.branch},
          {"a_add", dec.a_add},
          {"new_accrual_duration", dec.new_accrual_duration},
          {"new_final_time", dec.new_final_time},
          {"projected_n", dec.projected_n}};
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace msmtrial
