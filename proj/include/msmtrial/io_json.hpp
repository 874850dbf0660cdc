#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "msmtrial/simulate.hpp"

namespace msmtrial {

// JSON schemas are documented in docs/file_formats.md; sample files live
// under configs/.

MultiStateModel model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const MultiStateModel& model);

std::vector<EventDefinition> events_from_json(const nlohmann::json& j);

/// Full design file: events, stages/times/alpha/boundary/weights, accrual,
/// dropout, planning model (with hazard ratios) and target power.
struct DesignFile {
  PlanningAssumptions assumptions;
  std::vector<EventDefinition> events;
  DesignSpec design;
  double target_power = 0.8;
};
DesignFile design_from_json(const nlohmann::json& j);
DesignFile load_design_file(const std::string& path);

ScenarioConfig scenario_from_json(const nlohmann::json& j);
ScenarioConfig load_scenario_file(const std::string& path);

nlohmann::json scenario_result_to_json(const ScenarioResult& res);
nlohmann::json stage_result_to_json(const StageResult& res,
                                    const InvertibilityReport& inv);
nlohmann::json recalc_to_json(const RecalcDecision& dec);

nlohmann::json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace msmtrial
