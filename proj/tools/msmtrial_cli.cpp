// Command-line front end: design evaluation, scenario simulation, stagewise
// analysis with rejection-ellipse output, and interim accrual recalculation.
// Exit codes: 0 success, 1 internal error, 2 usage/config error, 3 numerical
// failure.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "msmtrial/dist.hpp"
#include "msmtrial/io_json.hpp"
#include "msmtrial/simulate.hpp"

using namespace msmtrial;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::vector<double> info_fractions(const DesignSpec& design) {
  const auto w = design.effective_weights();
  std::vector<double> f(w.size());
  double acc = 0.0;
  for (std::size_t r = 0; r < w.size(); ++r) {
    acc += w[r] * w[r];
    f[r] = acc;
  }
  return f;
}

int cmd_design(const std::string& design_path, const std::string& out_path) {
  const DesignFile df = load_design_file(design_path);
  const Boundaries bounds =
      sequential_boundaries(df.design.family, df.design.stages, df.design.alpha,
                            info_fractions(df.design), df.design.custom_z);

  const InvertibilityReport inv = invertibility_report(df.assumptions.model, df.events);
  if (inv.overall == InvertibilityVerdict::provably_singular) {
    std::cerr << "error: planning covariance is provably singular ("
              << inv.describe() << ")\n";
    return kExitNumerical;
  }

  const PlanningMoments moments = planning_moments(df.assumptions, df.events, df.design);
  long n = 0;
  try {
    n = required_sample_size(moments, df.design, bounds, df.target_power);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  const double power = design_power(moments, df.design, bounds, static_cast<double>(n));

  json stages = json::array();
  for (int r = 0; r < df.design.stages; ++r) {
    json dv = json::array();
    for (std::size_t i = 0; i < moments.dv[r].dim(); ++i) {
      json row = json::array();
      for (std::size_t k = 0; k < moments.dv[r].dim(); ++k)
        row.push_back(moments.dv[r](i, k));
      dv.push_back(row);
    }
    stages.push_back({{"t", df.design.analysis_times[r]},
                      {"z_threshold", bounds.z_thresholds[r]},
                      {"p_threshold", bounds.p_thresholds[r]},
                      {"dtheta", moments.dtheta[r]},
                      {"dV", dv},
                      {"eta", moments.eta[r]}});
  }
  json curve = json::array();
  for (double frac : {0.5, 0.7, 0.85, 1.0, 1.15, 1.3, 1.5}) {
    const long nn = std::max(2L, static_cast<long>(std::lround(frac * n)));
    curve.push_back({{"n", nn},
                     {"power", design_power(moments, df.design, bounds,
                                            static_cast<double>(nn), 200000)}});
  }
  json report = {{"boundaries", stages},
                 {"attained_alpha", bounds.alpha},
                 {"invertibility", inv.describe()},
                 {"required_n_total", n},
                 {"required_n_per_group", (n + 1) / 2},
                 {"power_at_n", power},
                 {"power_curve", curve},
                 {"target_power", df.target_power}};

  std::cout << "design: " << df.design.stages << " stages, alpha " << df.design.alpha
            << ", attained " << bounds.alpha << "\n";
  for (int r = 0; r < df.design.stages; ++r)
    std::cout << "  stage " << r + 1 << ": t=" << df.design.analysis_times[r]
              << " z>=" << bounds.z_thresholds[r] << " eta=" << moments.eta[r] << "\n";
  std::cout << "required n (total): " << n << "  [" << (n + 1) / 2
            << " per group], power " << power << "\n";
  if (!out_path.empty()) write_json_file(out_path, report);
  return 0;
}

int cmd_simulate(const std::string& scenario_path, long replicates_override,
                 std::optional<std::uint64_t> seed_override, const std::string& csv_path,
                 const std::string& json_path, int threads) {
  ScenarioConfig cfg = load_scenario_file(scenario_path);
  if (replicates_override > 0) cfg.replicates = replicates_override;
  if (seed_override) {
    cfg.seed = *seed_override;
    cfg.seed_set = true;
  }
  if (!cfg.seed_set) {
    std::cerr << "error: a seed is mandatory (--seed or \"seed\" in the scenario file)\n";
    return kExitUsage;
  }
  const ScenarioResult res = run_scenario(cfg, threads, [](long done, long total) {
    std::cerr << "\r" << done << "/" << total << std::flush;
    if (done == total) std::cerr << "\n";
  });
  std::cout << "scenario " << res.name << ": rejection rate " << res.rejection_rate
            << " (se " << res.rate_se << "), mean accrual " << res.mean_accrual
            << ", flagged " << res.flagged << "\n";
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path, std::ios::app);
    if (!csv) {
      std::cerr << "error: cannot write " << csv_path << "\n";
      return kExitUsage;
    }
    csv.precision(10);
    if (csv.tellp() == 0)
      csv << "name,replicates,rejection_rate,rate_se,mean_accrual,mean_a_add,flagged\n";
    csv << res.name << ',' << res.replicates << ',' << res.rejection_rate << ','
        << res.rate_se << ',' << res.mean_accrual << ',' << res.mean_a_add << ','
        << res.flagged << '\n';
  }
  if (!json_path.empty()) write_json_file(json_path, scenario_result_to_json(res));
  return 0;
}

// 256-point rejection ellipse on the sqrt(n)*dU scale:
// { x : x^T (n dV)^{-1} x = c } with c the chi2_d quantile at the stage level.
json ellipse_points(const StageResult& sr, double level, std::size_t n) {
  const double c = level >= 1.0 ? 0.0 : chi2_isf(level, static_cast<unsigned>(sr.du.size()));
  SymMatrix scaled(sr.dv.dim());
  for (std::size_t i = 0; i < sr.dv.dim(); ++i)
    for (std::size_t k = 0; k < sr.dv.dim(); ++k)
      scaled(i, k) = sr.dv(i, k) * static_cast<double>(n);
  const auto L = cholesky_lower(scaled);
  json pts = json::array();
  for (int i = 0; i < 256; ++i) {
    const double phi = 2.0 * 3.14159265358979323846 * i / 256;
    const double r = std::sqrt(c);
    const double e0 = r * std::cos(phi), e1 = r * std::sin(phi);
    pts.push_back({L[0] * e0, L[2] * e0 + L[3] * e1});
  }
  return pts;
}

int cmd_analyze(const std::string& transitions, const std::string& roster,
                const std::string& design_path, int stage, double t_override,
                const std::vector<double>& prior_p, const std::string& report_path,
                const std::string& ellipse_path) {
  const DesignFile df = load_design_file(design_path);
  if (stage < 1 || stage > df.design.stages) {
    std::cerr << "error: stage must lie in 1.." << df.design.stages << "\n";
    return kExitUsage;
  }
  if (static_cast<int>(prior_p.size()) != stage - 1) {
    std::cerr << "error: stage " << stage << " needs " << stage - 1
              << " prior stagewise p-values (--prior-p)\n";
    return kExitUsage;
  }
  const Cohort cohort = load_cohort(transitions, roster);
  const Boundaries bounds =
      sequential_boundaries(df.design.family, df.design.stages, df.design.alpha,
                            info_fractions(df.design), df.design.custom_z);
  const double t_now = t_override > 0.0 ? t_override : df.design.analysis_times[stage - 1];
  const double t_prev = stage == 1 ? 0.0 : df.design.analysis_times[stage - 2];

  const auto [du, dv] = stage_increment(cohort, df.events, {}, t_prev, t_now);
  StageResult sr = stage_statistic(du.values, dv.values);
  sr.stage = stage;
  sr.t = t_now;
  const InvertibilityReport inv = invertibility_report(df.assumptions.model, df.events);

  std::vector<double> ps = prior_p;
  ps.push_back(sr.p);
  const CombineResult comb = combine_stages(ps, df.design.effective_weights(), bounds);
  const double level = comb.stage_levels.back();

  json report = stage_result_to_json(sr, inv);
  report["decision"] = comb.reject && comb.decided_stage == stage ? "reject" : "continue";
  report["stage_level"] = level;
  if (!comb.reject && stage < df.design.stages)
    report["next_conditional_level"] = comb.next_conditional_level;

  std::cout << "stage " << stage << " at t=" << t_now << ": S=" << sr.s << " p=" << sr.p
            << " level=" << level << " -> " << report["decision"].get<std::string>()
            << (sr.rank_deficient ? "  [rank-deficient dV, pseudo-inverse]" : "") << "\n";

  if (!report_path.empty()) write_json_file(report_path, report);
  if (!ellipse_path.empty()) {
    std::ofstream out(ellipse_path);
    if (!out) {
      std::cerr << "error: cannot write " << ellipse_path << "\n";
      return kExitUsage;
    }
    out.precision(12);
    out << "x,y,series\n";
    const auto pts = ellipse_points(sr, level, cohort.size());
    for (const auto& p : pts)
      out << p[0].get<double>() << ',' << p[1].get<double>() << ",boundary\n";
    const double sn = std::sqrt(static_cast<double>(cohort.size()));
    out << sn * sr.du[0] << ',' << sn * sr.du[1] << ",observed\n";
  }
  return 0;
}

int cmd_recalc(const std::string& transitions, const std::string& roster,
               const std::string& design_path, double a_min, double a_max,
               const std::string& out_path) {
  if (a_min > a_max) {
    std::cerr << "error: --a-min must not exceed --a-max\n";
    return kExitUsage;
  }
  const DesignFile df = load_design_file(design_path);
  const Cohort cohort = load_cohort(transitions, roster);
  if (cohort.empty()) {
    std::cerr << "error: empty interim cohort\n";
    return kExitUsage;
  }
  const Boundaries bounds =
      sequential_boundaries(df.design.family, df.design.stages, df.design.alpha,
                            info_fractions(df.design), df.design.custom_z);
  RecalcDecision dec = accrual_recalc(cohort, df.assumptions, df.events, df.design, bounds,
                                      a_min, a_max);
  // densify the psi curve for the trace
  for (int i = 0; i <= 8; ++i) {
    const double a = a_min + (a_max - a_min) * i / 8;
    dec.psi_curve.emplace_back(
        a, conditional_power(
               PlanningAssumptions{MultiStateModel(df.assumptions.model.n_states(), dec.updated),
                                   df.assumptions.accrual, df.assumptions.dropout_rate},
               df.events, df.design.analysis_times[0], a, df.assumptions.accrual.followup,
               df.assumptions.accrual.rate, dec.conditional_level));
  }
  std::cout << "p1=" << dec.p1 << " conditional level=" << dec.conditional_level
            << " branch=" << dec.branch << " a_add=" << dec.a_add
            << " new final analysis t=" << dec.new_final_time
            << " projected n=" << dec.projected_n << "\n";
  for (int g = 0; g < 2; ++g)
    for (const auto& [key, est] : dec.rates[g])
      std::cout << "  group " << g << " " << key.first << "->" << key.second << ": "
                << (est.rate ? std::to_string(*est.rate) : std::string("missing"))
                << " (" << est.events << "/" << est.exposure << ")\n";
  if (!out_path.empty()) write_json_file(out_path, recalc_to_json(dec));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-sequential multi-state trial design, simulation and analysis"};
  app.require_subcommand(1);

  std::string design_path, out_path;
  auto* design = app.add_subcommand("design", "Evaluate a design file: boundaries, "
                                              "planning moments, required sample size");
  design->add_option("--design", design_path, "design JSON file")->required();
  design->add_option("--out", out_path, "write the JSON report here");

  std::string scenario_path, csv_path, json_path;
  long replicates = 0;
  std::uint64_t seed_val = 0;
  bool seed_given = false;
  int threads = 0;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo scenario");
  simulate->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  simulate->add_option("--replicates", replicates, "override the replicate count");
  simulate->add_option("--seed", seed_val, "override the seed")
      ->each([&](const std::string&) { seed_given = true; });
  simulate->add_option("--out-csv", csv_path, "append a summary CSV row here");
  simulate->add_option("--out-json", json_path, "write the JSON detail here");
  simulate->add_option("--threads", threads, "worker threads (default: hardware)");

  std::string transitions, roster;
  int stage = 1;
  double t_override = 0.0;
  std::vector<double> prior_p;
  std::string ellipse_path;
  auto* analyze = app.add_subcommand("analyze", "Stagewise analysis of a cohort CSV");
  analyze->add_option("--transitions", transitions, "transitions CSV")->required();
  analyze->add_option("--roster", roster, "roster CSV")->required();
  analyze->add_option("--design", design_path, "design JSON file")->required();
  analyze->add_option("--stage", stage, "stage index (1-based)")->required();
  analyze->add_option("--t", t_override, "override the analysis calendar time");
  analyze->add_option("--prior-p", prior_p, "stagewise p-values of earlier stages");
  analyze->add_option("--out", out_path, "write the stage report JSON here");
  analyze->add_option("--ellipse", ellipse_path, "write rejection-ellipse CSV here");

  double a_min = 0.0, a_max = 0.0;
  auto* recalc = app.add_subcommand("recalc", "Interim accrual recalculation");
  recalc->add_option("--transitions", transitions, "interim transitions CSV")->required();
  recalc->add_option("--roster", roster, "interim roster CSV")->required();
  recalc->add_option("--design", design_path, "design JSON file")->required();
  recalc->add_option("--a-min", a_min, "lower bound on the accrual extension")->required();
  recalc->add_option("--a-max", a_max, "upper bound on the accrual extension")->required();
  recalc->add_option("--out", out_path, "write the decision trace JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (design->parsed()) return cmd_design(design_path, out_path);
    if (simulate->parsed())
      return cmd_simulate(scenario_path, replicates,
                          seed_given ? std::optional<std::uint64_t>(seed_val) : std::nullopt,
                          csv_path, json_path, threads);
    if (analyze->parsed())
      return cmd_analyze(transitions, roster, design_path, stage, t_override, prior_p,
                         out_path, ellipse_path);
    if (recalc->parsed())
      return cmd_recalc(transitions, roster, design_path, a_min, a_max, out_path);
  } catch (const not_positive_definite& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
