#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include <json.hpp>

#include "varifold/sample.hpp"

namespace varifold {

inline constexpr const char* kSchemaVersion = "1.0";

/// Every threshold a run depends on. Echoed verbatim into the report.
struct RunConfig {
  std::string command = "pipeline";
  std::string input;
  std::uint64_t seed = 1;

  double sigma_max = 0.5;
  double floor_mult = 8.0;
  int refinements = 8;
  double gamma_max = 0.1;

  double nu = 0.0;    ///< 0: sqrt(gamma)
  double beta = 0.0;  ///< 0: sqrt(nu)
  int depth = 12;
  double p = 2.0;
  double divisor = 4.0;
  double acceptance = 50.0;
  double graph_mult = 10.0;

  double curvature_radius_mult = 10.0;
  double angle_tolerance = 0.2;

  double patch_sigma = 0.0;  ///< 0: sigma_max
  int dyadic_depth = 8;
  double margin = 0.1;
};

nlohmann::json config_json(const RunConfig& cfg);

/// Library and build versions.
nlohmann::json versions_json();

/// One module section each. Sections run on the enclosing ball of the sample
/// (weighted centroid, farthest point).
nlohmann::json chord_arc_section(const WeightedSurfaceSample& sample, const RunConfig& cfg);
nlohmann::json beta_section(const WeightedSurfaceSample& sample, const RunConfig& cfg);
nlohmann::json curvature_section(const WeightedSurfaceSample& sample, const RunConfig& cfg);
/// `gamma` is the certified constant feeding the default nu.
nlohmann::json semmes_section(const WeightedSurfaceSample& sample, const RunConfig& cfg, double gamma);
nlohmann::json conformal_section(const WeightedSurfaceSample& sample, const RunConfig& cfg);

struct RunOutcome {
  nlohmann::json report;
  int exit_code = 0;  ///< 0 ok, 1 a section failed, 2 gamma above gamma_max
};

/// Runs cfg.command (analyze, beta, curvature, parameterize, conformal or
/// pipeline) and assembles the bundle. Section errors are recorded in place.
RunOutcome run_command(const WeightedSurfaceSample& sample, const RunConfig& cfg);

/// Replaces non-finite numbers with null and returns their paths.
std::vector<std::string> scrub_nonfinite(nlohmann::json& j);
/// True when every number in the tree is finite.
bool all_finite(const nlohmann::json& j);

/// The bundle without its wall-clock section.
nlohmann::json without_timing(nlohmann::json j);

/// "path,value" lines, one per leaf.
std::string flatten_csv(const nlohmann::json& j);

}  // namespace varifold
