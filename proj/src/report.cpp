#include "varifold/report.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <zlib.h>

#include "varifold/conformal.hpp"
#include "varifold/curvature.hpp"
#include "varifold/error.hpp"
#include "varifold/multiscale.hpp"
#include "varifold/parallel.hpp"
#include "varifold/patch.hpp"
#include "varifold/semmes.hpp"

#ifndef VARIFOLD_VERSION
#define VARIFOLD_VERSION "0.0.0"
#endif

namespace varifold {

using nlohmann::json;

namespace {

json vec_json(const Eigen::Ref<const Vec>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json ball_json(const Ball& b) { return {{"center", vec_json(b.center)}, {"radius", b.radius}}; }

json error_json(const std::exception& e) {
  json j = {{"message", e.what()}};
  if (const auto* ve = dynamic_cast<const Error*>(&e)) j["code"] = std::string(to_string(ve->code()));
  return j;
}

Eigen::Index nearest_to(const WeightedSurfaceSample& s, const Vec& x) {
  Eigen::Index best = 0;
  double d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double e = (s.point(i) - x).squaredNorm();
    if (e < d) d = e, best = i;
  }
  return best;
}

CurvatureOptions curvature_options(const RunConfig& cfg) {
  CurvatureOptions o;
  o.radius_mult = cfg.curvature_radius_mult;
  o.angle_tolerance = cfg.angle_tolerance;
  return o;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

json curvature_from_field(const WeightedSurfaceSample& s, const RunConfig& cfg, const CurvatureField& f) {
  const Ball dom = enclosing_ball(s);
  // statistics on the inner half: the rim carries the boundary term of the first variation
  const Ball inner(dom.center, 0.5 * dom.radius);
  double hmax = 0.0, hsum = 0.0, wsum = 0.0;
  int flagged = 0, points = 0;
  std::vector<double> rel;
  const auto& ref = s.reference_curvature();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!inner.contains(s.point(i))) continue;
    const auto k = static_cast<std::size_t>(i);
    const double n = f.h[k].norm();
    hmax = std::max(hmax, n);
    hsum += s.weight(i) * n;
    wsum += s.weight(i);
    flagged += f.perpendicular[k] ? 0 : 1;
    ++points;
    if (ref) rel.push_back((f.h[k] - (*ref)[k]).norm() / std::max((*ref)[k].norm(), 1e-12));
  }
  json j = {{"radius", f.radius},
            {"flagged", f.flagged},
            {"failed", f.failed},
            {"inner", ball_json(inner)},
            {"inner_points", points},
            {"inner_flagged", flagged},
            {"inner_mean_norm", wsum > 0 ? hsum / wsum : 0.0},
            {"inner_max_norm", hmax},
            {"inner_willmore", willmore_energy(s, inner, f.h)}};
  if (ref) j["reference_relative_error_median"] = median(rel);

  const Vec x = s.point(nearest_to(s, dom.center));
  const double floor = resolution_floor(s, cfg.floor_mult);
  const double sigma = 0.5 * cfg.sigma_max, rho = cfg.sigma_max;
  try {
    const auto m = monotonicity_identity(s, x, sigma, rho, f.h, floor);
    j["monotonicity"] = {{"center", vec_json(x)},
                         {"sigma", sigma},
                         {"rho", rho},
                         {"lhs", m.lhs},
                         {"rhs", m.rhs},
                         {"residual", m.residual},
                         {"relative_residual", m.relative_residual}};
  } catch (const std::exception& e) {
    j["monotonicity"] = {{"error", error_json(e)}};
  }
  return j;
}

json conformal_with_field(const WeightedSurfaceSample& s, const RunConfig& cfg, const CurvatureField* field) {
  const Ball dom = enclosing_ball(s);
  const Vec xi = s.point(nearest_to(s, dom.center));
  const double sigma = cfg.patch_sigma > 0.0 ? cfg.patch_sigma : cfg.sigma_max;
  const auto patch = extract_disk_patch(s, xi, sigma);
  const auto param = harmonic_disk_param(patch);
  std::vector<Vec> h;
  if (field) h = vertex_curvature(param, field->h);
  const auto sum = summarize(param, h, cfg.dyadic_depth, cfg.margin);
  json j = {{"center", vec_json(xi)},
            {"sigma", sigma},
            {"vertices", param.vertex_count()},
            {"triangles", param.triangle_count()},
            {"folded", param.folded},
            {"energy", sum.energy},
            {"conformal_area", sum.conformal_area},
            {"energy_gap_relative", sum.energy_gap_relative},
            {"max_dilatation", sum.max_dilatation},
            {"w_sup", sum.w_sup},
            {"bmo", sum.bmo},
            {"a2", sum.a2},
            {"inverse_holder_max", sum.inverse_holder_max},
            {"quasisymmetry_max", sum.quasisymmetry_max},
            {"pin_error", sum.pin_error},
            {"pin_bound", param.pin_bound},
            {"squares", sum.squares}};
  if (sum.has_curvature) {
    const auto& r = sum.residuals;
    j["residuals"] = {{"mc_residual", r.mc_residual},
                      {"mc_reference", r.mc_reference},
                      {"mc_relative", r.mc_relative},
                      {"gauss_residual", r.gauss_residual},
                      {"gauss_reference", r.gauss_reference},
                      {"frame_energy", r.frame_energy},
                      {"interior", r.interior}};
  }
  return j;
}

void scrub(json& j, const std::string& path, std::vector<std::string>& out) {
  if (j.is_number_float()) {
    if (!std::isfinite(j.get<double>())) {
      out.push_back(path);
      j = nullptr;
    }
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) scrub(it.value(), path + "/" + it.key(), out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) scrub(j[i], path + "/" + std::to_string(i), out);
  }
}

void flatten(const json& j, const std::string& path, std::string& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), path.empty() ? it.key() : path + "." + it.key(), out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], path + "." + std::to_string(i), out);
  } else {
    std::string v = j.is_string() ? j.get<std::string>() : j.dump();
    if (v.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      v = q + "\"";
    }
    out += path + "," + v + "\n";
  }
}

}  // namespace

json config_json(const RunConfig& c) {
  return {{"command", c.command},
          {"input", c.input},
          {"seed", c.seed},
          {"multiscale", {{"sigma_max", c.sigma_max}, {"floor_mult", c.floor_mult}, {"refinements", c.refinements}}},
          {"certification", {{"gamma_max", c.gamma_max}}},
          {"semmes",
           {{"nu", c.nu},
            {"beta", c.beta},
            {"depth", c.depth},
            {"p", c.p},
            {"divisor", c.divisor},
            {"acceptance", c.acceptance},
            {"graph_mult", c.graph_mult}}},
          {"curvature", {{"radius_mult", c.curvature_radius_mult}, {"angle_tolerance", c.angle_tolerance}}},
          {"conformal", {{"patch_sigma", c.patch_sigma}, {"dyadic_depth", c.dyadic_depth}, {"margin", c.margin}}}};
}

json versions_json() {
  return {{"varifold", VARIFOLD_VERSION},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                        std::to_string(BOOST_VERSION % 100)},
          {"zlib", ZLIB_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

json chord_arc_section(const WeightedSurfaceSample& s, const RunConfig& cfg) {
  const Ball dom = enclosing_ball(s);
  const double floor = resolution_floor(s, cfg.floor_mult);
  const auto fam = ScaleFamily::dyadic(s, dom, cfg.sigma_max, floor);
  const auto rep = certify_chord_arc(s, fam, cfg.refinements);

  std::map<double, json, std::greater<>> scales;
  for (const auto& b : rep.balls) {
    auto& e = scales[b.radius];
    if (e.is_null()) e = {{"radius", b.radius}, {"balls", 0}, {"failed", 0}, {"density_deviation", 0.0},
                          {"flatness", 0.0}, {"tilt", 0.0}, {"gamma", 0.0}};
    e["balls"] = e["balls"].get<int>() + 1;
    if (b.error) {
      e["failed"] = e["failed"].get<int>() + 1;
      continue;
    }
    e["density_deviation"] = std::max(e["density_deviation"].get<double>(), std::abs(b.density - 1.0));
    e["flatness"] = std::max(e["flatness"].get<double>(), b.flatness);
    e["tilt"] = std::max(e["tilt"].get<double>(), b.tilt);
    e["gamma"] = std::max(e["gamma"].get<double>(), b.gamma());
  }
  json per_scale = json::array();
  for (auto& [r, e] : scales) per_scale.push_back(e);

  return {{"gamma", rep.gamma},
          {"gamma_max", cfg.gamma_max},
          {"certified", rep.gamma <= cfg.gamma_max},
          {"floor", rep.floor},
          {"domain", ball_json(rep.domain)},
          {"balls", rep.balls.size()},
          {"failed", rep.failed},
          {"scales", per_scale}};
}

json beta_section(const WeightedSurfaceSample& s, const RunConfig& cfg) {
  const Ball dom = enclosing_ball(s);
  const Vec xi = s.point(nearest_to(s, dom.center));
  const double floor = resolution_floor(s, cfg.floor_mult);
  const auto prof = beta_profile(s, xi, cfg.sigma_max, floor);
  // the Carleson sum needs four octaves below sigma_max
  const double car_floor = std::min(floor, cfg.sigma_max / 4.0);
  const auto car = carleson_sum(s, xi, cfg.sigma_max, car_floor);
  json j = {{"center", vec_json(xi)},
            {"scales", prof.scales},
            {"beta_sq", prof.beta_sq},
            {"carleson", {{"sigma", cfg.sigma_max}, {"floor", car_floor}, {"value", car.value}, {"normalized", car.normalized}}}};
  try {
    j["carleson"]["dperp_bound"] = carleson_dperp_bound(s, xi, cfg.sigma_max);
  } catch (const std::exception& e) {
    j["carleson"]["dperp_bound_error"] = error_json(e);
  }
  const auto hole = projection_no_hole_check(s, xi, cfg.sigma_max);
  json gaps = json::array();
  for (const auto& g : hole.gap_points) gaps.push_back(vec_json(g));
  j["no_hole"] = {{"pass", hole.pass}, {"cells", hole.cells}, {"gaps", hole.gap_cells.size()}, {"gap_points", gaps}};
  return j;
}

json curvature_section(const WeightedSurfaceSample& s, const RunConfig& cfg) {
  const auto field = estimate_curvature_field(s, curvature_options(cfg));
  return curvature_from_field(s, cfg, field);
}

json semmes_section(const WeightedSurfaceSample& s, const RunConfig& cfg, double gamma) {
  SemmesOptions o;
  o.gamma = gamma;
  o.nu = cfg.nu;
  o.beta = cfg.beta;
  o.depth = cfg.depth;
  o.divisor = cfg.divisor;
  o.floor_mult = cfg.floor_mult;
  o.acceptance = cfg.acceptance;
  o.stage.graph_mult = cfg.graph_mult;
  o.distortion.p = cfg.p;
  o.distortion.seed = cfg.seed;
  const auto r = iterate_parameterization(s, o);

  json stages = json::array();
  for (const auto& st : r.stages)
    stages.push_back({{"index", st.index},
                      {"points", st.points},
                      {"synthesized", st.synthesized},
                      {"fine", st.fine},
                      {"bad_weight", st.bad_weight},
                      {"net_size", st.net_size},
                      {"groups", st.groups},
                      {"max_delta", st.max_delta},
                      {"graph_lipschitz", st.graph_lipschitz},
                      {"normal_constant", st.normal_constant},
                      {"overlap_mismatch", st.overlap_mismatch},
                      {"fallback_patches", st.fallback_patches}});
  const auto& d = r.distortion;
  return {{"gamma", gamma},
          {"nu", r.nu},
          {"beta", r.beta},
          {"domain", ball_json(r.domain)},
          {"exit_step", r.exit_step},
          {"tail_bound", r.tail_bound},
          {"displacements", r.displacements},
          {"step_constants", r.step_constants},
          {"max_displacement", r.composed.max_displacement},
          {"stages", stages},
          {"distortion",
           {{"p", d.p},
            {"spread", d.spread},
            {"max_upper", d.max_upper},
            {"min_lower", d.min_lower},
            {"lp_upper", d.lp_upper},
            {"lp_lower", d.lp_lower},
            {"lp_id", d.lp_id},
            {"holder_exponent", d.holder_exponent},
            {"all_pairs", d.all_pairs}}}};
}

json conformal_section(const WeightedSurfaceSample& s, const RunConfig& cfg) {
  const auto field = estimate_curvature_field(s, curvature_options(cfg));
  return conformal_with_field(s, cfg, &field);
}

RunOutcome run_command(const WeightedSurfaceSample& s, const RunConfig& cfg) {
  static const std::vector<std::string> known = {"analyze", "beta", "curvature", "parameterize", "conformal", "pipeline"};
  if (std::find(known.begin(), known.end(), cfg.command) == known.end())
    throw Error(ErrorCode::InvalidSpec, "unknown command '" + cfg.command + "'");

  using clock = std::chrono::steady_clock;
  RunOutcome out;
  json reports = json::object();
  json timing = json::object();
  bool failed = false;
  const auto run = [&](const std::string& name, auto&& body) {
    const auto t0 = clock::now();
    try {
      reports[name] = body();
    } catch (const std::exception& e) {
      reports[name] = {{"error", error_json(e)}};
      failed = true;
    }
    timing[name] = std::chrono::duration<double>(clock::now() - t0).count();
  };

  const bool all = cfg.command == "pipeline";
  std::optional<double> gamma;
  if (all || cfg.command == "analyze" || cfg.command == "parameterize") {
    run("chord_arc", [&] {
      auto j = chord_arc_section(s, cfg);
      gamma = j["gamma"].get<double>();
      return j;
    });
  }
  if (all || cfg.command == "beta") run("beta", [&] { return beta_section(s, cfg); });

  std::optional<CurvatureField> field;
  if (all || cfg.command == "curvature") {
    run("curvature", [&] {
      field = estimate_curvature_field(s, curvature_options(cfg));
      return curvature_from_field(s, cfg, *field);
    });
  }
  if (all || cfg.command == "parameterize") {
    run("semmes", [&] {
      if (!gamma) throw Error(ErrorCode::InvalidSpec, "no certified gamma");
      return semmes_section(s, cfg, *gamma);
    });
  }
  if (all || cfg.command == "conformal") {
    run("conformal", [&] {
      if (!field) field = estimate_curvature_field(s, curvature_options(cfg));
      return conformal_with_field(s, cfg, &*field);
    });
  }

  const bool over = gamma && *gamma > cfg.gamma_max;
  out.exit_code = failed ? 1 : over ? 2 : 0;

  json& r = out.report;
  r["schema_version"] = kSchemaVersion;
  r["metadata"] = {{"seed", cfg.seed},
                   {"versions", versions_json()},
                   {"threads", thread_count()},
                   {"sample",
                    {{"points", s.size()},
                     {"ambient_dim", s.ambient_dim()},
                     {"intrinsic_dim", s.intrinsic_dim()},
                     {"total_weight", s.total_weight()},
                     {"mean_spacing", s.mean_spacing()},
                     {"has_reference_curvature", s.reference_curvature().has_value()}}}};
  r["config"] = config_json(cfg);
  r["reports"] = reports;
  r["status"] = {{"exit_code", out.exit_code}, {"certified", gamma ? json(!over) : json(nullptr)}};
  const auto bad = scrub_nonfinite(r);
  r["status"]["nonfinite"] = bad;
  r["timing"] = timing;
  return out;
}

std::vector<std::string> scrub_nonfinite(json& j) {
  std::vector<std::string> out;
  scrub(j, "", out);
  return out;
}

bool all_finite(const json& j) {
  if (j.is_number_float()) return std::isfinite(j.get<double>());
  if (j.is_object() || j.is_array())
    for (const auto& v : j)
      if (!all_finite(v)) return false;
  return true;
}

json without_timing(json j) {
  j.erase("timing");
  return j;
}

std::string flatten_csv(const json& j) {
  std::string out = "key,value\n";
  flatten(j, "", out);
  return out;
}

}  // namespace varifold
