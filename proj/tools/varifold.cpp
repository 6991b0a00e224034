// varifold: synthetic surfaces, multiscale certification and parameterization reports.

#include <CLI11.hpp>
#include <iostream>

#include "varifold/conformal.hpp"
#include "varifold/error.hpp"
#include "varifold/io.hpp"
#include "varifold/patch.hpp"
#include "varifold/report.hpp"
#include "varifold/semmes.hpp"
#include "varifold/synthetic.hpp"

using namespace varifold;

namespace {

constexpr int kUsage = 64;

struct Args {
  RunConfig cfg;
  std::string out;
  std::string format = "json";
  std::string svg;
  bool gzip = false;

  std::string kind = "flat_disk";
  int n = 5000;
  double eps = 0.05;
  double radius = 10.0;
  double extent = 1.0;
  double hole = 0.0;
  double noise = 0.0;
  bool full = false;
};

void add_analysis_options(CLI::App* sub, Args& a, bool semmes, bool conformal) {
  auto& c = a.cfg;
  sub->add_option("input", c.input, "point cloud (.csv, .csv.gz) or mesh (.off, .obj)")->required();
  sub->add_option("--sigma-max", c.sigma_max, "largest ball radius")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--floor-mult", c.floor_mult, "scale floor in mean spacings")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--gamma-max", c.gamma_max, "certification threshold")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--seed", c.seed, "seed for sampled pair statistics")->capture_default_str();
  sub->add_option("--out", a.out, "report path (stdout when omitted)");
  sub->add_option("--format", a.format, "report format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  if (semmes) {
    sub->add_option("--nu", c.nu, "fine-set threshold (0: sqrt gamma)")->check(CLI::NonNegativeNumber);
    sub->add_option("--beta", c.beta, "correspondence tolerance (0: sqrt nu)")->check(CLI::NonNegativeNumber);
    sub->add_option("--depth", c.depth, "iteration depth K")->check(CLI::Range(1, 64))->capture_default_str();
    sub->add_option("--p", c.p, "distortion exponent")->check(CLI::PositiveNumber)->capture_default_str();
  }
  if (conformal) {
    sub->add_option("--patch-sigma", c.patch_sigma, "patch radius (0: sigma-max)")->check(CLI::NonNegativeNumber);
    sub->add_option("--svg", a.svg, "write the parameter disk colored by w");
  }
}

int synth(const Args& a) {
  SyntheticSpec s;
  s.kind = parse_surface_kind(a.kind);
  s.n_points = a.n;
  s.seed = a.cfg.seed;
  s.eps = a.eps;
  s.radius = a.radius;
  s.extent = a.extent;
  s.hole_diameter = a.hole;
  s.noise = a.noise;
  s.full_sphere = a.full;
  const auto surf = generate(s);
  save_pointcloud(surf.sample, a.out, a.gzip);
  std::cerr << "wrote " << surf.sample.size() << " points to " << a.out << " (total weight " << surf.sample.total_weight()
            << ")\n";
  return 0;
}

void write_svg(const WeightedSurfaceSample& sample, const RunConfig& cfg, const std::string& path) {
  const Ball dom = enclosing_ball(sample);
  Eigen::Index best = 0;
  double d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < sample.size(); ++i)
    if (const double e = (sample.point(i) - dom.center).squaredNorm(); e < d) d = e, best = i;
  const double sigma = cfg.patch_sigma > 0.0 ? cfg.patch_sigma : cfg.sigma_max;
  const auto param = harmonic_disk_param(extract_disk_patch(sample, sample.point(best), sigma));
  write_file(path, parameterization_to_svg(param));
}

int analyze(const Args& a) {
  const auto sample = load_any(a.cfg.input);
  const auto outcome = run_command(sample, a.cfg);
  const std::string text = a.format == "csv" ? flatten_csv(outcome.report) : outcome.report.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_file(a.out, text);
  }
  if (!a.svg.empty()) write_svg(sample, a.cfg, a.svg);

  const auto& reports = outcome.report["reports"];
  if (reports.contains("chord_arc") && reports["chord_arc"].contains("gamma"))
    std::cerr << "gamma = " << reports["chord_arc"]["gamma"].get<double>() << " (max " << a.cfg.gamma_max << ")\n";
  for (const auto& [name, section] : reports.items())
    if (section.contains("error")) std::cerr << name << ": " << section["error"]["message"].get<std::string>() << "\n";
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale analysis and parameterization of sampled surfaces"};
  app.require_subcommand(1);
  Args a;

  auto* sy = app.add_subcommand("synth", "generate a synthetic surface sample");
  sy->add_option("--kind", a.kind, "flat_disk, graph, sphere_cap, cylinder_band, perturbed_disk or punched_disk")
      ->capture_default_str();
  sy->add_option("--n", a.n, "number of points")->check(CLI::PositiveNumber)->capture_default_str();
  sy->add_option("--seed", a.cfg.seed, "generator seed")->capture_default_str();
  sy->add_option("--eps", a.eps, "graph amplitude")->capture_default_str();
  sy->add_option("--radius", a.radius, "sphere or cylinder radius")->check(CLI::PositiveNumber)->capture_default_str();
  sy->add_option("--extent", a.extent, "disk radius or cap base radius")->check(CLI::PositiveNumber)->capture_default_str();
  sy->add_option("--hole", a.hole, "punched disk hole diameter")->check(CLI::NonNegativeNumber);
  sy->add_option("--noise", a.noise, "normal noise amplitude")->check(CLI::NonNegativeNumber);
  sy->add_flag("--full-sphere", a.full, "sample the whole sphere");
  sy->add_flag("--gzip", a.gzip, "compress the output");
  sy->add_option("--out", a.out, "output CSV")->required();

  struct Sub {
    const char* name;
    const char* help;
    bool semmes, conformal;
  };
  const Sub subs[] = {{"analyze", "certify the chord-arc constant", false, false},
                      {"beta", "beta numbers, Carleson sum and the no-hole check", false, false},
                      {"curvature", "mean curvature field and monotonicity", false, false},
                      {"parameterize", "iterated graph parameterization", true, false},
                      {"conformal", "harmonic disk parameterization diagnostics", false, true},
                      {"pipeline", "all of the above", true, true}};
  for (const auto& s : subs) add_analysis_options(app.add_subcommand(s.name, s.help), a, s.semmes, s.conformal);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (sy->parsed()) return synth(a);
    a.cfg.command = app.get_subcommands().front()->get_name();
    return analyze(a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
