#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "varifold/sample.hpp"

namespace varifold {

// ---------------------------------------------------------------------------
// gauge

enum class GaugeSource { Initial, FineSetDistance };

/// Per-point scale gauge delta(x) >= 0 on the sample.
struct DeltaField {
  std::vector<double> values;
  GaugeSource source = GaugeSource::Initial;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double max() const;
};

/// (R - |x - c|) / divisor for the domain B(c, R); with R = 1 and divisor 100
/// this is (1 - |x|) / 100. Throws PointOutsideDomain.
DeltaField make_delta0(const WeightedSurfaceSample& sample, const Ball& domain, double divisor = 100.0);

struct FineSet;

/// min(d(x, F), (R - |x - c|) / divisor). Throws EmptyFineSet.
DeltaField next_delta(const WeightedSurfaceSample& sample, const FineSet& fine, const Ball& domain,
                      double divisor = 100.0);

// ---------------------------------------------------------------------------
// fine set

struct FineSet {
  std::vector<Eigen::Index> members;  ///< ascending sample indices
  std::vector<char> is_member;        ///< per sample point
  double nu = 0.0;
  /// Reference plane T_{x, 2 delta(x)} per sample point (affine). For
  /// delta = 0 or tiny balls this is the point's own tangent plane.
  std::vector<Plane> planes;
  std::vector<double> tilt;  ///< local maximal tilt against planes[i]
  double bad_weight = 0.0;   ///< weight of the non-members
};

/// Members: delta = 0, or local maximal tilt on B(x, 2 delta(x)) against the
/// PCA plane of that ball is <= nu. Scales below `floor` are not resolved and
/// count as zero tilt. Throws InvalidSpec for nu <= 0.
FineSet extract_fine_set(const WeightedSurfaceSample& sample, const DeltaField& delta, double nu, double floor);

// ---------------------------------------------------------------------------
// net and partition of unity

struct SeparatedNet {
  std::vector<Eigen::Index> centers;  ///< sample indices, decreasing delta
  PointMatrix points;                 ///< center positions (columns)
  std::vector<double> delta;          ///< delta at each center
  std::vector<int> group;             ///< group id per center, 0-based
  int groups = 0;
  bool group_bound_holds = true;  ///< groups <= 10^(5m+1)
  double max_delta = 0.0;
  std::shared_ptr<const KdTree> index;
};

/// Greedy packing at (1/2) 1e-3 delta in decreasing-delta order, then greedy
/// coloring so that centers of one group are delta/10 apart. Throws EmptySet
/// when delta vanishes everywhere.
SeparatedNet build_separated_net(const WeightedSurfaceSample& sample, const DeltaField& delta);

/// Normalized C^1 bumps (1 - |q - x_j|^2 / (delta_j / 2)^2)_+^2. Returns
/// (center slot, theta) for the nonzero entries. Throws UncoveredQuery.
std::vector<std::pair<std::size_t, double>> partition_of_unity(const SeparatedNet& net, const Vec& query);

// ---------------------------------------------------------------------------
// smoothed surface

/// Affine graph over a reference plane: x(t) = o + B t + a + A t, with a and
/// the columns of A in the normal space.
struct GraphPatch {
  Eigen::Index center = -1;
  Plane plane;
  Vec offset;
  Mat slope;
  int support = 0;        ///< fine points used in the fit
  bool widened = false;   ///< fitted on B(u, 2 delta) for lack of fine points nearby
  bool fallback = false;  ///< no fine points at all; the plane itself was used

  Vec position(const Vec& t) const;
};

struct StageOptions {
  double graph_mult = 10.0;   ///< graph test bound = graph_mult * nu
  bool enforce_graph_test = true;
  int graph_test_points = 48; ///< per-ball subsample for the pairwise scan
};

struct SmoothedSurfaceStage {
  int level = 0;
  int ambient_dim = 3;
  int intrinsic_dim = 2;
  PointMatrix points;
  std::vector<double> weights;
  std::vector<Plane> tangents;
  std::vector<double> delta;
  std::vector<Eigen::Index> origin;  ///< sample index, or the net center that produced it
  std::vector<char> synthesized;
  std::vector<GraphPatch> patches;   ///< one per net center
  double step = 0.0;                 ///< grid step (mean spacing)

  // filled by normal_field
  std::vector<Mat> normal;  ///< p^perp per point
  std::vector<Mat> frame;   ///< orthonormal basis of the complement of p^perp

  // measured constants
  int synthesized_count = 0;
  int fallback_patches = 0;
  double overlap_mismatch = 0.0;    ///< worst height disagreement where a patch kept existing points
  double synthesis_distance = 0.0;  ///< max distance of a synthesized point to the input sample
  double graph_lipschitz = 0.0;     ///< worst measured graph constant over the tested balls
  Vec graph_worst_location;
  int graph_balls = 0;
  double normal_lipschitz = 0.0;    ///< worst |p(z) - p(y)| / |z - y|
  double normal_constant = 0.0;     ///< worst quotient * delta / nu
  int zero_gauge_normals = 0;       ///< uncovered delta = 0 points that kept their own normal

  std::shared_ptr<const KdTree> index;

  Eigen::Index size() const { return points.cols(); }
  WeightedSurfaceSample as_sample() const;
};

/// Fine points plus graph points synthesized over each net center's reference
/// plane. Groups are processed in order; existing points within one grid step
/// of a new node are kept. Throws GraphTestFailure when a tested ball is not a
/// graph with constant <= graph_mult * nu.
SmoothedSurfaceStage build_sigma_delta(const WeightedSurfaceSample& sample, const FineSet& fine,
                                       const SeparatedNet& net, const DeltaField& delta, double nu,
                                       const StageOptions& opts = {});

/// p^perp = nearest rank n-m projector to sum theta_j p_j^perp, from the net
/// centers' reference planes. Fills stage.normal, stage.frame and the Lipschitz
/// diagnostics.
void normal_field(SmoothedSurfaceStage& stage, const SeparatedNet& net, const FineSet& fine, double nu);

/// The same blend at an arbitrary point.
Mat blended_normal(const SeparatedNet& net, const FineSet& fine, const Vec& query, int intrinsic_dim);

// ---------------------------------------------------------------------------
// correspondence

struct CorrespondenceMap {
  PointMatrix source;
  std::vector<Eigen::Index> target;  ///< stage point whose chart carried the solve
  PointMatrix image;                 ///< y = tau(x)
  PointMatrix offset;                ///< v = x - y, normal at the chart
  double max_displacement = 0.0;
  int depth = 1;
};

/// For each source x, the point y on the target stage with x - y normal to
/// the stage (in the chart of a nearby stage point) and |x - y| <=
/// beta * max(eta_target, source_gauge) + slack. Throws NoValidPreimage.
CorrespondenceMap project_tau(const PointMatrix& source, std::span<const double> source_gauge,
                              const SmoothedSurfaceStage& target, double beta, double slack);

// ---------------------------------------------------------------------------
// distortion

struct DistortionOptions {
  double p = 2.0;
  Eigen::Index all_pairs_limit = 2000;
  int nearest = 16;
  int strata = 64;
  std::uint64_t seed = 1;
};

struct DistortionReport {
  std::vector<double> upper;     ///< f*(x)
  std::vector<double> lower;     ///< f_*(x)
  std::vector<double> id_upper;  ///< (f - id)*(x)
  double lp_upper = 0.0;         ///< sum w (f*)^p
  double lp_lower = 0.0;         ///< sum w (f_*)^-p
  double lp_id = 0.0;            ///< sum w ((f - id)*)^p
  double max_upper = 0.0;
  double min_lower = 0.0;
  double spread = 0.0;           ///< max f* / min f_*
  double holder_exponent = 1.0;  ///< slope of log|f(x) - f(y)| against log|x - y|
  double p = 2.0;
  bool all_pairs = true;
};

/// Empirical Lipschitz quotients of the map source_i -> target_i. All pairs
/// up to `all_pairs_limit` points, else nearest neighbors plus one random
/// partner per index stratum.
DistortionReport distortion_report(const PointMatrix& source, const PointMatrix& target,
                                   std::span<const double> weights, const DistortionOptions& opts = {});

// ---------------------------------------------------------------------------
// iteration

struct SemmesOptions {
  std::optional<Ball> domain;  ///< default: smallest centered ball around the centroid
  double gamma = 0.0;          ///< certified chord-arc constant
  double nu = 0.0;             ///< default sqrt(gamma)
  double beta = 0.0;           ///< default sqrt(nu)
  int depth = 12;
  double divisor = 4.0;        ///< gauge divisor of the initial delta
  double floor_mult = 8.0;
  double acceptance = 50.0;    ///< multiplier for measured C constants
  bool early_exit = true;      ///< stop once a step moves nothing by more than the mean spacing
  bool check_contraction = true;
  StageOptions stage;
  DistortionOptions distortion;
};

struct StageSummary {
  int index = 0;
  Eigen::Index points = 0;
  int synthesized = 0;
  Eigen::Index fine = 0;
  double bad_weight = 0.0;
  int net_size = 0;
  int groups = 0;
  double max_delta = 0.0;
  double graph_lipschitz = 0.0;
  double normal_constant = 0.0;
  double overlap_mismatch = 0.0;
  int fallback_patches = 0;
};

struct SemmesResult {
  double nu = 0.0;
  double beta = 0.0;
  Ball domain;
  Plane base_plane;              ///< parameter plane of the final map
  SmoothedSurfaceStage stage0;
  SmoothedSurfaceStage last_stage;
  std::vector<StageSummary> stages;
  std::vector<CorrespondenceMap> steps;
  std::vector<double> displacements;  ///< max |tau_j(x) - x| per step
  std::vector<double> step_constants; ///< max |tau_j(x) - x| / (sqrt(nu) d(x, F_j))
  CorrespondenceMap composed;         ///< tau_{0,K} on Sigma_0
  std::vector<std::vector<Eigen::Index>> chains;  ///< target index per step for each Sigma_0 point
  int exit_step = 0;
  double tail_bound = 0.0;            ///< geometric tail from the measured contraction
  DistortionReport distortion;
};

/// delta_0, F_0, Sigma_0, then K steps of delta, F, Sigma, tau. Stops when a
/// step moves nothing by more than the mean spacing. Throws NonContraction
/// when the displacement fails to halve on two consecutive steps.
SemmesResult iterate_parameterization(const WeightedSurfaceSample& sample, const SemmesOptions& opts);

/// Center = weighted centroid, radius = farthest point (scaled by 1 + 1e-9).
Ball enclosing_ball(const WeightedSurfaceSample& sample);

}  // namespace varifold
