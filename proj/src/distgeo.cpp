#include "confgen/distgeo.hpp"

#include <cmath>
#include <string>

#include "confgen/errors.hpp"
#include "confgen/tape.hpp"

namespace confgen::dg {

void InnerLoopConfig::validate() const {
  if (steps < 1) throw ConfigError("inner loop: steps must be >= 1");
  if (learning_rate <= 0.0)
    throw ConfigError("inner loop: learning rate must be positive");
  if (init_scale <= 0.0)
    throw ConfigError("inner loop: init_scale must be positive");
  if (restarts < 1) throw ConfigError("inner loop: restarts must be >= 1");
  if (early_stop_tol < 0.0)
    throw ConfigError("inner loop: early_stop_tol must be >= 0");
}

namespace {

void check_instance(const mol::Conformation& R, const mol::DistanceVector& d,
                    const mol::MolecularGraph& g) {
  if (!g.expanded)
    throw ValidationError("inner objective requires an expanded graph");
  if (R.atom_count() != g.atom_count())
    throw ValidationError("conformation does not match graph atom count");
  if (d.size() != g.edge_count())
    throw ValidationError("distance vector does not match graph edge count");
  for (const auto& row : R.xyz)
    for (double c : row)
      if (std::isnan(c)) throw NumericError("NaN coordinate in conformation");
  for (double v : d.values)
    if (std::isnan(v)) throw NumericError("NaN entry in distance vector");
}

}  // namespace

double inner_objective(const mol::Conformation& R, const mol::DistanceVector& d,
                       const mol::MolecularGraph& g) {
  check_instance(R, d, g);
  double h = 0.0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& edge = g.edges[e];
    const Vec3& a = R.xyz[edge.u];
    const Vec3& b = R.xyz[edge.v];
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    const double s = std::sqrt(dx * dx + dy * dy + dz * dz + kNormEpsilon);
    const double r = s - d.values[e];
    h += r * r;
  }
  return h;
}

std::vector<Vec3> inner_gradient(const mol::Conformation& R,
                                 const mol::DistanceVector& d,
                                 const mol::MolecularGraph& g) {
  check_instance(R, d, g);
  std::vector<Vec3> grad(R.xyz.size(), Vec3{0, 0, 0});
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& edge = g.edges[e];
    const Vec3& a = R.xyz[edge.u];
    const Vec3& b = R.xyz[edge.v];
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    const double s = std::sqrt(dx * dx + dy * dy + dz * dz + kNormEpsilon);
    const double coef = 2.0 * (s - d.values[e]) / s;
    grad[edge.u][0] += coef * dx;
    grad[edge.u][1] += coef * dy;
    grad[edge.u][2] += coef * dz;
    grad[edge.v][0] -= coef * dx;
    grad[edge.v][1] -= coef * dy;
    grad[edge.v][2] -= coef * dz;
  }
  return grad;
}

InnerTrajectory solve_distance_geometry(const mol::DistanceVector& d,
                                        const mol::MolecularGraph& g,
                                        const InnerLoopConfig& cfg,
                                        RandomStream rng) {
  cfg.validate();
  const int n = g.atom_count();

  InnerTrajectory best;
  bool have_best = false;

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    RandomStream stream = rng.sub("restart", static_cast<std::uint64_t>(restart));
    mol::Conformation R;
    R.xyz.resize(static_cast<std::size_t>(n));
    for (auto& row : R.xyz)
      for (auto& c : row) c = cfg.init_scale * stream.normal();

    InnerTrajectory traj;
    double h = inner_objective(R, d, g);
    if (cfg.store_trajectory) traj.states.push_back(R);
    traj.objective_values.push_back(h);

    mol::Conformation final_R = R;
    for (int t = 0; t < cfg.steps; ++t) {
      const auto grad = inner_gradient(R, d, g);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j)
          R.xyz[i][j] -= cfg.learning_rate * grad[i][j];
      h = inner_objective(R, d, g);
      if (!std::isfinite(h) || h > kDivergenceThreshold)
        throw DivergedError("inner loop diverged at step " +
                            std::to_string(t + 1) + " (objective " +
                            std::to_string(h) + ")");
      if (cfg.store_trajectory) traj.states.push_back(R);
      traj.objective_values.push_back(h);
      if (cfg.early_stop_tol > 0.0 && h < cfg.early_stop_tol) break;
    }
    final_R = R;
    if (!cfg.store_trajectory) traj.states.push_back(final_R);

    if (!have_best || traj.final_objective() < best.final_objective()) {
      best = std::move(traj);
      have_best = true;
    }
    // Early stop applies across restarts too: once one run is below the
    // tolerance no later restart can meaningfully improve on it.
    if (cfg.early_stop_tol > 0.0 &&
        best.final_objective() < cfg.early_stop_tol)
      break;
  }
  return best;
}

double outer_loss(const mol::Conformation& R, const mol::Conformation& R_ref,
                  const AtomMask& mask) {
  const auto aligned = geom::detail::kabsch_core(R, R_ref, mask).aligned;
  double s = 0.0;
  for (int i = 0; i < R.atom_count(); ++i) {
    if (!mask[i]) continue;
    for (int j = 0; j < 3; ++j) {
      const double diff = R.xyz[i][j] - aligned.xyz[i][j];
      s += diff * diff;
    }
  }
  return s;
}

double outer_loss(const mol::Conformation& R, const mol::Conformation& R_ref) {
  if (R.atom_count() != R_ref.atom_count())
    throw ValidationError("outer_loss: atom counts disagree");
  return outer_loss(R, R_ref, mol::all_mask(R.atom_count()));
}

std::vector<Vec3> outer_loss_gradient(const mol::Conformation& R,
                                      const mol::Conformation& R_ref,
                                      const AtomMask& mask) {
  const auto aligned = geom::detail::kabsch_core(R, R_ref, mask).aligned;
  std::vector<Vec3> seed(R.xyz.size(), Vec3{0, 0, 0});
  for (std::size_t i = 0; i < R.xyz.size(); ++i) {
    if (!mask[i]) continue;
    for (int j = 0; j < 3; ++j)
      seed[i][j] = 2.0 * (R.xyz[i][j] - aligned.xyz[i][j]);
  }
  return seed;
}

namespace {

// One reverse-unroll step. Records the analytic gradient map
// (R, d) -> grad_R H on a fresh tape and pulls the adjoint through it,
// yielding both the Hessian-vector product (gbar * d2H/dR2) and the mixed
// product (gbar * d2H/dRdd) as vector-Jacobian products.
struct GradMapVjp {
  std::vector<Vec3> wrt_R;      // n x 3
  std::vector<double> wrt_d;    // m
};

GradMapVjp gradient_map_vjp(const mol::Conformation& R,
                            const mol::DistanceVector& d,
                            const mol::MolecularGraph& g,
                            const std::vector<Vec3>& adjoint) {
  using tape::Tape;
  using tape::Tensor;

  const int n = g.atom_count();
  const auto m = static_cast<std::int64_t>(g.edges.size());

  std::vector<std::int32_t> iu(g.edges.size()), iv(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    iu[e] = g.edges[e].u;
    iv[e] = g.edges[e].v;
  }

  Tensor Rt({n, 3});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) Rt.at(i, j) = R.xyz[i][j];
  Tensor dt({m, 1});
  for (std::int64_t e = 0; e < m; ++e) dt.at(e, 0) = d.values[e];

  Tape t;
  const auto Rv = t.leaf(std::move(Rt));
  const auto dv = t.leaf(std::move(dt));
  const auto ru = t.gather_rows(Rv, iu);
  const auto rv = t.gather_rows(Rv, iv);
  const auto diff = t.sub(ru, rv);
  const auto s = t.smoothed_norm(diff, kNormEpsilon);
  const auto coef = t.scale(t.div(t.sub(s, dv), s), 2.0);
  const auto scaled = t.mul(t.broadcast_cols(coef, 3), diff);
  const auto grad =
      t.add(t.scatter_rows(scaled, iu, n), t.scatter_rows(t.neg(scaled), iv, n));

  Tensor seed({n, 3});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) seed.at(i, j) = adjoint[i][j];

  const auto grads = t.backward(grad, std::move(seed));

  GradMapVjp out;
  const Tensor gR = grads.get(Rv);
  out.wrt_R.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) out.wrt_R[static_cast<std::size_t>(i)][j] = gR.at(i, j);
  const Tensor gd = grads.get(dv);
  out.wrt_d.resize(static_cast<std::size_t>(m));
  for (std::int64_t e = 0; e < m; ++e) out.wrt_d[static_cast<std::size_t>(e)] = gd.at(e, 0);
  return out;
}

}  // namespace

std::vector<double> hypergradient(const InnerTrajectory& trajectory,
                                  const mol::DistanceVector& d,
                                  const mol::MolecularGraph& g,
                                  const InnerLoopConfig& cfg,
                                  const std::vector<Vec3>& outer_seed) {
  const int T = trajectory.steps_taken();
  if (trajectory.states.size() < 2 ||
      trajectory.states.size() != trajectory.objective_values.size())
    throw ValidationError("hypergradient requires a stored trajectory");
  if (T != cfg.steps)
    throw ValidationError("trajectory length does not match cfg.steps; "
                          "was the trajectory stored without early stopping?");
  if (outer_seed.size() != trajectory.final_state().xyz.size())
    throw ValidationError("outer seed size does not match atom count");

  const double eta = cfg.learning_rate;
  std::vector<Vec3> gbar = outer_seed;  // adjoint on R_{t+1}
  std::vector<double> accum(d.values.size(), 0.0);

  for (int t = T - 1; t >= 0; --t) {
    const auto vjp = gradient_map_vjp(trajectory.states[static_cast<std::size_t>(t)], d, g, gbar);
    for (std::size_t e = 0; e < accum.size(); ++e)
      accum[e] -= eta * vjp.wrt_d[e];
    for (std::size_t i = 0; i < gbar.size(); ++i)
      for (int j = 0; j < 3; ++j) gbar[i][j] -= eta * vjp.wrt_R[i][j];
  }
  return accum;
}

}  // namespace confgen::dg
