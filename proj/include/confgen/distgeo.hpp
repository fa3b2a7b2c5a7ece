#pragma once

#include <vector>

#include "confgen/geometry.hpp"
#include "confgen/molgraph.hpp"
#include "confgen/rng.hpp"

namespace confgen::dg {

// Smoothing constant inside the per-edge norm, sqrt(|r_u - r_v|^2 + eps).
// Shared with the tape's smoothed-norm primitive so forward and backward
// sweeps see the same objective.
constexpr double kNormEpsilon = 1e-10;
constexpr double kDivergenceThreshold = 1e12;

struct InnerLoopConfig {
  int steps = 100;
  double learning_rate = 0.01;
  double init_scale = 1.0;  // Angstrom, stddev of the Gaussian init
  int restarts = 1;
  bool store_trajectory = false;
  double early_stop_tol = 0.0;  // 0 disables; standalone solving uses 1e-10

  void validate() const;
};

// Cached gradient-descent iterates R_0..R_T and their objective values.
struct InnerTrajectory {
  std::vector<mol::Conformation> states;
  std::vector<double> objective_values;

  const mol::Conformation& final_state() const { return states.back(); }
  double final_objective() const { return objective_values.back(); }
  int steps_taken() const { return static_cast<int>(states.size()) - 1; }
};

// Stress objective: sum over expanded edges of (s_uv - d_uv)^2 with
// s_uv the smoothed inter-atom distance.
double inner_objective(const mol::Conformation& R, const mol::DistanceVector& d,
                       const mol::MolecularGraph& g);

// Analytic gradient of inner_objective with respect to R (n x 3 rows).
std::vector<Vec3> inner_gradient(const mol::Conformation& R,
                                 const mol::DistanceVector& d,
                                 const mol::MolecularGraph& g);

// Plain gradient descent from a Gaussian-initialized geometry. With several
// restarts, the trajectory with the smallest final objective is returned.
// Throws DivergedError (naming the step) if the objective exceeds the
// divergence threshold or turns non-finite.
InnerTrajectory solve_distance_geometry(const mol::DistanceVector& d,
                                        const mol::MolecularGraph& g,
                                        const InnerLoopConfig& cfg,
                                        RandomStream rng);

// Squared deviation between R and the reference superposed onto it; equals
// atom_count * aligned_rmsd^2 for the same mask.
double outer_loss(const mol::Conformation& R, const mol::Conformation& R_ref);
double outer_loss(const mol::Conformation& R, const mol::Conformation& R_ref,
                  const AtomMask& mask);

// d(outer_loss)/dR with the alignment held fixed at its optimum, i.e.
// 2 (R - A(R, R_ref)); this is the reverse-sweep seed.
std::vector<Vec3> outer_loss_gradient(const mol::Conformation& R,
                                      const mol::Conformation& R_ref,
                                      const AtomMask& mask);

// Reverse-unrolled hypergradient d(outer objective)/d(distances): walks the
// cached trajectory backwards, applying vector-Jacobian products of the
// analytic gradient map (R, d) -> grad_R H at every step. `outer_seed` is
// the loss gradient at the final state. Requires a stored trajectory whose
// step count matches cfg.steps.
std::vector<double> hypergradient(const InnerTrajectory& trajectory,
                                  const mol::DistanceVector& d,
                                  const mol::MolecularGraph& g,
                                  const InnerLoopConfig& cfg,
                                  const std::vector<Vec3>& outer_seed);

}  // namespace confgen::dg
