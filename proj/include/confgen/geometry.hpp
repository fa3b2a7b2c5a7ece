#pragma once

#include <array>

#include "confgen/molgraph.hpp"
#include "confgen/rng.hpp"

namespace confgen::geom {

using Mat3 = std::array<std::array<double, 3>, 3>;

// Proper rigid motion x -> rotation * x + translation.
struct RigidTransform {
  Mat3 rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 translation{0, 0, 0};
};

Vec3 apply(const RigidTransform& t, const Vec3& x);
mol::Conformation apply(const RigidTransform& t, const mol::Conformation& R);

Mat3 matmul(const Mat3& a, const Mat3& b);
Mat3 transpose(const Mat3& m);
double determinant(const Mat3& m);

// Rotation about the z axis by `angle` radians (test/tooling helper).
Mat3 rotation_z(double angle);
// Uniform random rotation from a Gaussian-sampled quaternion.
Mat3 random_rotation(RandomStream& rng);

struct AlignResult {
  mol::Conformation aligned;  // transform applied to the reference
  RigidTransform transform;
};

// Least-squares superposition of `reference` onto `target` over masked atoms
// (Kabsch). The returned rotation is always proper; rank-deficient point
// sets are resolved by a fixed SVD convention. Throws
// DegenerateAlignmentError when fewer than 3 atoms are masked.
AlignResult kabsch_align(const mol::Conformation& target,
                         const mol::Conformation& reference,
                         const AtomMask& mask);

// Root-mean-square deviation over masked atoms (no alignment).
double rmsd(const mol::Conformation& a, const mol::Conformation& b,
            const AtomMask& mask);

// rmsd after optimal superposition of `reference` onto `target`.
double aligned_rmsd(const mol::Conformation& target,
                    const mol::Conformation& reference, const AtomMask& mask);

namespace detail {

// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi sweeps.
// Eigenvalues are returned in descending order; eigenvector signs are
// canonicalized for determinism.
void jacobi_eigen3(const Mat3& m, std::array<double, 3>& values, Mat3& vectors);

// Alignment core without the mask-size precondition; used where the
// minimizer is still well defined (single points align by translation).
AlignResult kabsch_core(const mol::Conformation& target,
                        const mol::Conformation& reference,
                        const AtomMask& mask);

}  // namespace detail

}  // namespace confgen::geom
