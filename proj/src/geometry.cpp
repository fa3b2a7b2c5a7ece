#include "confgen/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "confgen/errors.hpp"
#include "confgen/rng.hpp"

namespace confgen::geom {

namespace {

Vec3 sub3(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

Vec3 cross3(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

double norm3(const Vec3& a) {
  return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

Vec3 normalized(const Vec3& a) {
  const double n = norm3(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

Vec3 column(const Mat3& m, int j) { return {m[0][j], m[1][j], m[2][j]}; }

void set_column(Mat3& m, int j, const Vec3& v) {
  m[0][j] = v[0];
  m[1][j] = v[1];
  m[2][j] = v[2];
}

}  // namespace

Vec3 apply(const RigidTransform& t, const Vec3& x) {
  Vec3 y = t.translation;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) y[i] += t.rotation[i][j] * x[j];
  return y;
}

mol::Conformation apply(const RigidTransform& t, const mol::Conformation& R) {
  mol::Conformation out;
  out.xyz.reserve(R.xyz.size());
  for (const auto& x : R.xyz) out.xyz.push_back(apply(t, x));
  return out;
}

Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 3; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat3 transpose(const Mat3& m) {
  Mat3 t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = m[j][i];
  return t;
}

double determinant(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 rotation_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

Mat3 random_rotation(RandomStream& rng) {
  // Uniform rotation from a normalized quaternion with Gaussian components.
  double q[4];
  double n2 = 0.0;
  for (auto& c : q) {
    c = rng.normal();
    n2 += c * c;
  }
  const double n = std::sqrt(n2);
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x),
            1 - 2 * (x * x + y * y)}}};
}

namespace detail {

void jacobi_eigen3(const Mat3& m, std::array<double, 3>& values,
                   Mat3& vectors) {
  Mat3 a = m;
  Mat3 v{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  double scale = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) scale = std::max(scale, std::abs(a[i][j]));
  if (scale == 0.0) scale = 1.0;

  constexpr int kMaxSweeps = 50;
  constexpr double kTol = 1e-12;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
    if (off < kTol * scale) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (tau >= 0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // A <- J^T A J with J the (p,q) rotation.
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::array<int, 3> order{0, 1, 2};
  std::array<double, 3> diag{a[0][0], a[1][1], a[2][2]};
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return diag[i] > diag[j]; });

  for (int j = 0; j < 3; ++j) {
    values[j] = diag[order[j]];
    Vec3 col = column(v, order[j]);
    // Sign convention: largest-magnitude component points positive.
    int imax = 0;
    for (int i = 1; i < 3; ++i)
      if (std::abs(col[i]) > std::abs(col[imax])) imax = i;
    if (col[imax] < 0.0)
      for (auto& c : col) c = -c;
    set_column(vectors, j, col);
  }
}

AlignResult kabsch_core(const mol::Conformation& target,
                        const mol::Conformation& reference,
                        const AtomMask& mask) {
  const int n = target.atom_count();
  if (reference.atom_count() != n)
    throw ValidationError("kabsch_align: atom counts disagree");
  if (static_cast<int>(mask.size()) != n)
    throw ValidationError("kabsch_align: mask length does not match");
  const int k = mol::mask_count(mask);
  if (k == 0) throw DegenerateAlignmentError("kabsch_align: empty atom mask");

  Vec3 cp{0, 0, 0}, cq{0, 0, 0};
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    for (int j = 0; j < 3; ++j) {
      cp[j] += target.xyz[i][j];
      cq[j] += reference.xyz[i][j];
    }
  }
  for (int j = 0; j < 3; ++j) {
    cp[j] /= k;
    cq[j] /= k;
  }

  // Cross-covariance of centered coordinates.
  Mat3 cov{};
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const Vec3 p = sub3(target.xyz[i], cp);
    const Vec3 q = sub3(reference.xyz[i], cq);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) cov[r][c] += p[r] * q[c];
  }

  std::array<double, 3> lam;
  Mat3 vmat;
  jacobi_eigen3(matmul(transpose(cov), cov), lam, vmat);

  const double sigma1 = std::sqrt(std::max(lam[0], 0.0));
  const double sigma2 = std::sqrt(std::max(lam[1], 0.0));
  // Rank thresholds are relative to sigma1: eigenvalues of C^T C carry
  // roundoff of order lam[0] * 1e-15, which sqrt inflates to sigma1 * 3e-8.
  const double rank_tol = sigma1 * 1e-6;

  Mat3 rot{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  if (sigma1 > 1e-12) {
    // Right-handed V, with U derived column-by-column from C*v/sigma and
    // completed by cross products; U V^T is then the optimal proper rotation.
    Vec3 v1 = column(vmat, 0);
    Vec3 v2 = column(vmat, 1);
    const Vec3 v3 = cross3(v1, v2);

    auto apply_cov = [&](const Vec3& x) {
      Vec3 y{0, 0, 0};
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) y[i] += cov[i][j] * x[j];
      return y;
    };

    Vec3 u1 = apply_cov(v1);
    for (auto& c : u1) c /= sigma1;
    u1 = normalized(u1);

    Vec3 u2;
    bool have_u2 = false;
    if (sigma2 > rank_tol) {
      u2 = apply_cov(v2);
      for (auto& c : u2) c /= sigma2;
      // Re-orthogonalize against u1 to keep U orthonormal under roundoff.
      const double d = u1[0] * u2[0] + u1[1] * u2[1] + u1[2] * u2[2];
      for (int j = 0; j < 3; ++j) u2[j] -= d * u1[j];
      if (norm3(u2) > 1e-8) {
        u2 = normalized(u2);
        have_u2 = true;
      }
    }
    if (!have_u2) {
      // Collinear point set: complete deterministically from the axis least
      // aligned with u1.
      int imin = 0;
      for (int i = 1; i < 3; ++i)
        if (std::abs(u1[i]) < std::abs(u1[imin])) imin = i;
      Vec3 e{0, 0, 0};
      e[imin] = 1.0;
      const double d = u1[0] * e[0] + u1[1] * e[1] + u1[2] * e[2];
      for (int j = 0; j < 3; ++j) e[j] -= d * u1[j];
      u2 = normalized(e);
    }
    const Vec3 u3 = cross3(u1, u2);

    Mat3 u;
    set_column(u, 0, u1);
    set_column(u, 1, u2);
    set_column(u, 2, u3);

    Mat3 vt;
    vt[0] = {v1[0], v1[1], v1[2]};
    vt[1] = {v2[0], v2[1], v2[2]};
    vt[2] = {v3[0], v3[1], v3[2]};
    rot = matmul(u, vt);
  }

  RigidTransform t;
  t.rotation = rot;
  Vec3 rq{0, 0, 0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rq[i] += rot[i][j] * cq[j];
  t.translation = sub3(cp, rq);

  return AlignResult{apply(t, reference), t};
}

}  // namespace detail

AlignResult kabsch_align(const mol::Conformation& target,
                         const mol::Conformation& reference,
                         const AtomMask& mask) {
  if (mol::mask_count(mask) < 3)
    throw DegenerateAlignmentError(
        "kabsch_align: need at least 3 masked atoms for a unique rotation");
  return detail::kabsch_core(target, reference, mask);
}

double rmsd(const mol::Conformation& a, const mol::Conformation& b,
            const AtomMask& mask) {
  const int n = a.atom_count();
  if (b.atom_count() != n) throw ValidationError("rmsd: atom counts disagree");
  if (static_cast<int>(mask.size()) != n)
    throw ValidationError("rmsd: mask length does not match");
  const int k = mol::mask_count(mask);
  if (k == 0) throw ValidationError("rmsd: empty atom mask");
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const Vec3 d = sub3(a.xyz[i], b.xyz[i]);
    s += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
  }
  return std::sqrt(s / k);
}

double aligned_rmsd(const mol::Conformation& target,
                    const mol::Conformation& reference, const AtomMask& mask) {
  return rmsd(target, kabsch_align(target, reference, mask).aligned, mask);
}

}  // namespace confgen::geom
