#include "confgen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <ostream>
#include <thread>

#include "confgen/errors.hpp"
#include "confgen/geometry.hpp"

namespace confgen::eval {

void ConformerSet::validate() const {
  if (conformers.empty())
    throw ValidationError("conformer set for '" + graph.id + "' is empty");
  for (const auto& c : conformers) c.validate(graph.atom_count());
}

void MetricConfig::validate() const {
  if (delta <= 0.0) throw ConfigError("metric delta must be positive");
  if (generated_multiplier < 1)
    throw ConfigError("generated_multiplier must be >= 1");
}

void MmdConfig::validate() const {
  if (rule == Bandwidth::Fixed && sigma <= 0.0)
    throw ConfigError("fixed MMD bandwidth must be positive");
}

std::vector<std::vector<double>> rmsd_matrix(const ConformerSet& generated,
                                             const ConformerSet& reference,
                                             const MetricConfig& cfg,
                                             int workers) {
  generated.validate();
  reference.validate();
  cfg.validate();
  const AtomMask mask = cfg.heavy_only
                            ? mol::heavy_mask(reference.graph)
                            : mol::all_mask(reference.graph.atom_count());

  const std::size_t nr = reference.conformers.size();
  const std::size_t ng = generated.conformers.size();
  std::vector<std::vector<double>> matrix(nr, std::vector<double>(ng, 0.0));

  auto fill_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t r = k / ng, c = k % ng;
      matrix[r][c] = geom::aligned_rmsd(generated.conformers[c],
                                        reference.conformers[r], mask);
    }
  };

  const std::size_t total = nr * ng;
  if (workers <= 1 || total < 2) {
    fill_range(0, total);
  } else {
    const std::size_t nthreads = std::min<std::size_t>(workers, total);
    std::vector<std::thread> pool;
    const std::size_t chunk = (total + nthreads - 1) / nthreads;
    for (std::size_t i = 0; i < nthreads; ++i) {
      const std::size_t b = i * chunk;
      const std::size_t e = std::min(total, b + chunk);
      if (b >= e) break;
      pool.emplace_back(fill_range, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return matrix;
}

double coverage_from_matrix(const std::vector<std::vector<double>>& matrix,
                            double delta) {
  if (matrix.empty()) throw ValidationError("coverage: empty RMSD matrix");
  int covered = 0;
  for (const auto& row : matrix) {
    if (row.empty()) throw ValidationError("coverage: empty matrix row");
    const double best = *std::min_element(row.begin(), row.end());
    if (best < delta) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(matrix.size());
}

double matching_from_matrix(const std::vector<std::vector<double>>& matrix) {
  if (matrix.empty()) throw ValidationError("matching: empty RMSD matrix");
  double sum = 0.0;
  for (const auto& row : matrix) {
    if (row.empty()) throw ValidationError("matching: empty matrix row");
    sum += *std::min_element(row.begin(), row.end());
  }
  return sum / static_cast<double>(matrix.size());
}

double coverage(const ConformerSet& generated, const ConformerSet& reference,
                const MetricConfig& cfg) {
  return coverage_from_matrix(rmsd_matrix(generated, reference, cfg),
                              cfg.delta);
}

double matching(const ConformerSet& generated, const ConformerSet& reference,
                const MetricConfig& cfg) {
  return matching_from_matrix(rmsd_matrix(generated, reference, cfg));
}

namespace {

double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double median_pairwise_distance(const std::vector<std::vector<double>>& pool) {
  std::vector<double> dists;
  dists.reserve(pool.size() * (pool.size() - 1) / 2);
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = i + 1; j < pool.size(); ++j)
      dists.push_back(std::sqrt(sq_distance(pool[i], pool[j])));
  if (dists.empty()) return 0.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t n = dists.size();
  return n % 2 == 1 ? dists[n / 2]
                    : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
}

}  // namespace

double mmd(const std::vector<std::vector<double>>& samples_a,
           const std::vector<std::vector<double>>& samples_b,
           const MmdConfig& cfg) {
  cfg.validate();
  if (samples_a.empty() || samples_b.empty())
    throw ValidationError("mmd: empty sample set");
  const std::size_t dim = samples_a.front().size();
  for (const auto& v : samples_a)
    if (v.size() != dim) throw ValidationError("mmd: dimension mismatch");
  for (const auto& v : samples_b)
    if (v.size() != dim) throw ValidationError("mmd: dimension mismatch");

  double sigma = cfg.sigma;
  if (cfg.rule == MmdConfig::Bandwidth::MedianHeuristic) {
    std::vector<std::vector<double>> pool = samples_a;
    pool.insert(pool.end(), samples_b.begin(), samples_b.end());
    sigma = median_pairwise_distance(pool);
    if (sigma == 0.0) {
      std::cerr << "[warn] mmd: degenerate pooled sample, falling back to "
                   "sigma = 1\n";
      sigma = 1.0;
    }
  }
  const double gamma = 1.0 / (2.0 * sigma * sigma);

  auto kernel_sum = [&](const std::vector<std::vector<double>>& x,
                        const std::vector<std::vector<double>>& y) {
    double s = 0.0;
    for (const auto& xi : x)
      for (const auto& yj : y) s += std::exp(-gamma * sq_distance(xi, yj));
    return s;
  };

  const double na = static_cast<double>(samples_a.size());
  const double nb = static_cast<double>(samples_b.size());
  const double v = kernel_sum(samples_a, samples_a) / (na * na) +
                   kernel_sum(samples_b, samples_b) / (nb * nb) -
                   2.0 * kernel_sum(samples_a, samples_b) / (na * nb);
  return std::max(v, 0.0);
}

DistanceSamples distance_samples(const ConformerSet& set, PairFilter filter) {
  set.validate();
  const auto& g = set.graph;

  std::vector<int> atoms;
  for (int i = 0; i < g.atom_count(); ++i) {
    const auto e = g.atoms[i].element;
    if (e == mol::Element::C || e == mol::Element::O) atoms.push_back(i);
  }

  DistanceSamples out;
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    for (std::size_t b = a + 1; b < atoms.size(); ++b) {
      const auto ea = g.atoms[atoms[a]].element;
      const auto eb = g.atoms[atoms[b]].element;
      if (filter == PairFilter::CrossCOOnly && ea == eb) continue;
      out.pairs.emplace_back(atoms[a], atoms[b]);
    }
  }
  if (out.pairs.empty()) {
    std::cerr << "[warn] distance_samples: molecule '" << g.id
              << "' has no qualifying atom pairs\n";
    return out;
  }

  const std::size_t np = out.pairs.size();
  const std::size_t nc = set.conformers.size();

  out.joint.assign(nc, std::vector<double>(np, 0.0));
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& R = set.conformers[c];
    for (std::size_t p = 0; p < np; ++p) {
      const auto [u, v] = out.pairs[p];
      const Vec3& ru = R.xyz[static_cast<std::size_t>(u)];
      const Vec3& rv = R.xyz[static_cast<std::size_t>(v)];
      const double dx = ru[0] - rv[0], dy = ru[1] - rv[1], dz = ru[2] - rv[2];
      out.joint[c][p] = std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  }

  out.marginal.resize(np);
  for (std::size_t p = 0; p < np; ++p) {
    out.marginal[p].assign(nc, std::vector<double>(1));
    for (std::size_t c = 0; c < nc; ++c) out.marginal[p][c][0] = out.joint[c][p];
  }

  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t q = p + 1; q < np; ++q)
      out.pair_subsets.push_back({static_cast<int>(p), static_cast<int>(q)});
  out.paired.resize(out.pair_subsets.size());
  for (std::size_t s = 0; s < out.pair_subsets.size(); ++s) {
    out.paired[s].assign(nc, std::vector<double>(2));
    for (std::size_t c = 0; c < nc; ++c) {
      out.paired[s][c][0] = out.joint[c][static_cast<std::size_t>(out.pair_subsets[s][0])];
      out.paired[s][c][1] = out.joint[c][static_cast<std::size_t>(out.pair_subsets[s][1])];
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw ValidationError("mean of empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of empty vector");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_metrics_csv(std::ostream& out,
                       const std::vector<MoleculeMetrics>& rows) {
  out << "molecule_id,n_ref,n_gen,cov,mat\n";
  std::vector<double> covs, mats;
  for (const auto& r : rows) {
    out << r.id << ',' << r.n_ref << ',' << r.n_gen << ',' << r.cov << ','
        << r.mat << '\n';
    covs.push_back(r.cov);
    mats.push_back(r.mat);
  }
  if (!rows.empty()) {
    out << "mean,,," << mean_of(covs) << ',' << mean_of(mats) << '\n';
    out << "median,,," << median_of(covs) << ',' << median_of(mats) << '\n';
  }
}

void write_mmd_csv(std::ostream& out, const std::vector<MmdReportRow>& rows) {
  out << "molecule_id,mmd_single_mean,mmd_pair_mean,mmd_joint\n";
  std::vector<double> singles, pairs, joints;
  for (const auto& r : rows) {
    out << r.id << ',' << r.single_mean << ',' << r.pair_mean << ','
        << r.joint << '\n';
    singles.push_back(r.single_mean);
    pairs.push_back(r.pair_mean);
    joints.push_back(r.joint);
  }
  if (!rows.empty()) {
    out << "mean," << mean_of(singles) << ',' << mean_of(pairs) << ','
        << mean_of(joints) << '\n';
    out << "median," << median_of(singles) << ',' << median_of(pairs) << ','
        << median_of(joints) << '\n';
  }
}

void write_cov_grid_csv(std::ostream& out,
                        const std::vector<CovGridRow>& rows) {
  out << "molecule_id,delta,cov\n";
  for (const auto& r : rows)
    out << r.id << ',' << r.delta << ',' << r.cov << '\n';
}

}  // namespace confgen::eval
