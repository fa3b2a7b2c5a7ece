#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "confgen/errors.hpp"
#include "confgen/eval.hpp"
#include "confgen/geometry.hpp"
#include "testutil.hpp"

using namespace confgen;
using namespace testutil;

namespace {

eval::ConformerSet random_set(RandomStream& rng, const mol::MolecularGraph& g,
                              int count, double scale = 1.5) {
  eval::ConformerSet s;
  s.graph = g;
  for (int i = 0; i < count; ++i)
    s.conformers.push_back(random_conformation(rng, g.atom_count(), scale));
  return s;
}

// Reference implementation: direct double loop, no shared RMSD matrix.
std::pair<double, double> brute_cov_mat(const eval::ConformerSet& gen,
                                        const eval::ConformerSet& ref,
                                        const eval::MetricConfig& cfg) {
  const AtomMask mask = cfg.heavy_only ? mol::heavy_mask(ref.graph)
                                       : mol::all_mask(ref.graph.atom_count());
  int covered = 0;
  double mat_sum = 0.0;
  for (const auto& r : ref.conformers) {
    double best = 1e300;
    for (const auto& q : gen.conformers)
      best = std::min(best, geom::aligned_rmsd(q, r, mask));
    if (best < cfg.delta) ++covered;
    mat_sum += best;
  }
  return {static_cast<double>(covered) / ref.conformers.size(),
          mat_sum / ref.conformers.size()};
}

}  // namespace

TEST_CASE("coverage and matching on a hand-built rmsd matrix") {
  const std::vector<std::vector<double>> matrix = {
      {0.3, 0.9}, {0.8, 0.7}, {0.4, 2.0}};
  CHECK(eval::coverage_from_matrix(matrix, 0.5) == doctest::Approx(2.0 / 3.0));
  CHECK(eval::matching_from_matrix(matrix) ==
        doctest::Approx((0.3 + 0.7 + 0.4) / 3.0));
}

TEST_CASE("identical sets give full coverage and zero matching") {
  RandomStream rng(61);
  const auto g = mol::expand_auxiliary_edges(random_molecule(rng, 6));
  const auto s = random_set(rng, g, 4);
  eval::MetricConfig cfg;
  cfg.delta = 0.5;
  cfg.heavy_only = false;
  CHECK(eval::coverage(s, s, cfg) == doctest::Approx(1.0));
  CHECK(eval::matching(s, s, cfg) < 1e-8);
}

TEST_CASE("vanishing threshold on disjoint sets gives zero coverage") {
  RandomStream rng(62);
  const auto g = mol::expand_auxiliary_edges(random_molecule(rng, 6));
  const auto a = random_set(rng, g, 3);
  const auto b = random_set(rng, g, 3);
  eval::MetricConfig cfg;
  cfg.delta = 1e-9;
  cfg.heavy_only = false;
  CHECK(eval::coverage(a, b, cfg) == doctest::Approx(0.0));
}

TEST_CASE("single generated and reference conformer: matching is their rmsd") {
  RandomStream rng(63);
  const auto g = mol::expand_auxiliary_edges(random_molecule(rng, 5));
  const auto a = random_set(rng, g, 1);
  const auto b = random_set(rng, g, 1);
  eval::MetricConfig cfg;
  cfg.heavy_only = false;
  const double want = geom::aligned_rmsd(a.conformers[0], b.conformers[0],
                                         mol::all_mask(5));
  CHECK(eval::matching(a, b, cfg) == doctest::Approx(want));
}

TEST_CASE("coverage and matching agree with the brute-force loops") {
  RandomStream rng(64);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_int(0, 4));
    const auto g = mol::expand_auxiliary_edges(random_molecule(rng, n));
    const auto gen = random_set(rng, g, 1 + static_cast<int>(rng.uniform_int(0, 6)));
    const auto ref = random_set(rng, g, 1 + static_cast<int>(rng.uniform_int(0, 6)));
    eval::MetricConfig cfg;
    cfg.delta = rng.uniform(0.5, 3.0);
    cfg.heavy_only = false;
    const auto [bc, bm] = brute_cov_mat(gen, ref, cfg);
    CHECK(eval::coverage(gen, ref, cfg) == doctest::Approx(bc).epsilon(1e-12));
    CHECK(eval::matching(gen, ref, cfg) == doctest::Approx(bm).epsilon(1e-12));
  }
}

TEST_CASE("coverage is monotone in the threshold") {
  RandomStream rng(65);
  for (int trial = 0; trial < 20; ++trial) {
    const int nr = 1 + static_cast<int>(rng.uniform_int(0, 7));
    const int ng = 1 + static_cast<int>(rng.uniform_int(0, 7));
    std::vector<std::vector<double>> matrix(
        static_cast<std::size_t>(nr),
        std::vector<double>(static_cast<std::size_t>(ng)));
    for (auto& row : matrix)
      for (auto& v : row) v = rng.uniform(0.0, 3.0);
    double prev = 0.0;
    for (int k = 0; k < 20; ++k) {
      const double delta = 0.05 + 3.0 * k / 19.0;
      const double cov = eval::coverage_from_matrix(matrix, delta);
      CHECK(cov >= prev);
      prev = cov;
    }
  }
}

TEST_CASE("full coverage at delta bounds matching by delta") {
  RandomStream rng(66);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> matrix(5, std::vector<double>(4));
    for (auto& row : matrix)
      for (auto& v : row) v = rng.uniform(0.1, 2.0);
    double worst_best = 0.0;
    for (const auto& row : matrix)
      worst_best = std::max(worst_best, *std::min_element(row.begin(), row.end()));
    const double delta = worst_best + 0.01;
    REQUIRE(eval::coverage_from_matrix(matrix, delta) == doctest::Approx(1.0));
    CHECK(eval::matching_from_matrix(matrix) <= delta);
  }
}

TEST_CASE("rmsd matrix is identical across worker counts") {
  RandomStream rng(67);
  const auto g = mol::expand_auxiliary_edges(random_molecule(rng, 6));
  const auto gen = random_set(rng, g, 5);
  const auto ref = random_set(rng, g, 4);
  eval::MetricConfig cfg;
  cfg.heavy_only = false;
  const auto m1 = eval::rmsd_matrix(gen, ref, cfg, 1);
  const auto m4 = eval::rmsd_matrix(gen, ref, cfg, 4);
  for (std::size_t i = 0; i < m1.size(); ++i)
    for (std::size_t j = 0; j < m1[i].size(); ++j)
      CHECK(m1[i][j] == m4[i][j]);
}

TEST_CASE("mmd of a set with itself is zero") {
  RandomStream rng(68);
  std::vector<std::vector<double>> a;
  for (int i = 0; i < 20; ++i) a.push_back({rng.normal(), rng.normal()});
  eval::MmdConfig cfg;
  CHECK(eval::mmd(a, a, cfg) < 1e-12);
}

TEST_CASE("mmd closed form for two singleton scalars") {
  eval::MmdConfig cfg;
  cfg.rule = eval::MmdConfig::Bandwidth::Fixed;
  cfg.sigma = 1.0;
  const double got = eval::mmd({{0.0}}, {{1.0}}, cfg);
  CHECK(std::abs(got - (2.0 - 2.0 * std::exp(-0.5))) < 1e-10);
}

TEST_CASE("mmd is symmetric and nonnegative") {
  RandomStream rng(69);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> a, b;
    const int na = 2 + static_cast<int>(rng.uniform_int(0, 8));
    const int nb = 2 + static_cast<int>(rng.uniform_int(0, 8));
    for (int i = 0; i < na; ++i) a.push_back({rng.normal(), rng.normal() + 1});
    for (int i = 0; i < nb; ++i) b.push_back({rng.normal(), rng.normal()});
    eval::MmdConfig cfg;
    const double ab = eval::mmd(a, b, cfg);
    const double ba = eval::mmd(b, a, cfg);
    CHECK(ab >= 0.0);
    CHECK(std::abs(ab - ba) < 1e-12);
  }
}

TEST_CASE("well-separated samples dominate identical samples") {
  RandomStream rng(70);
  std::vector<std::vector<double>> a, b;
  for (int i = 0; i < 200; ++i) {
    a.push_back({rng.normal()});
    b.push_back({rng.normal() + 10.0});
  }
  eval::MmdConfig cfg;
  const double separated = eval::mmd(a, b, cfg);
  const double same = eval::mmd(a, a, cfg);
  CHECK(separated > 100.0 * std::max(same, 1e-12));
}

TEST_CASE("mmd input validation and degenerate bandwidth fallback") {
  eval::MmdConfig cfg;
  CHECK_THROWS_AS(eval::mmd({}, {{1.0}}, cfg), ValidationError);
  CHECK_THROWS_AS(eval::mmd({{1.0}}, {{1.0, 2.0}}, cfg), ValidationError);
  // All-identical pooled sample: median distance is zero, falls back to 1.
  const double v = eval::mmd({{2.0}, {2.0}}, {{2.0}}, cfg);
  CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("distance samples: two heavy atoms give one marginal stream") {
  auto g = make_graph({"C", "O", "H"}, {{0, 1}, {1, 2}});
  g = mol::expand_auxiliary_edges(g);
  eval::ConformerSet s;
  s.graph = g;
  RandomStream rng(71);
  s.conformers.push_back(random_conformation(rng, 3));
  s.conformers.push_back(random_conformation(rng, 3));

  const auto ds = eval::distance_samples(s, eval::PairFilter::AmongCO);
  REQUIRE(ds.pairs.size() == 1);  // H is excluded
  CHECK(ds.marginal.size() == 1);
  CHECK(ds.pair_subsets.empty());
  REQUIRE(ds.joint.size() == 2);
  CHECK(ds.joint[0].size() == 1);
}

TEST_CASE("distance samples: three heavy atoms give three pair streams") {
  auto g = make_graph({"C", "O", "C", "H"}, {{0, 1}, {1, 2}, {2, 3}});
  g = mol::expand_auxiliary_edges(g);
  eval::ConformerSet s;
  s.graph = g;
  RandomStream rng(72);
  for (int i = 0; i < 4; ++i) s.conformers.push_back(random_conformation(rng, 4));

  const auto ds = eval::distance_samples(s, eval::PairFilter::AmongCO);
  CHECK(ds.pairs.size() == 3);
  CHECK(ds.marginal.size() == 3);
  CHECK(ds.pair_subsets.size() == 3);  // C(3,2)
  CHECK(ds.joint[0].size() == 3);

  // Strict mode drops the C-C pair.
  const auto strict = eval::distance_samples(s, eval::PairFilter::CrossCOOnly);
  CHECK(strict.pairs.size() == 2);
}

TEST_CASE("distance samples are rigid-motion invariant") {
  auto g = make_graph({"C", "O", "C"}, {{0, 1}, {1, 2}});
  g = mol::expand_auxiliary_edges(g);
  RandomStream rng(73);
  const auto R = random_conformation(rng, 3);

  eval::ConformerSet s1, s2;
  s1.graph = g;
  s2.graph = g;
  s1.conformers.push_back(R);
  s2.conformers.push_back(
      rigid_move(R, geom::random_rotation(rng), {2, -1, 0.5}));

  const auto d1 = eval::distance_samples(s1, eval::PairFilter::AmongCO);
  const auto d2 = eval::distance_samples(s2, eval::PairFilter::AmongCO);
  for (std::size_t p = 0; p < d1.joint[0].size(); ++p)
    CHECK(std::abs(d1.joint[0][p] - d2.joint[0][p]) < 1e-10);
}

TEST_CASE("distance samples warn and return empty without qualifying pairs") {
  auto g = make_graph({"N", "H"}, {{0, 1}});
  g = mol::expand_auxiliary_edges(g);
  eval::ConformerSet s;
  s.graph = g;
  RandomStream rng(74);
  s.conformers.push_back(random_conformation(rng, 2));
  const auto ds = eval::distance_samples(s, eval::PairFilter::AmongCO);
  CHECK(ds.pairs.empty());
  CHECK(ds.joint.empty());
}

TEST_CASE("metric csv carries aggregate rows") {
  std::vector<eval::MoleculeMetrics> rows{{"a", 2, 4, 0.5, 0.3},
                                          {"b", 3, 6, 1.0, 0.1}};
  std::ostringstream out;
  eval::write_metrics_csv(out, rows);
  const std::string text = out.str();
  CHECK(text.find("molecule_id,n_ref,n_gen,cov,mat\n") == 0);
  CHECK(text.find("a,2,4,0.5,0.3\n") != std::string::npos);
  CHECK(text.find("mean,,,0.75,0.2\n") != std::string::npos);
  CHECK(text.find("median,,,0.75,0.2\n") != std::string::npos);
}

TEST_CASE("empty conformer sets are rejected") {
  RandomStream rng(75);
  const auto g = mol::expand_auxiliary_edges(random_molecule(rng, 5));
  eval::ConformerSet empty;
  empty.graph = g;
  const auto full = random_set(rng, g, 2);
  eval::MetricConfig cfg;
  CHECK_THROWS_AS(eval::coverage(empty, full, cfg), ValidationError);
  CHECK_THROWS_AS(eval::matching(full, empty, cfg), ValidationError);
}
