#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "confgen/errors.hpp"
#include "confgen/rng.hpp"
#include "confgen/tape.hpp"

using confgen::RandomStream;
using confgen::ShapeError;
using namespace confgen::tape;

namespace {

Tensor random_tensor(RandomStream& rng, std::vector<std::int64_t> shape,
                     double lo = 0.5, double hi = 2.0) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Scalar projection sum(op_output * w) so every output element mixes into
// the seed; finite differences run on one chosen leaf.
double fd_check(const std::function<Variable(Tape&, std::vector<Variable>&)>& build,
                std::vector<Tensor> leaves, RandomStream& rng,
                double* out_max_rel = nullptr) {
  Tape probe;
  std::vector<Variable> vars;
  for (const auto& l : leaves) vars.push_back(probe.leaf(l));
  const Variable out = build(probe, vars);
  Tensor w = random_tensor(rng, probe.value(out).shape(), -1.0, 1.0);

  auto scalar_of = [&](const std::vector<Tensor>& vals) {
    Tape t;
    std::vector<Variable> vs;
    for (const auto& v : vals) vs.push_back(t.leaf(v));
    const Variable o = build(t, vs);
    return t.scalar_value(t.sum(t.mul(o, t.constant(w))));
  };

  // Analytic gradients.
  Tape t;
  std::vector<Variable> vs;
  for (const auto& l : leaves) vs.push_back(t.leaf(l));
  const Variable o = build(t, vs);
  const auto grads = t.backward(t.sum(t.mul(o, t.constant(w))),
                                Tensor::scalar(1.0));

  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const Tensor g = grads.get(vs[li]);
    for (std::int64_t i = 0; i < leaves[li].size(); ++i) {
      auto plus = leaves;
      auto minus = leaves;
      plus[li][i] += h;
      minus[li][i] -= h;
      const double fd = (scalar_of(plus) - scalar_of(minus)) / (2.0 * h);
      const double rel =
          std::abs(g[i] - fd) / std::max({std::abs(fd), std::abs(g[i]), 1.0});
      worst = std::max(worst, rel);
    }
  }
  if (out_max_rel) *out_max_rel = worst;
  return worst;
}

}  // namespace

TEST_CASE("add of two length-3 vectors") {
  Tape t;
  const auto a = t.leaf(Tensor({3}, {1, 2, 3}));
  const auto b = t.leaf(Tensor({3}, {4, 5, 6}));
  const auto c = t.add(a, b);
  CHECK(t.value(c)[0] == 5);
  CHECK(t.value(c)[1] == 7);
  CHECK(t.value(c)[2] == 9);
}

TEST_CASE("matmul shape") {
  Tape t;
  const auto a = t.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  const auto b = t.leaf(Tensor({3, 1}, {1, 1, 1}));
  const auto c = t.matmul(a, b);
  REQUIRE(t.value(c).shape() == std::vector<std::int64_t>{2, 1});
  CHECK(t.value(c)[0] == 6);
  CHECK(t.value(c)[1] == 15);
}

TEST_CASE("slice out of bounds is a construction error") {
  Tape t;
  const auto a = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK_THROWS_AS(t.slice(a, 0, 3, 0, 2), ShapeError);
  CHECK_THROWS_AS(t.slice(a, 0, 2, 1, 3), ShapeError);
  CHECK_THROWS_AS(t.slice(a, -1, 1, 0, 1), ShapeError);
}

TEST_CASE("shape mismatch is a construction error") {
  Tape t;
  const auto a = t.leaf(Tensor({2}, {1, 2}));
  const auto b = t.leaf(Tensor({3}, {1, 2, 3}));
  CHECK_THROWS_AS(t.add(a, b), ShapeError);
  const auto m = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  const auto n = t.leaf(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS(t.matmul(m, n), ShapeError);
}

TEST_CASE("square gradient at x = 3") {
  Tape t;
  const auto x = t.leaf(Tensor::scalar(3.0));
  const auto y = t.square(x);
  const auto g = t.backward(y, Tensor::scalar(1.0));
  CHECK(g.get(x)[0] == doctest::Approx(6.0));
}

TEST_CASE("product gradient at (2, 5)") {
  Tape t;
  const auto x = t.leaf(Tensor::scalar(2.0));
  const auto y = t.leaf(Tensor::scalar(5.0));
  const auto p = t.mul(x, y);
  const auto g = t.backward(p, Tensor::scalar(1.0));
  CHECK(g.get(x)[0] == doctest::Approx(5.0));
  CHECK(g.get(y)[0] == doctest::Approx(2.0));
}

TEST_CASE("tanh gradient matches central differences at 0.7") {
  Tape t;
  const auto x = t.leaf(Tensor::scalar(0.7));
  const auto y = t.tanh(x);
  const auto g = t.backward(y, Tensor::scalar(1.0));
  const double h = 1e-5;
  const double fd = (std::tanh(0.7 + h) - std::tanh(0.7 - h)) / (2 * h);
  CHECK(std::abs(g.get(x)[0] - fd) < 1e-7);
}

TEST_CASE("backward on a foreign variable id fails") {
  Tape t;
  t.leaf(Tensor::scalar(1.0));
  CHECK_THROWS_AS(t.backward(Variable{57}, Tensor::scalar(1.0)), ShapeError);
  const auto x = t.leaf(Tensor({2}, {1, 2}));
  CHECK_THROWS_AS(t.backward(x, Tensor::scalar(1.0)), ShapeError);  // bad seed shape
}

TEST_CASE("gradients of unused leaves are zero arrays") {
  Tape t;
  const auto x = t.leaf(Tensor::scalar(2.0));
  const auto unused = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  const auto y = t.square(x);
  const auto g = t.backward(y, Tensor::scalar(1.0));
  const Tensor gu = g.get(unused);
  REQUIRE(gu.shape() == std::vector<std::int64_t>{2, 2});
  for (std::int64_t i = 0; i < gu.size(); ++i) CHECK(gu[i] == 0.0);
}

TEST_CASE("empty-row tensors flow through gather/scatter/matmul") {
  Tape t;
  const auto h = t.leaf(Tensor({3, 4}));
  const auto gathered = t.gather_rows(h, {});
  CHECK(t.value(gathered).rows() == 0);
  const auto w = t.leaf(Tensor({4, 2}));
  const auto prod = t.matmul(gathered, w);
  CHECK(t.value(prod).rows() == 0);
  const auto scattered = t.scatter_rows(prod, {}, 3);
  CHECK(t.value(scattered).rows() == 3);
  const auto s = t.sum(scattered);
  CHECK(t.scalar_value(s) == 0.0);
}

TEST_CASE("randomized gradient check across every primitive") {
  RandomStream rng(1234);
  int instances = 0;
  double worst_overall = 0.0;

  for (int trial = 0; trial < 6; ++trial) {
    const std::int64_t r = 1 + static_cast<std::int64_t>(rng.uniform_int(0, 3));
    const std::int64_t c = 1 + static_cast<std::int64_t>(rng.uniform_int(0, 3));
    const std::int64_t k = 1 + static_cast<std::int64_t>(rng.uniform_int(0, 2));

    std::vector<std::int32_t> gather_idx;
    for (int i = 0; i < 5; ++i)
      gather_idx.push_back(static_cast<std::int32_t>(rng.uniform_int(0, r - 1)));
    std::vector<std::int32_t> scatter_idx;
    for (std::int64_t i = 0; i < r; ++i)
      scatter_idx.push_back(static_cast<std::int32_t>(rng.uniform_int(0, 3)));

    using Builder = std::function<Variable(Tape&, std::vector<Variable>&)>;
    const std::vector<std::pair<Builder, std::vector<Tensor>>> cases = {
        {[](Tape& t, std::vector<Variable>& v) { return t.add(v[0], v[1]); },
         {random_tensor(rng, {r, c}), random_tensor(rng, {r, c})}},
        {[](Tape& t, std::vector<Variable>& v) { return t.sub(v[0], v[1]); },
         {random_tensor(rng, {r, c}), random_tensor(rng, {r, c})}},
        {[](Tape& t, std::vector<Variable>& v) { return t.mul(v[0], v[1]); },
         {random_tensor(rng, {r, c}), random_tensor(rng, {r, c})}},
        {[](Tape& t, std::vector<Variable>& v) { return t.div(v[0], v[1]); },
         {random_tensor(rng, {r, c}), random_tensor(rng, {r, c}, 0.8, 2.0)}},
        {[](Tape& t, std::vector<Variable>& v) { return t.scale(v[0], -1.7); },
         {random_tensor(rng, {r, c})}},
        {[](Tape& t, std::vector<Variable>& v) { return t.add_scalar(v[0], 0.3); },
         {random_tensor(rng, {r, c})}},
        {[](Tape& t, std::vector<Variable>& v) { return t.clamp(v[0], 0.8, 1.6); },
         {random_tensor(rng, {r, c})}},
        {[](Tape& t, std::vector<Variable>& v) { return t.matmul(v[0], v[1]); },
         {random_tensor(rng, {r, k}), random_tensor(rng, {k, c})}},
        {[](Tape& t, std::vector<Variable>& v) { return t.sum(v[0]); },
         {random_tensor(rng, {r, c})}},
        {[](Tape& t, std::vector<Variable>& v) { return t.mean(v[0]); },
         {random_tensor(rng, {r, c})}},
        {[r](Tape& t, std::vector<Variable>& v) { return t.broadcast_rows(v[0], r); },
         {random_tensor(rng, {1, c})}},
        {[c](Tape& t, std::vector<Variable>& v) { return t.broadcast_cols(v[0], c); },
         {random_tensor(rng, {r, 1})}},
        {[](Tape& t, std::vector<Variable>& v) { return t.tanh(v[0]); },
         {random_tensor(rng, {r, c}, -1.5, 1.5)}},
        {[](Tape& t, std::vector<Variable>& v) { return t.exp(v[0]); },
         {random_tensor(rng, {r, c}, -1.0, 1.0)}},
        {[](Tape& t, std::vector<Variable>& v) { return t.log(v[0]); },
         {random_tensor(rng, {r, c}, 0.5, 3.0)}},
        {[](Tape& t, std::vector<Variable>& v) { return t.sqrt(v[0]); },
         {random_tensor(rng, {r, c}, 0.5, 3.0)}},
        {[](Tape& t, std::vector<Variable>& v) { return t.square(v[0]); },
         {random_tensor(rng, {r, c})}},
        {[](Tape& t, std::vector<Variable>& v) { return t.concat_cols(v[0], v[1]); },
         {random_tensor(rng, {r, c}), random_tensor(rng, {r, k})}},
        {[c](Tape& t, std::vector<Variable>& v) { return t.slice(v[0], 0, 1, 0, c); },
         {random_tensor(rng, {r, c})}},
        {[gather_idx](Tape& t, std::vector<Variable>& v) {
           return t.gather_rows(v[0], gather_idx);
         },
         {random_tensor(rng, {r, c})}},
        {[scatter_idx](Tape& t, std::vector<Variable>& v) {
           return t.scatter_rows(v[0], scatter_idx, 4);
         },
         {random_tensor(rng, {r, c})}},
        {[](Tape& t, std::vector<Variable>& v) {
           return t.smoothed_norm(v[0], 1e-10);
         },
         {random_tensor(rng, {r, c})}},
    };

    for (const auto& [builder, leaves] : cases) {
      const double rel = fd_check(builder, leaves, rng);
      CHECK(rel < 1e-6);
      worst_overall = std::max(worst_overall, rel);
      ++instances;
    }
  }
  CHECK(instances >= 50);
  MESSAGE("instances: " << instances << ", worst rel err: " << worst_overall);
}

TEST_CASE("backward is linear in the seed") {
  RandomStream rng(77);
  Tape t;
  const auto x = t.leaf(random_tensor(rng, {3, 2}));
  const auto y = t.leaf(random_tensor(rng, {3, 2}));
  const auto out = t.mul(t.tanh(x), t.exp(t.scale(y, 0.5)));

  Tensor sa = random_tensor(rng, {3, 2}, -1, 1);
  Tensor sb = random_tensor(rng, {3, 2}, -1, 1);
  Tensor sab(sa.shape());
  for (std::int64_t i = 0; i < sa.size(); ++i) sab[i] = sa[i] + sb[i];

  const Tensor ga = t.backward(out, sa).get(x);
  const Tensor gb = t.backward(out, sb).get(x);
  const Tensor gab = t.backward(out, sab).get(x);
  for (std::int64_t i = 0; i < ga.size(); ++i)
    CHECK(std::abs(gab[i] - (ga[i] + gb[i])) < 1e-12);
}

TEST_CASE("multi-seed backward accumulates both outputs") {
  Tape t;
  const auto x = t.leaf(Tensor::scalar(1.5));
  const auto a = t.square(x);      // da/dx = 3
  const auto b = t.scale(x, 4.0);  // db/dx = 4
  Tape::SeedList seeds;
  seeds.emplace_back(a, Tensor::scalar(1.0));
  seeds.emplace_back(b, Tensor::scalar(1.0));
  const auto g = t.backward(seeds);
  CHECK(g.get(x)[0] == doctest::Approx(7.0));
}
