#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "confgen/errors.hpp"
#include "confgen/training.hpp"
#include "testutil.hpp"

using namespace confgen;
using namespace testutil;

namespace {

model::ArchConfig toy_arch(int hidden = 10, int z = 3, int k = 8) {
  model::ArchConfig a;
  a.hidden = hidden;
  a.layers = 2;
  a.z_dim = z;
  a.dyn_hidden = 16;
  a.cnf_steps = k;
  return a;
}

train::TrainConfig toy_config() {
  train::TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.inner.steps = 60;
  cfg.inner.learning_rate = 0.05;
  cfg.inner.init_scale = 1.0;
  cfg.seed = 17;
  return cfg;
}

// A 5-atom chain with a uniform planar zig-zag conformer. The expanded chain
// has exactly 3n-6 distance constraints, so nearby distance vectors stay
// realizable, and the uniform geometry gives automorphic edges identical
// target distances (the edge-wise flow cannot tell such edges apart).
mol::MoleculeRecord chain_fixture() {
  mol::MoleculeRecord rec;
  rec.graph = mol::expand_auxiliary_edges(path_graph(5, "C"));
  rec.graph.id = "chain5";
  rec.conformers.push_back(conformation({{0.0, 0.35, 0.0},
                                         {1.2, -0.35, 0.0},
                                         {2.4, 0.35, 0.0},
                                         {3.6, -0.35, 0.0},
                                         {4.8, 0.35, 0.0}}));
  return rec;
}

struct TrainedToy {
  std::vector<mol::MoleculeRecord> data;
  model::ModelParameters params;
  train::TrainConfig cfg;
  std::vector<double> totals;  // per-step reported total
};

const TrainedToy& trained_toy() {
  static const TrainedToy fixture = [] {
    TrainedToy f;
    f.data.push_back(chain_fixture());
    f.cfg = toy_config();
    f.cfg.batch_size = 1;
    f.params = model::ModelParameters::init(toy_arch(), RandomStream(21));
    auto opt = train::OptimizerState::like(f.params);

    std::vector<train::TrainSample> batch{
        {&f.data[0].graph, &f.data[0].conformers[0]}};
    RandomStream root(f.cfg.seed);
    for (int step = 0; step < 500; ++step) {
      const auto stats = train::training_step(
          batch, f.params, opt, f.cfg,
          root.sub("step", static_cast<std::uint64_t>(step)));
      f.totals.push_back(stats.loss.total);
    }
    return f;
  }();
  return fixture;
}

}  // namespace

TEST_CASE("adam: zero gradient from a fresh state leaves parameters unchanged") {
  auto params = model::ModelParameters::init(toy_arch(4, 2, 2), RandomStream(1));
  const auto before = params;
  auto opt = train::OptimizerState::like(params);
  auto grads = train::zero_gradients(params);
  train::adam_update(params, grads, opt, 0.5);
  for (std::size_t i = 0; i < params.entries().size(); ++i)
    for (std::size_t k = 0; k < params.entries()[i].values.size(); ++k)
      CHECK(params.entries()[i].values[k] == before.entries()[i].values[k]);
  CHECK(opt.step == 1);

  // Pre-existing moments decay by beta under a zero gradient.
  opt.m[0][0] = 1.0;
  opt.v[0][0] = 1.0;
  train::adam_update(params, grads, opt, 0.0);
  CHECK(opt.m[0][0] == doctest::Approx(0.9));
  CHECK(opt.v[0][0] == doctest::Approx(0.999));
}

TEST_CASE("adam: first step with a constant gradient moves by ~ lr") {
  model::ModelParameters params;
  params.arch = toy_arch(1, 1, 1);
  params.add("w", {1, 1}, {3.0});
  auto opt = train::OptimizerState::like(params);
  train::GradientBuffer grads{{0.37}};
  train::adam_update(params, grads, opt, 0.01);
  CHECK(std::abs((3.0 - params.entries()[0].values[0]) - 0.01) < 1e-8);

  // Negative gradient moves the other way.
  model::ModelParameters p2;
  p2.arch = params.arch;
  p2.add("w", {1, 1}, {3.0});
  auto opt2 = train::OptimizerState::like(p2);
  train::GradientBuffer g2{{-5.0}};
  train::adam_update(p2, g2, opt2, 0.01);
  CHECK(std::abs((p2.entries()[0].values[0] - 3.0) - 0.01) < 1e-8);
}

TEST_CASE("adam: identical calls from identical state are identical") {
  auto p1 = model::ModelParameters::init(toy_arch(4, 2, 2), RandomStream(2));
  auto p2 = p1;
  auto o1 = train::OptimizerState::like(p1);
  auto o2 = train::OptimizerState::like(p2);
  train::GradientBuffer grads = train::zero_gradients(p1);
  RandomStream rng(3);
  for (auto& e : grads)
    for (auto& v : e) v = rng.normal();
  train::adam_update(p1, grads, o1, 0.01);
  train::adam_update(p2, grads, o2, 0.01);
  for (std::size_t i = 0; i < p1.entries().size(); ++i)
    for (std::size_t k = 0; k < p1.entries()[i].values.size(); ++k)
      CHECK(p1.entries()[i].values[k] == p2.entries()[i].values[k]);
}

TEST_CASE("adam rejects non-finite gradients") {
  auto params = model::ModelParameters::init(toy_arch(4, 2, 2), RandomStream(4));
  auto opt = train::OptimizerState::like(params);
  auto grads = train::zero_gradients(params);
  grads[0][0] = std::nan("");
  CHECK_THROWS_AS(train::adam_update(params, grads, opt, 0.01), NumericError);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  auto rec = chain_fixture();
  auto params = model::ModelParameters::init(toy_arch(), RandomStream(5));
  const auto before = params;
  auto opt = train::OptimizerState::like(params);
  auto cfg = toy_config();
  cfg.learning_rate = 0.0;
  std::vector<train::TrainSample> batch{{&rec.graph, &rec.conformers[0]}};
  train::training_step(batch, params, opt, cfg, RandomStream(6));
  for (std::size_t i = 0; i < params.entries().size(); ++i)
    for (std::size_t k = 0; k < params.entries()[i].values.size(); ++k)
      CHECK(params.entries()[i].values[k] == before.entries()[i].values[k]);
}

TEST_CASE("ablation mode reports recon but excludes it from the total") {
  auto rec = chain_fixture();
  auto params = model::ModelParameters::init(toy_arch(), RandomStream(7));
  auto opt = train::OptimizerState::like(params);
  auto cfg = toy_config();
  cfg.mode = train::TrainConfig::Mode::AblationNoRecon;
  cfg.lambda = 0.8;
  cfg.alpha = 1.3;
  std::vector<train::TrainSample> batch{{&rec.graph, &rec.conformers[0]}};
  const auto stats = train::training_step(batch, params, opt, cfg, RandomStream(8));
  CHECK(stats.loss.recon > 0.0);
  CHECK(stats.loss.total == doctest::Approx(0.8 * stats.loss.prior +
                                            1.3 * stats.loss.aux));
}

TEST_CASE("full-mode loss accounting is exact") {
  auto rec = chain_fixture();
  auto params = model::ModelParameters::init(toy_arch(), RandomStream(9));
  auto opt = train::OptimizerState::like(params);
  auto cfg = toy_config();
  cfg.lambda = 0.9;
  cfg.alpha = 1.1;
  std::vector<train::TrainSample> batch{{&rec.graph, &rec.conformers[0]}};
  const auto stats = train::training_step(batch, params, opt, cfg, RandomStream(10));
  CHECK(stats.loss.total ==
        stats.loss.recon + 0.9 * stats.loss.prior + 1.1 * stats.loss.aux);
}

TEST_CASE("a diverging inner loop marks the sample, not the run") {
  auto rec = chain_fixture();
  auto params = model::ModelParameters::init(toy_arch(), RandomStream(11));
  params.at("dyn.b2").values[0] = 1e8;  // flow emits absurd distances
  auto cfg = toy_config();

  const auto noise = train::draw_sample_noise(rec.graph, params, RandomStream(12));
  train::SampleRunOptions opts;
  auto grads = train::zero_gradients(params);
  const auto run = train::run_training_sample(
      {&rec.graph, &rec.conformers[0]}, params, cfg, noise, opts, &grads);
  CHECK(run.diverged);

  auto opt = train::OptimizerState::like(params);
  std::vector<train::TrainSample> batch{{&rec.graph, &rec.conformers[0]}};
  CHECK_THROWS_AS(train::training_step(batch, params, opt, cfg, RandomStream(13)),
                  DivergedError);
}

TEST_CASE("training loss is invariant under rigid motion of the data") {
  auto rec = chain_fixture();
  auto params = model::ModelParameters::init(toy_arch(), RandomStream(14));
  auto cfg = toy_config();
  const auto noise = train::draw_sample_noise(rec.graph, params, RandomStream(15));

  train::SampleRunOptions opts;
  opts.want_gradients = false;
  const auto base = train::run_training_sample(
      {&rec.graph, &rec.conformers[0]}, params, cfg, noise, opts, nullptr);

  RandomStream rng(16);
  for (int trial = 0; trial < 5; ++trial) {
    const auto moved = rigid_move(rec.conformers[0], geom::random_rotation(rng),
                                  {rng.normal() * 2, rng.normal() * 2, rng.normal() * 2});
    const auto run = train::run_training_sample({&rec.graph, &moved}, params,
                                                cfg, noise, opts, nullptr);
    CHECK(std::abs(run.prior - base.prior) < 1e-8);
    CHECK(std::abs(run.aux - base.aux) < 1e-8);
    CHECK(std::abs(run.recon - base.recon) < 1e-6);
  }
}

TEST_CASE("analytic parameter gradient matches finite differences (spot check)") {
  auto rec = chain_fixture();
  model::ArchConfig arch = toy_arch(6, 2, 4);
  auto params = model::ModelParameters::init(arch, RandomStream(17));
  train::TrainConfig cfg = toy_config();
  cfg.inner.steps = 10;
  const train::TrainSample sample{&rec.graph, &rec.conformers[0]};
  const auto noise = train::draw_sample_noise(rec.graph, params, RandomStream(18));

  train::SampleRunOptions opts;
  auto grads = train::zero_gradients(params);
  const auto base = train::run_training_sample(sample, params, cfg, noise, opts, &grads);
  REQUIRE_FALSE(base.diverged);
  const mol::Conformation frozen = base.aligned_ref;

  const double h = 1e-5;
  int checked = 0;
  for (std::size_t ei = 0; ei < params.entries().size(); ei += 3) {
    auto& entry = params.entries()[ei];
    const std::size_t k = entry.values.size() / 2;
    const double keep = entry.values[k];
    entry.values[k] = keep + h;
    const double fp = train::sample_total_loss(sample, params, cfg, noise, &frozen);
    entry.values[k] = keep - h;
    const double fm = train::sample_total_loss(sample, params, cfg, noise, &frozen);
    entry.values[k] = keep;
    const double fd = (fp - fm) / (2 * h);
    const double an = grads[ei][k];
    if (std::abs(an) > 1e-8) {
      const double rel = std::abs(an - fd) / std::max(std::abs(an), std::abs(fd));
      CHECK(rel < 1e-3);
      ++checked;
    }
  }
  CHECK(checked >= 3);
}

TEST_CASE("overfitting a single molecule reduces the loss") {
  const auto& toy = trained_toy();
  const auto head = std::vector<double>(toy.totals.begin(), toy.totals.begin() + 20);
  const auto tail = std::vector<double>(toy.totals.end() - 20, toy.totals.end());
  double h = 0, t = 0;
  for (double v : head) h += v;
  for (double v : tail) t += v;
  CHECK(t / 20.0 < h / 20.0);
}

TEST_CASE("sampling is deterministic and seed-sensitive") {
  const auto& toy = trained_toy();
  dg::InnerLoopConfig inner;
  inner.steps = 2000;
  inner.learning_rate = 0.02;
  inner.restarts = 10;
  inner.early_stop_tol = 1e-12;

  const auto a = train::sample_conformation(toy.data[0].graph, toy.params,
                                            inner, RandomStream(99));
  const auto b = train::sample_conformation(toy.data[0].graph, toy.params,
                                            inner, RandomStream(99));
  for (std::size_t i = 0; i < a.xyz.size(); ++i)
    for (int j = 0; j < 3; ++j) CHECK(a.xyz[i][j] == b.xyz[i][j]);

  const auto c = train::sample_conformation(toy.data[0].graph, toy.params,
                                            inner, RandomStream(100));
  CHECK(geom::aligned_rmsd(a, c, mol::all_mask(5)) > 1e-6);
}

TEST_CASE("sampled conformations satisfy their own distance targets") {
  // Flow with hand-set contracting dynamics rate = -c (d - a): every edge
  // lands within ~1e-3 of a, and any near-equilateral triple is realizable,
  // so the solver owes us an essentially exact embedding.
  const auto g = mol::expand_auxiliary_edges(triangle_graph());
  model::ArchConfig arch = toy_arch(6, 2, 20);
  auto params = model::ModelParameters::init(arch, RandomStream(31));
  for (auto& e : params.entries())
    std::fill(e.values.begin(), e.values.end(), 0.0);
  const double c = 10.0, a = 1.5;
  params.at("dyn.Wskip").values[0] = -c;
  params.at("dyn.b2").values[0] = c * a;

  dg::InnerLoopConfig inner;
  inner.steps = 3000;
  inner.learning_rate = 0.02;
  inner.restarts = 10;
  inner.early_stop_tol = 1e-12;

  for (std::uint64_t seed = 200; seed < 205; ++seed) {
    // Reproduce the sampling pipeline's draws to get at the targets.
    RandomStream stream(seed);
    const auto prior = model::prior_params(g, params);
    RandomStream zs = stream.sub("z");
    const auto z =
        model::reparameterize(prior, zs.normal_vector(prior.mean.size()));
    RandomStream ds = stream.sub("d0");
    const auto d0 = ds.normal_vector(static_cast<std::size_t>(g.edge_count()));
    const auto [d_gen, logdet] = model::cnf_forward(d0, z.z, g, params);
    (void)logdet;
    for (double v : d_gen.values) CHECK(std::abs(v - a) < 5e-3);

    const auto R =
        train::sample_conformation(g, params, inner, RandomStream(seed));
    const double h = dg::inner_objective(R, d_gen, g);
    CHECK(h / g.edge_count() < 1e-4);
  }
}

TEST_CASE("train loop writes one log row per step and checkpoints resume") {
  std::vector<mol::MoleculeRecord> data{chain_fixture()};
  data[0].conformers.push_back(rigid_move(data[0].conformers[0],
                                          geom::rotation_z(0.5), {1, 0, 0}));

  auto params = model::ModelParameters::init(toy_arch(), RandomStream(22));
  auto opt = train::OptimizerState::like(params);
  auto cfg = toy_config();
  cfg.batch_size = 2;
  cfg.epochs = 3;
  cfg.checkpoint_every = 2;

  std::ostringstream log;
  train::write_log_header(log);
  int checkpoints = 0;
  const auto result = train::train(
      data, cfg, params, opt, 0, &log,
      [&](int, const model::ModelParameters&, const train::OptimizerState&) {
        ++checkpoints;
      });
  CHECK(result.epochs_run == 3);
  CHECK(result.steps_run == 3);  // 2 conformers, batch 2 -> 1 step/epoch
  CHECK(checkpoints == 2);       // epoch 2 and the final epoch

  int rows = 0;
  std::string line;
  std::istringstream in(log.str());
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);  // header + 3 steps

  // Round trip through a checkpoint with optimizer state.
  model::CheckpointExtras extras;
  extras.has_optimizer = true;
  extras.step = opt.step;
  extras.epoch = 3;
  extras.adam_m = opt.m;
  extras.adam_v = opt.v;
  const auto path = std::filesystem::temp_directory_path() / "confgen_resume.json";
  model::save_checkpoint(path.string(), params, &extras);

  model::CheckpointExtras loaded_extras;
  auto loaded = model::load_checkpoint(path.string(), &loaded_extras);
  REQUIRE(loaded_extras.has_optimizer);
  train::OptimizerState opt2;
  opt2.step = loaded_extras.step;
  opt2.m = loaded_extras.adam_m;
  opt2.v = loaded_extras.adam_v;
  CHECK(opt2.step == opt.step);
  for (std::size_t i = 0; i < params.entries().size(); ++i)
    for (std::size_t k = 0; k < params.entries()[i].values.size(); ++k)
      CHECK(loaded.entries()[i].values[k] == params.entries()[i].values[k]);

  const long before = opt2.step;
  cfg.epochs = 1;
  cfg.checkpoint_every = 0;
  train::train(data, cfg, loaded, opt2, 3, nullptr, nullptr);
  CHECK(opt2.step == before + 1);
  std::filesystem::remove(path);
}

TEST_CASE("training runs are bit-reproducible") {
  std::vector<mol::MoleculeRecord> data{chain_fixture()};
  auto cfg = toy_config();
  cfg.epochs = 2;
  cfg.batch_size = 1;

  auto run_once = [&]() {
    auto params = model::ModelParameters::init(toy_arch(), RandomStream(23));
    auto opt = train::OptimizerState::like(params);
    train::train(data, cfg, params, opt, 0, nullptr, nullptr);
    return params;
  };
  const auto p1 = run_once();
  const auto p2 = run_once();
  for (std::size_t i = 0; i < p1.entries().size(); ++i)
    for (std::size_t k = 0; k < p1.entries()[i].values.size(); ++k)
      CHECK(p1.entries()[i].values[k] == p2.entries()[i].values[k]);
}
