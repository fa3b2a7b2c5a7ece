#include "confgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <ostream>

#include "confgen/errors.hpp"

namespace confgen::train {

using model::BoundParams;
using model::ModelParameters;
using tape::Tape;
using tape::Tensor;
using tape::Variable;

void TrainConfig::validate() const {
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (lambda < 0.0 || alpha < 0.0)
    throw ConfigError("loss weights must be nonnegative");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  inner.validate();
}

TrainConfig::Mode mode_from_string(const std::string& s) {
  if (s == "full") return TrainConfig::Mode::Full;
  if (s == "ablation_no_recon") return TrainConfig::Mode::AblationNoRecon;
  throw ConfigError("unknown training mode '" + s + "'");
}

std::string to_string(TrainConfig::Mode m) {
  return m == TrainConfig::Mode::Full ? "full" : "ablation_no_recon";
}

OptimizerState OptimizerState::like(const ModelParameters& params) {
  OptimizerState s;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.values.size(), 0.0);
    s.v.emplace_back(e.values.size(), 0.0);
  }
  return s;
}

GradientBuffer zero_gradients(const ModelParameters& params) {
  GradientBuffer g;
  for (const auto& e : params.entries()) g.emplace_back(e.values.size(), 0.0);
  return g;
}

void adam_update(ModelParameters& params, const GradientBuffer& grads,
                 OptimizerState& opt, double lr, const AdamConfig& adam) {
  if (grads.size() != params.entries().size() ||
      opt.m.size() != params.entries().size())
    throw ValidationError("adam_update: buffer shapes do not match parameters");

  opt.step += 1;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(opt.step));

  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = params.entries()[i].values;
    const auto& g = grads[i];
    if (g.size() != p.size())
      throw ValidationError("adam_update: gradient length mismatch");
    auto& m = opt.m[i];
    auto& v = opt.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (!std::isfinite(g[k]))
        throw NumericError("adam_update: non-finite gradient in '" +
                           params.entries()[i].name + "'");
      m[k] = adam.beta1 * m[k] + (1.0 - adam.beta1) * g[k];
      v[k] = adam.beta2 * v[k] + (1.0 - adam.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + adam.epsilon);
    }
  }
}

SampleNoise draw_sample_noise(const mol::MolecularGraph& g,
                              const ModelParameters& params,
                              RandomStream stream) {
  SampleNoise n;
  RandomStream zs = stream.sub("eps");
  n.eps = zs.normal_vector(static_cast<std::size_t>(params.arch.z_dim));
  RandomStream ds = stream.sub("d0");
  n.d0 = ds.normal_vector(static_cast<std::size_t>(g.edge_count()));
  n.solver_seed = stream.sub("solver").seed();
  return n;
}

namespace {

Tensor column_tensor(const std::vector<double>& v) {
  Tensor t({static_cast<std::int64_t>(v.size()), 1});
  for (std::size_t i = 0; i < v.size(); ++i)
    t.at(static_cast<std::int64_t>(i), 0) = v[i];
  return t;
}

Tensor row_tensor(const std::vector<double>& v) {
  Tensor t({1, static_cast<std::int64_t>(v.size())});
  for (std::size_t i = 0; i < v.size(); ++i)
    t.at(0, static_cast<std::int64_t>(i)) = v[i];
  return t;
}

}  // namespace

SampleRun run_training_sample(const TrainSample& sample,
                              const ModelParameters& params,
                              const TrainConfig& cfg, const SampleNoise& noise,
                              const SampleRunOptions& opts,
                              GradientBuffer* grad_accum) {
  const mol::MolecularGraph& g = *sample.graph;
  const mol::Conformation& R_star = *sample.conformer;
  if (!g.expanded)
    throw ValidationError("training sample graph must be expanded");
  R_star.validate(g.atom_count());

  SampleRun out;

  Tape t;
  const BoundParams bp = model::bind_parameters(t, params);

  // Ground-truth distances drive both the encoder and the flow inversion.
  const auto d_star = mol::distances_from_conformation(g, R_star);
  const Variable d_star_var = t.constant(column_tensor(d_star.values));

  const auto enc = model::encode_vars(t, g, d_star_var, bp);
  const auto pri = model::prior_vars(t, g, bp);
  const Variable kl = model::kl_vars(t, enc, pri);

  const Variable eps = t.constant(row_tensor(noise.eps));
  const Variable z = t.add(enc.mean, t.mul(enc.std, eps));

  const auto inv = model::cnf_inverse_vars(t, d_star_var, z, g, bp);
  const Variable loglik =
      t.sub(model::gaussian_loglik_vars(t, inv.state), inv.logdet);
  const Variable aux = t.neg(loglik);

  const Variable d0 = t.constant(column_tensor(noise.d0));
  const auto fwd = model::cnf_forward_vars(t, d0, z, g, bp);

  out.prior = t.scalar_value(kl);
  out.aux = t.scalar_value(aux);

  // Inner loop on the generated distances.
  mol::DistanceVector d_gen;
  {
    const Tensor& dv = t.value(fwd.state);
    d_gen.values.assign(dv.data(), dv.data() + dv.size());
  }
  dg::InnerLoopConfig inner = cfg.inner;
  inner.store_trajectory = cfg.mode == TrainConfig::Mode::Full && opts.want_gradients;
  inner.early_stop_tol = 0.0;

  dg::InnerTrajectory traj;
  try {
    traj = dg::solve_distance_geometry(d_gen, g, inner,
                                       RandomStream(noise.solver_seed));
  } catch (const DivergedError&) {
    out.diverged = true;
    return out;
  }
  out.solved = traj.final_state();

  const AtomMask mask = cfg.recon_heavy_only ? mol::heavy_mask(g)
                                             : mol::all_mask(g.atom_count());
  if (opts.frozen_aligned_ref) {
    out.aligned_ref = *opts.frozen_aligned_ref;
  } else {
    out.aligned_ref =
        geom::detail::kabsch_core(out.solved, R_star, mask).aligned;
  }
  double recon = 0.0;
  for (int i = 0; i < g.atom_count(); ++i) {
    if (!mask[i]) continue;
    for (int j = 0; j < 3; ++j) {
      const double diff = out.solved.xyz[i][j] - out.aligned_ref.xyz[i][j];
      recon += diff * diff;
    }
  }
  out.recon = recon;

  if (!opts.want_gradients || !grad_accum) return out;

  Tape::SeedList seeds;
  seeds.emplace_back(kl, Tensor::scalar(cfg.lambda));
  seeds.emplace_back(aux, Tensor::scalar(cfg.alpha));

  if (cfg.mode == TrainConfig::Mode::Full) {
    std::vector<Vec3> outer_seed(out.solved.xyz.size(), Vec3{0, 0, 0});
    for (std::size_t i = 0; i < out.solved.xyz.size(); ++i) {
      if (!mask[i]) continue;
      for (int j = 0; j < 3; ++j)
        outer_seed[i][j] =
            2.0 * (out.solved.xyz[i][j] - out.aligned_ref.xyz[i][j]);
    }
    const auto hyper = dg::hypergradient(traj, d_gen, g, inner, outer_seed);
    seeds.emplace_back(fwd.state, column_tensor(hyper));
  }

  const auto grads = t.backward(seeds);
  auto& buffer = *grad_accum;
  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    const Tensor gi = grads.get(bp.at(params.entries()[i].name));
    for (std::int64_t k = 0; k < gi.size(); ++k)
      buffer[i][static_cast<std::size_t>(k)] += gi[k];
  }
  return out;
}

double sample_total_loss(const TrainSample& sample,
                         const ModelParameters& params, const TrainConfig& cfg,
                         const SampleNoise& noise,
                         const mol::Conformation* frozen_aligned_ref) {
  SampleRunOptions opts;
  opts.want_gradients = false;
  opts.frozen_aligned_ref = frozen_aligned_ref;
  const SampleRun run =
      run_training_sample(sample, params, cfg, noise, opts, nullptr);
  if (run.diverged)
    throw DivergedError("sample_total_loss: inner loop diverged");
  const double recon_term =
      cfg.mode == TrainConfig::Mode::Full ? run.recon : 0.0;
  return recon_term + cfg.lambda * run.prior + cfg.alpha * run.aux;
}

StepStats training_step(const std::vector<TrainSample>& batch,
                        ModelParameters& params, OptimizerState& opt,
                        const TrainConfig& cfg, RandomStream step_stream) {
  cfg.validate();
  if (batch.empty()) throw ValidationError("training_step: empty batch");

  GradientBuffer accum = zero_gradients(params);
  double recon = 0.0, prior = 0.0, aux = 0.0;
  int ok = 0, diverged = 0;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SampleNoise noise = draw_sample_noise(
        *batch[i].graph, params, step_stream.sub("sample", i));
    SampleRunOptions opts;
    const SampleRun run =
        run_training_sample(batch[i], params, cfg, noise, opts, &accum);
    if (run.diverged) {
      ++diverged;
      std::cerr << "[warn] inner loop diverged for molecule '"
                << batch[i].graph->id << "', sample skipped\n";
      continue;
    }
    recon += run.recon;
    prior += run.prior;
    aux += run.aux;
    ++ok;
  }

  if (ok == 0)
    throw DivergedError("training_step: every sample in the batch diverged");

  const double inv_ok = 1.0 / ok;
  for (auto& entry : accum)
    for (auto& v : entry) v *= inv_ok;

  adam_update(params, accum, opt, cfg.learning_rate);

  StepStats stats;
  stats.loss.recon = recon * inv_ok;
  stats.loss.prior = prior * inv_ok;
  stats.loss.aux = aux * inv_ok;
  stats.loss.lambda = cfg.lambda;
  stats.loss.alpha = cfg.alpha;
  const double recon_term =
      cfg.mode == TrainConfig::Mode::Full ? stats.loss.recon : 0.0;
  stats.loss.total = recon_term + cfg.lambda * stats.loss.prior +
                     cfg.alpha * stats.loss.aux;
  stats.diverged = diverged;
  stats.step = opt.step;
  return stats;
}

void write_log_header(std::ostream& out) {
  out << "epoch,step,recon,prior,aux,total,diverged_count\n";
}

TrainResult train(const std::vector<mol::MoleculeRecord>& dataset,
                  const TrainConfig& cfg, ModelParameters& params,
                  OptimizerState& opt, int start_epoch, std::ostream* log,
                  const EpochCallback& on_checkpoint) {
  cfg.validate();

  std::vector<TrainSample> all;
  for (const auto& rec : dataset) {
    for (const auto& conf : rec.conformers)
      all.push_back({&rec.graph, &conf});
  }
  if (all.empty())
    throw ValidationError("train: dataset contains no conformers");

  RandomStream root(cfg.seed);
  TrainResult result;

  for (int epoch = start_epoch; epoch < start_epoch + cfg.epochs; ++epoch) {
    RandomStream epoch_stream = root.sub("epoch", static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    {
      RandomStream shuffle_stream = epoch_stream.sub("shuffle");
      shuffle_stream.shuffle(order);
    }

    std::size_t pos = 0;
    std::uint64_t step_in_epoch = 0;
    while (pos < order.size()) {
      std::vector<TrainSample> batch;
      for (; pos < order.size() &&
             batch.size() < static_cast<std::size_t>(cfg.batch_size);
           ++pos)
        batch.push_back(all[order[pos]]);

      const StepStats stats = training_step(
          batch, params, opt, cfg, epoch_stream.sub("step", step_in_epoch));
      ++step_in_epoch;
      result.steps_run += 1;
      result.total_diverged += stats.diverged;
      result.last_loss = stats.loss;

      if (log) {
        (*log) << epoch << ',' << stats.step << ',' << stats.loss.recon << ','
               << stats.loss.prior << ',' << stats.loss.aux << ','
               << stats.loss.total << ',' << stats.diverged << '\n';
      }
    }
    result.epochs_run += 1;

    const int epochs_done = epoch - start_epoch + 1;
    const bool final_epoch = epochs_done == cfg.epochs;
    if (on_checkpoint &&
        (final_epoch ||
         (cfg.checkpoint_every > 0 && epochs_done % cfg.checkpoint_every == 0)))
      on_checkpoint(epoch, params, opt);
  }
  return result;
}

mol::Conformation sample_conformation(const mol::MolecularGraph& g,
                                      const ModelParameters& params,
                                      const dg::InnerLoopConfig& inner_cfg,
                                      RandomStream stream) {
  if (!g.expanded)
    throw ValidationError("sample_conformation requires an expanded graph");

  const auto prior = model::prior_params(g, params);
  RandomStream zs = stream.sub("z");
  const auto sample = model::reparameterize(
      prior, zs.normal_vector(prior.mean.size()));

  RandomStream ds = stream.sub("d0");
  const auto d0 = ds.normal_vector(static_cast<std::size_t>(g.edge_count()));

  const auto [d_gen, logdet] = model::cnf_forward(d0, sample.z, g, params);
  (void)logdet;

  const auto traj =
      dg::solve_distance_geometry(d_gen, g, inner_cfg, stream.sub("solve"));
  return traj.final_state();
}

}  // namespace confgen::train
