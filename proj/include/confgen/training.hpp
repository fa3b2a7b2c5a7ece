#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "confgen/distgeo.hpp"
#include "confgen/model.hpp"
#include "confgen/molgraph.hpp"
#include "confgen/rng.hpp"

namespace confgen::train {

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 128;
  int epochs = 1;
  double lambda = 1.0;
  double alpha = 1.0;
  dg::InnerLoopConfig inner;  // trajectory storage is forced on internally
  std::uint64_t seed = 0;
  enum class Mode { Full, AblationNoRecon } mode = Mode::Full;
  bool recon_heavy_only = false;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only

  void validate() const;
};

TrainConfig::Mode mode_from_string(const std::string& s);
std::string to_string(TrainConfig::Mode m);

// Adam moments, one slot per parameter entry.
struct OptimizerState {
  std::vector<std::vector<double>> m, v;
  long step = 0;

  static OptimizerState like(const model::ModelParameters& params);
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-entry gradient accumulator matching ModelParameters::entries().
using GradientBuffer = std::vector<std::vector<double>>;
GradientBuffer zero_gradients(const model::ModelParameters& params);

// Standard bias-corrected Adam step, in place. Throws NumericError on
// non-finite gradients.
void adam_update(model::ModelParameters& params, const GradientBuffer& grads,
                 OptimizerState& opt, double lr,
                 const AdamConfig& adam = AdamConfig{});

struct TrainSample {
  const mol::MolecularGraph* graph = nullptr;
  const mol::Conformation* conformer = nullptr;
};

// All stochastic draws consumed by one training sample, fixed up front so a
// loss evaluation is a deterministic function of the parameters.
struct SampleNoise {
  std::vector<double> eps;  // z_dim reparameterization draw
  std::vector<double> d0;   // m-dimensional flow base sample
  std::uint64_t solver_seed = 0;
};

SampleNoise draw_sample_noise(const mol::MolecularGraph& g,
                              const model::ModelParameters& params,
                              RandomStream stream);

// One sample's losses and (optionally) its parameter gradient contribution.
struct SampleRun {
  bool diverged = false;
  double recon = 0.0;
  double prior = 0.0;
  double aux = 0.0;
  mol::Conformation solved;       // final inner-loop state
  mol::Conformation aligned_ref;  // reference superposed onto `solved`
};

struct SampleRunOptions {
  bool want_gradients = true;
  // When set, the reconstruction loss is measured against this fixed,
  // pre-aligned reference instead of re-running the alignment (used by the
  // finite-difference oracle).
  const mol::Conformation* frozen_aligned_ref = nullptr;
};

SampleRun run_training_sample(const TrainSample& sample,
                              const model::ModelParameters& params,
                              const TrainConfig& cfg, const SampleNoise& noise,
                              const SampleRunOptions& opts,
                              GradientBuffer* grad_accum);

// Total loss under cfg.mode for a fixed-noise sample; the scalar the
// analytic parameter gradient is checked against.
double sample_total_loss(const TrainSample& sample,
                         const model::ModelParameters& params,
                         const TrainConfig& cfg, const SampleNoise& noise,
                         const mol::Conformation* frozen_aligned_ref);

struct StepStats {
  model::LossBreakdown loss;
  int diverged = 0;
  long step = 0;
};

// One optimizer step over a batch: per-sample forward/backward, gradient
// averaging over the samples that survived, one Adam update. Samples whose
// inner loop diverges are skipped with a warning; a batch with no survivors
// throws DivergedError.
StepStats training_step(const std::vector<TrainSample>& batch,
                        model::ModelParameters& params, OptimizerState& opt,
                        const TrainConfig& cfg, RandomStream step_stream);

struct TrainResult {
  int epochs_run = 0;
  long steps_run = 0;
  int total_diverged = 0;
  model::LossBreakdown last_loss;
};

using EpochCallback = std::function<void(int epoch,
                                         const model::ModelParameters&,
                                         const OptimizerState&)>;

// Full training loop. Writes one CSV row per step to `log` (with header)
// when provided; invokes `on_checkpoint` per cfg.checkpoint_every and after
// the final epoch.
TrainResult train(const std::vector<mol::MoleculeRecord>& dataset,
                  const TrainConfig& cfg, model::ModelParameters& params,
                  OptimizerState& opt, int start_epoch = 0,
                  std::ostream* log = nullptr,
                  const EpochCallback& on_checkpoint = nullptr);

void write_log_header(std::ostream& out);

// Prior draw -> conditional flow -> best-of-restarts distance geometry.
mol::Conformation sample_conformation(const mol::MolecularGraph& g,
                                      const model::ModelParameters& params,
                                      const dg::InnerLoopConfig& inner_cfg,
                                      RandomStream stream);

}  // namespace confgen::train
