#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "confgen/molgraph.hpp"
#include "confgen/rng.hpp"
#include "confgen/tape.hpp"

namespace confgen::model {

struct ArchConfig {
  int hidden = 256;
  int layers = 3;
  int z_dim = 10;
  int dyn_hidden = 256;  // width of the flow dynamics net
  int cnf_steps = 20;    // fixed RK4 steps over [0, 1]

  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

constexpr double kSigmaClampMin = 1e-4;
constexpr double kSigmaClampMax = 1e4;

// Which MPNN stack to evaluate. The encoder consumes per-edge distances as
// an extra scalar input; the prior and the decoder conditioner see the bare
// graph.
enum class Stack { Encoder, Prior, DecoderCond };

// Named flat parameter arrays. Entry order is fixed by the architecture, so
// optimizer state and checkpoints line up index-for-index.
class ModelParameters {
 public:
  struct Entry {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<double> values;
  };

  ArchConfig arch;

  static ModelParameters init(const ArchConfig& arch, RandomStream rng);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  const Entry& at(const std::string& name) const;
  Entry& at(const std::string& name);
  std::size_t total_size() const;

  void add(std::string name, std::vector<std::int64_t> shape,
           std::vector<double> values);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

constexpr std::string_view kCheckpointSchema = "confgen-checkpoint-v1";

// Optional training state carried inside a checkpoint.
struct CheckpointExtras {
  bool has_optimizer = false;
  long step = 0;
  int epoch = 0;
  std::vector<std::vector<double>> adam_m, adam_v;
};

void save_checkpoint(const std::string& path, const ModelParameters& params,
                     const CheckpointExtras* extras = nullptr);
ModelParameters load_checkpoint(const std::string& path,
                                CheckpointExtras* extras = nullptr);

struct GaussianSpec {
  std::vector<double> mean;
  std::vector<double> std;
};

struct LatentSample {
  std::vector<double> z;
  std::vector<double> epsilon;
};

struct LossBreakdown {
  double recon = 0.0;
  double prior = 0.0;
  double aux = 0.0;
  double lambda = 1.0;
  double alpha = 1.0;
  double total = 0.0;
};

LossBreakdown assemble_loss(double recon, double prior, double aux,
                            double lambda, double alpha);

// ---- plain evaluation surface ------------------------------------------

// Per-atom embeddings (n x hidden) after `layers` rounds of message passing.
std::vector<std::vector<double>> mpnn_embed(
    const mol::MolecularGraph& g, const mol::DistanceVector* edge_scalars,
    const ModelParameters& params, Stack stack);

GaussianSpec encode(const mol::MolecularGraph& g, const mol::Conformation& R,
                    const ModelParameters& params);
GaussianSpec prior_params(const mol::MolecularGraph& g,
                          const ModelParameters& params);

LatentSample reparameterize(const GaussianSpec& spec,
                            const std::vector<double>& epsilon);

// Closed-form KL(q || p) between diagonal Gaussians, summed over dimensions.
double kl_divergence(const GaussianSpec& q, const GaussianSpec& p);

// Integrates the conditional flow from t=0 to 1; returns the final state and
// logdet = -integral of the Jacobian trace along the path, so that
// log p(d1) = log N(d0; 0, I) + logdet.
std::pair<mol::DistanceVector, double> cnf_forward(
    const std::vector<double>& d0, const std::vector<double>& z,
    const mol::MolecularGraph& g, const ModelParameters& params);

// Integrates backwards from t=1 to 0; returns the recovered base state and
// the exact conditional log-likelihood of d1.
std::pair<std::vector<double>, double> cnf_inverse(
    const mol::DistanceVector& d1, const std::vector<double>& z,
    const mol::MolecularGraph& g, const ModelParameters& params);

// ---- tape-graph surface (used by training) ------------------------------

struct BoundParams {
  const ModelParameters* params = nullptr;
  std::map<std::string, tape::Variable> vars;

  tape::Variable at(const std::string& name) const;
};

BoundParams bind_parameters(tape::Tape& t, const ModelParameters& params);

struct GaussianVars {
  tape::Variable mean;  // 1 x z
  tape::Variable std;   // 1 x z
};

tape::Variable mpnn_embed_vars(tape::Tape& t, const mol::MolecularGraph& g,
                               std::optional<tape::Variable> edge_scalars,
                               const BoundParams& bp, Stack stack);

GaussianVars encode_vars(tape::Tape& t, const mol::MolecularGraph& g,
                         tape::Variable edge_scalars, const BoundParams& bp);
GaussianVars prior_vars(tape::Tape& t, const mol::MolecularGraph& g,
                        const BoundParams& bp);

tape::Variable kl_vars(tape::Tape& t, const GaussianVars& q,
                       const GaussianVars& p);

struct CnfResult {
  tape::Variable state;   // m x 1
  tape::Variable logdet;  // scalar
};

CnfResult cnf_forward_vars(tape::Tape& t, tape::Variable d0, tape::Variable z,
                           const mol::MolecularGraph& g, const BoundParams& bp);
CnfResult cnf_inverse_vars(tape::Tape& t, tape::Variable d1, tape::Variable z,
                           const mol::MolecularGraph& g, const BoundParams& bp);

// log N(x; 0, I) for a column vector x.
tape::Variable gaussian_loglik_vars(tape::Tape& t, tape::Variable x);

}  // namespace confgen::model
