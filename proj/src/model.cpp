#include "confgen/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "confgen/errors.hpp"

namespace confgen::model {

using tape::Tape;
using tape::Tensor;
using tape::Variable;

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

std::string stack_prefix(Stack s) {
  switch (s) {
    case Stack::Encoder:
      return "encoder";
    case Stack::Prior:
      return "prior";
    case Stack::DecoderCond:
      return "cond";
  }
  return {};
}

bool stack_has_edge_scalar(Stack s) { return s == Stack::Encoder; }

// Flow dynamics input: [d, t, bond-type one-hot, embed(u), embed(v), z].
int dyn_input_dim(const ArchConfig& a) {
  return 2 + mol::kBondTypeCount + 2 * a.hidden + a.z_dim;
}

}  // namespace

void ArchConfig::validate() const {
  if (hidden < 1 || layers < 1 || z_dim < 1 || dyn_hidden < 1 || cnf_steps < 1)
    throw ConfigError("architecture dimensions must all be >= 1");
}

void ModelParameters::add(std::string name, std::vector<std::int64_t> shape,
                          std::vector<double> values) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  if (n != static_cast<std::int64_t>(values.size()))
    throw ValidationError("parameter '" + name + "' has wrong length");
  index_[name] = entries_.size();
  entries_.push_back({std::move(name), std::move(shape), std::move(values)});
}

const ModelParameters::Entry& ModelParameters::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw ValidationError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

ModelParameters::Entry& ModelParameters::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end())
    throw ValidationError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

std::size_t ModelParameters::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.values.size();
  return n;
}

ModelParameters ModelParameters::init(const ArchConfig& arch, RandomStream rng) {
  arch.validate();
  ModelParameters p;
  p.arch = arch;

  const int h = arch.hidden;
  const int v = mol::kElementVocabSize;
  const int z2 = 2 * arch.z_dim;

  auto weight = [&](const std::string& name, std::int64_t rows,
                    std::int64_t cols) {
    RandomStream s = rng.sub(name);
    std::vector<double> w(static_cast<std::size_t>(rows * cols));
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (auto& x : w) x = scale * s.normal();
    p.add(name, {rows, cols}, std::move(w));
  };
  auto zeros = [&](const std::string& name, std::int64_t rows,
                   std::int64_t cols) {
    p.add(name, {rows, cols},
          std::vector<double>(static_cast<std::size_t>(rows * cols), 0.0));
  };

  for (Stack stack : {Stack::Encoder, Stack::Prior, Stack::DecoderCond}) {
    const std::string pre = stack_prefix(stack);
    const int efeat = mol::kBondTypeCount + (stack_has_edge_scalar(stack) ? 1 : 0);
    weight(pre + ".in.W", v, h);
    zeros(pre + ".in.b", 1, h);
    for (int l = 0; l < arch.layers; ++l) {
      const std::string lp = pre + ".l" + std::to_string(l);
      weight(lp + ".msg.W", h + efeat, h);
      zeros(lp + ".msg.b", 1, h);
      weight(lp + ".upd.W", 2 * h, h);
      zeros(lp + ".upd.b", 1, h);
    }
  }
  weight("encoder.head.W", h, z2);
  zeros("encoder.head.b", 1, z2);
  weight("prior.head.W", h, z2);
  zeros("prior.head.b", 1, z2);

  // Flow dynamics start at the identity map: only the hidden path gets a
  // random init, the output and skip weights are zero.
  weight("dyn.W1", dyn_input_dim(arch), arch.dyn_hidden);
  zeros("dyn.b1", 1, arch.dyn_hidden);
  zeros("dyn.W2", arch.dyn_hidden, 1);
  zeros("dyn.b2", 1, 1);
  zeros("dyn.Wskip", dyn_input_dim(arch), 1);

  return p;
}

void save_checkpoint(const std::string& path, const ModelParameters& params,
                     const CheckpointExtras* extras) {
  nlohmann::json j;
  j["schema"] = kCheckpointSchema;
  j["arch"] = {{"hidden", params.arch.hidden},
               {"layers", params.arch.layers},
               {"z_dim", params.arch.z_dim},
               {"dyn_hidden", params.arch.dyn_hidden},
               {"cnf_steps", params.arch.cnf_steps}};
  nlohmann::json arrays = nlohmann::json::object();
  for (const auto& e : params.entries()) {
    arrays[e.name] = {{"shape", e.shape}, {"values", e.values}};
  }
  j["params"] = std::move(arrays);
  if (extras && extras->has_optimizer) {
    j["optimizer"] = {{"step", extras->step},
                      {"epoch", extras->epoch},
                      {"m", extras->adam_m},
                      {"v", extras->adam_v}};
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open checkpoint '" + path + "' for writing");
  out << j.dump() << "\n";
}

ModelParameters load_checkpoint(const std::string& path,
                                CheckpointExtras* extras) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (j.value("schema", std::string{}) != kCheckpointSchema)
    throw ParseError(path + ": missing or unsupported checkpoint schema tag");

  ArchConfig arch;
  const auto& a = j.at("arch");
  arch.hidden = a.at("hidden").get<int>();
  arch.layers = a.at("layers").get<int>();
  arch.z_dim = a.at("z_dim").get<int>();
  arch.dyn_hidden = a.at("dyn_hidden").get<int>();
  arch.cnf_steps = a.at("cnf_steps").get<int>();

  // Rebuild the canonical entry skeleton, then fill values by name so entry
  // order never depends on JSON key order.
  ModelParameters params = ModelParameters::init(arch, RandomStream(0));
  const auto& arrays = j.at("params");
  for (auto& e : params.entries()) {
    if (!arrays.contains(e.name))
      throw ParseError(path + ": checkpoint is missing parameter '" + e.name +
                       "'");
    const auto& rec = arrays.at(e.name);
    const auto shape = rec.at("shape").get<std::vector<std::int64_t>>();
    if (shape != e.shape)
      throw ParseError(path + ": parameter '" + e.name + "' has wrong shape");
    const auto values = rec.at("values").get<std::vector<double>>();
    if (values.size() != e.values.size())
      throw ParseError(path + ": parameter '" + e.name + "' has wrong length");
    e.values = values;
  }

  if (extras) {
    *extras = CheckpointExtras{};
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      extras->has_optimizer = true;
      extras->step = o.at("step").get<long>();
      extras->epoch = o.at("epoch").get<int>();
      extras->adam_m = o.at("m").get<std::vector<std::vector<double>>>();
      extras->adam_v = o.at("v").get<std::vector<std::vector<double>>>();
    }
  }
  return params;
}

LossBreakdown assemble_loss(double recon, double prior, double aux,
                            double lambda, double alpha) {
  LossBreakdown l;
  l.recon = recon;
  l.prior = prior;
  l.aux = aux;
  l.lambda = lambda;
  l.alpha = alpha;
  l.total = recon + lambda * prior + alpha * aux;
  return l;
}

Variable BoundParams::at(const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end())
    throw ValidationError("parameter '" + name + "' is not bound on the tape");
  return it->second;
}

BoundParams bind_parameters(Tape& t, const ModelParameters& params) {
  BoundParams bp;
  bp.params = &params;
  for (const auto& e : params.entries()) {
    bp.vars[e.name] = t.leaf(Tensor(e.shape, e.values));
  }
  return bp;
}

namespace {

// Directed edge view: every undirected edge appears in both orientations so
// messages flow both ways through shared weights.
struct DirectedEdges {
  std::vector<std::int32_t> src, dst, undirected;
};

DirectedEdges directed_edges(const mol::MolecularGraph& g) {
  DirectedEdges de;
  de.src.reserve(2 * g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    de.src.push_back(g.edges[e].u);
    de.dst.push_back(g.edges[e].v);
    de.undirected.push_back(static_cast<std::int32_t>(e));
    de.src.push_back(g.edges[e].v);
    de.dst.push_back(g.edges[e].u);
    de.undirected.push_back(static_cast<std::int32_t>(e));
  }
  return de;
}

Tensor node_onehot(const mol::MolecularGraph& g) {
  const int n = g.atom_count();
  Tensor x({n, mol::kElementVocabSize});
  for (int i = 0; i < n; ++i)
    x.at(i, static_cast<int>(g.atoms[i].element)) = 1.0;
  return x;
}

Tensor edge_onehot(const mol::MolecularGraph& g, const DirectedEdges& de) {
  Tensor x({static_cast<std::int64_t>(de.undirected.size()),
            mol::kBondTypeCount});
  for (std::size_t i = 0; i < de.undirected.size(); ++i)
    x.at(static_cast<std::int64_t>(i),
         static_cast<int>(g.edges[static_cast<std::size_t>(de.undirected[i])].type)) = 1.0;
  return x;
}

Variable affine(Tape& t, Variable x, Variable w, Variable b) {
  const auto rows = t.value(x).rows();
  return t.add(t.matmul(x, w), t.broadcast_rows(b, rows));
}

Variable mean_pool_rows(Tape& t, Variable x) {
  const auto n = t.value(x).rows();
  Tensor w({1, n});
  for (std::int64_t i = 0; i < n; ++i) w.at(0, i) = 1.0 / static_cast<double>(n);
  return t.matmul(t.constant(std::move(w)), x);
}

GaussianVars gaussian_head(Tape& t, const mol::MolecularGraph& g,
                           std::optional<Variable> edge_scalars,
                           const BoundParams& bp, Stack stack) {
  const auto& arch = bp.params->arch;
  const auto emb = mpnn_embed_vars(t, g, edge_scalars, bp, stack);
  const auto pooled = mean_pool_rows(t, emb);
  const std::string pre = stack_prefix(stack);
  const auto head = affine(t, pooled, bp.at(pre + ".head.W"),
                           bp.at(pre + ".head.b"));
  GaussianVars out;
  out.mean = t.slice(head, 0, 1, 0, arch.z_dim);
  const auto logstd = t.slice(head, 0, 1, arch.z_dim, 2 * arch.z_dim);
  out.std = t.clamp(t.exp(logstd), kSigmaClampMin, kSigmaClampMax);
  return out;
}

}  // namespace

Variable mpnn_embed_vars(Tape& t, const mol::MolecularGraph& g,
                         std::optional<Variable> edge_scalars,
                         const BoundParams& bp, Stack stack) {
  if (!g.expanded)
    throw ValidationError("mpnn_embed requires an expanded graph");
  if (stack_has_edge_scalar(stack) != edge_scalars.has_value())
    throw ValidationError("edge scalar input does not match the stack");

  const auto& arch = bp.params->arch;
  const std::string pre = stack_prefix(stack);
  const int n = g.atom_count();
  const auto de = directed_edges(g);

  Variable efeat = t.constant(edge_onehot(g, de));
  if (edge_scalars) {
    const Tensor& s = t.value(*edge_scalars);
    if (s.rank() != 2 || s.cols() != 1 || s.rows() != g.edge_count())
      throw ValidationError("edge scalars must be an m x 1 column");
    const auto dup = t.gather_rows(*edge_scalars, de.undirected);
    efeat = t.concat_cols(efeat, dup);
  }

  Variable h = t.tanh(affine(t, t.constant(node_onehot(g)),
                             bp.at(pre + ".in.W"), bp.at(pre + ".in.b")));
  for (int l = 0; l < arch.layers; ++l) {
    const std::string lp = pre + ".l" + std::to_string(l);
    const auto hsrc = t.gather_rows(h, de.src);
    const auto msg_in = t.concat_cols(hsrc, efeat);
    const auto msg = t.tanh(affine(t, msg_in, bp.at(lp + ".msg.W"),
                                   bp.at(lp + ".msg.b")));
    const auto agg = t.scatter_rows(msg, de.dst, n);
    const auto upd_in = t.concat_cols(h, agg);
    const auto upd = t.tanh(affine(t, upd_in, bp.at(lp + ".upd.W"),
                                   bp.at(lp + ".upd.b")));
    h = t.add(h, upd);
  }
  return h;
}

GaussianVars encode_vars(Tape& t, const mol::MolecularGraph& g,
                         Variable edge_scalars, const BoundParams& bp) {
  return gaussian_head(t, g, edge_scalars, bp, Stack::Encoder);
}

GaussianVars prior_vars(Tape& t, const mol::MolecularGraph& g,
                        const BoundParams& bp) {
  return gaussian_head(t, g, std::nullopt, bp, Stack::Prior);
}

Variable kl_vars(Tape& t, const GaussianVars& q, const GaussianVars& p) {
  // Per-dimension: log(sp/sq) + (sq^2 + (mq-mp)^2) / (2 sp^2) - 1/2.
  const auto log_ratio = t.sub(t.log(p.std), t.log(q.std));
  const auto num = t.add(t.square(q.std), t.square(t.sub(q.mean, p.mean)));
  const auto frac = t.div(num, t.scale(t.square(p.std), 2.0));
  const auto per_dim = t.add_scalar(t.add(log_ratio, frac), -0.5);
  return t.sum(per_dim);
}

namespace {

// Edge-wise flow dynamics network plus the analytic diagonal of its Jacobian
// with respect to the distance input. The derivative is itself recorded with
// tape primitives so parameter gradients flow through the trace term.
struct DynContext {
  Variable etype;          // m x bond types
  Variable eu, ev, zrows;  // m x hidden, m x hidden, m x z
  std::int64_t m = 0;
};

struct DynOut {
  Variable rate;   // m x 1
  Variable trace;  // scalar
};

DynContext make_dyn_context(Tape& t, Variable z, const mol::MolecularGraph& g,
                            const BoundParams& bp) {
  DynContext ctx;
  ctx.m = g.edge_count();
  std::vector<std::int32_t> iu, iv;
  iu.reserve(g.edges.size());
  iv.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    iu.push_back(e.u);
    iv.push_back(e.v);
  }
  Tensor types({ctx.m, mol::kBondTypeCount});
  for (std::int64_t e = 0; e < ctx.m; ++e)
    types.at(e, static_cast<int>(g.edges[static_cast<std::size_t>(e)].type)) = 1.0;
  ctx.etype = t.constant(std::move(types));

  const auto cond = mpnn_embed_vars(t, g, std::nullopt, bp, Stack::DecoderCond);
  ctx.eu = t.gather_rows(cond, iu);
  ctx.ev = t.gather_rows(cond, iv);
  const Tensor& zv = t.value(z);
  if (zv.rank() != 2 || zv.rows() != 1)
    throw ValidationError("latent z must be a 1 x z_dim row");
  ctx.zrows = t.broadcast_rows(z, ctx.m);
  return ctx;
}

DynOut dyn_eval(Tape& t, Variable d, double time, const DynContext& ctx,
                const BoundParams& bp) {
  const auto& arch = bp.params->arch;
  const auto m = ctx.m;

  Tensor tcol({m, 1});
  for (std::int64_t i = 0; i < m; ++i) tcol.at(i, 0) = time;

  const auto x = t.concat_cols(
      t.concat_cols(
          t.concat_cols(
              t.concat_cols(t.concat_cols(d, t.constant(std::move(tcol))),
                            ctx.etype),
              ctx.eu),
          ctx.ev),
      ctx.zrows);

  const auto w1 = bp.at("dyn.W1");
  const auto w2 = bp.at("dyn.W2");
  const auto wskip = bp.at("dyn.Wskip");
  const auto hid = t.tanh(affine(t, x, w1, bp.at("dyn.b1")));
  const auto rate = t.add(
      t.add(t.matmul(hid, w2), t.matmul(x, wskip)),
      t.broadcast_rows(bp.at("dyn.b2"), m));

  // d(rate_e)/d(d_e) = W2 . (1 - hid_e^2) o W1[0,:]  +  Wskip[0,0]
  const auto w1row = t.slice(w1, 0, 1, 0, arch.dyn_hidden);
  const auto gate = t.add_scalar(t.neg(t.square(hid)), 1.0);
  const auto diag = t.matmul(t.mul(gate, t.broadcast_rows(w1row, m)), w2);
  const auto skip00 = t.broadcast_rows(t.slice(wskip, 0, 1, 0, 1), m);

  DynOut out;
  out.rate = rate;
  out.trace = t.sum(t.add(diag, skip00));
  return out;
}

CnfResult integrate(Tape& t, Variable state0, Variable z,
                    const mol::MolecularGraph& g, const BoundParams& bp,
                    double t_start, double dt, int steps) {
  if (!g.expanded) throw ValidationError("cnf requires an expanded graph");
  const Tensor& s0 = t.value(state0);
  if (s0.rank() != 2 || s0.cols() != 1 || s0.rows() != g.edge_count())
    throw ValidationError("cnf state must be an m x 1 column");

  const auto ctx = make_dyn_context(t, z, g, bp);
  Variable state = state0;
  Variable logdet = t.constant(Tensor::scalar(0.0));

  for (int k = 0; k < steps; ++k) {
    const double tk = t_start + dt * k;
    const auto s1 = dyn_eval(t, state, tk, ctx, bp);
    const auto s2 = dyn_eval(t, t.add(state, t.scale(s1.rate, dt / 2)),
                             tk + dt / 2, ctx, bp);
    const auto s3 = dyn_eval(t, t.add(state, t.scale(s2.rate, dt / 2)),
                             tk + dt / 2, ctx, bp);
    const auto s4 = dyn_eval(t, t.add(state, t.scale(s3.rate, dt)), tk + dt,
                             ctx, bp);

    const auto rate_sum = t.add(t.add(s1.rate, s4.rate),
                                t.scale(t.add(s2.rate, s3.rate), 2.0));
    state = t.add(state, t.scale(rate_sum, dt / 6.0));
    const auto tr_sum = t.add(t.add(s1.trace, s4.trace),
                              t.scale(t.add(s2.trace, s3.trace), 2.0));
    logdet = t.add(logdet, t.scale(tr_sum, -dt / 6.0));

    if (!t.value(state).all_finite())
      throw IntegrationError("cnf integration produced a non-finite state at "
                             "step " + std::to_string(k + 1));
  }
  return CnfResult{state, logdet};
}

}  // namespace

CnfResult cnf_forward_vars(Tape& t, Variable d0, Variable z,
                           const mol::MolecularGraph& g, const BoundParams& bp) {
  const int k = bp.params->arch.cnf_steps;
  return integrate(t, d0, z, g, bp, 0.0, 1.0 / k, k);
}

CnfResult cnf_inverse_vars(Tape& t, Variable d1, Variable z,
                           const mol::MolecularGraph& g, const BoundParams& bp) {
  const int k = bp.params->arch.cnf_steps;
  return integrate(t, d1, z, g, bp, 1.0, -1.0 / k, k);
}

Variable gaussian_loglik_vars(Tape& t, Variable x) {
  const Tensor& v = t.value(x);
  const double c = -0.5 * static_cast<double>(v.size()) * std::log(kTwoPi);
  return t.add_scalar(t.scale(t.sum(t.square(x)), -0.5), c);
}

// ---- plain evaluation surface ------------------------------------------

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

GaussianSpec spec_from_vars(const Tape& t, const GaussianVars& g) {
  GaussianSpec s;
  const Tensor& m = t.value(g.mean);
  const Tensor& sd = t.value(g.std);
  s.mean.assign(m.data(), m.data() + m.size());
  s.std.assign(sd.data(), sd.data() + sd.size());
  return s;
}

}  // namespace

std::vector<std::vector<double>> mpnn_embed(
    const mol::MolecularGraph& g, const mol::DistanceVector* edge_scalars,
    const ModelParameters& params, Stack stack) {
  Tape t;
  const auto bp = bind_parameters(t, params);
  std::optional<Variable> scalars;
  if (edge_scalars) {
    if (edge_scalars->size() != g.edge_count())
      throw ValidationError("edge scalar length does not match edge count");
    scalars = t.constant(column_tensor(edge_scalars->values));
  }
  const auto emb = mpnn_embed_vars(t, g, scalars, bp, stack);
  const Tensor& e = t.value(emb);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(e.rows()));
  for (std::int64_t i = 0; i < e.rows(); ++i) {
    out[static_cast<std::size_t>(i)].assign(e.data() + i * e.cols(),
                                            e.data() + (i + 1) * e.cols());
  }
  return out;
}

GaussianSpec encode(const mol::MolecularGraph& g, const mol::Conformation& R,
                    const ModelParameters& params) {
  const auto d = mol::distances_from_conformation(g, R);
  Tape t;
  const auto bp = bind_parameters(t, params);
  const auto dv = t.constant(column_tensor(d.values));
  return spec_from_vars(t, encode_vars(t, g, dv, bp));
}

GaussianSpec prior_params(const mol::MolecularGraph& g,
                          const ModelParameters& params) {
  Tape t;
  const auto bp = bind_parameters(t, params);
  return spec_from_vars(t, prior_vars(t, g, bp));
}

LatentSample reparameterize(const GaussianSpec& spec,
                            const std::vector<double>& epsilon) {
  if (spec.mean.size() != spec.std.size() ||
      spec.mean.size() != epsilon.size())
    throw ValidationError("reparameterize: length mismatch");
  LatentSample s;
  s.epsilon = epsilon;
  s.z.resize(epsilon.size());
  for (std::size_t i = 0; i < epsilon.size(); ++i)
    s.z[i] = spec.mean[i] + spec.std[i] * epsilon[i];
  return s;
}

double kl_divergence(const GaussianSpec& q, const GaussianSpec& p) {
  if (q.mean.size() != p.mean.size() || q.std.size() != p.std.size() ||
      q.mean.size() != q.std.size())
    throw ValidationError("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.mean.size(); ++i) {
    const double sq = q.std[i], sp = p.std[i];
    if (sq <= 0.0 || sp <= 0.0)
      throw ValidationError("kl_divergence: nonpositive standard deviation");
    const double dm = q.mean[i] - p.mean[i];
    kl += std::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
  }
  return kl;
}

std::pair<mol::DistanceVector, double> cnf_forward(
    const std::vector<double>& d0, const std::vector<double>& z,
    const mol::MolecularGraph& g, const ModelParameters& params) {
  Tape t;
  const auto bp = bind_parameters(t, params);
  const auto d0v = t.constant(column_tensor(d0));
  const auto zv = t.constant(row_tensor(z));
  const auto res = cnf_forward_vars(t, d0v, zv, g, bp);
  mol::DistanceVector d1;
  const Tensor& s = t.value(res.state);
  d1.values.assign(s.data(), s.data() + s.size());
  return {std::move(d1), t.scalar_value(res.logdet)};
}

std::pair<std::vector<double>, double> cnf_inverse(
    const mol::DistanceVector& d1, const std::vector<double>& z,
    const mol::MolecularGraph& g, const ModelParameters& params) {
  Tape t;
  const auto bp = bind_parameters(t, params);
  const auto d1v = t.constant(column_tensor(d1.values));
  const auto zv = t.constant(row_tensor(z));
  const auto res = cnf_inverse_vars(t, d1v, zv, g, bp);
  const auto loglik =
      t.sub(gaussian_loglik_vars(t, res.state), res.logdet);
  std::vector<double> d0;
  const Tensor& s = t.value(res.state);
  d0.assign(s.data(), s.data() + s.size());
  return {std::move(d0), t.scalar_value(loglik)};
}

}  // namespace confgen::model
