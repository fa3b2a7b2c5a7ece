// confgen: conformation-generation toolkit CLI.
//
// Subcommands: ingest, train, sample, solve, gradcheck, eval, eval-mmd,
// export-xyz. Every config key can be set in a key=value file (--config)
// and overridden by a flag of the same name. Exit codes: 0 success,
// 1 input error, 2 numerical failure. The last stdout line is a JSON
// summary.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "confgen/distgeo.hpp"
#include "confgen/errors.hpp"
#include "confgen/eval.hpp"
#include "confgen/geometry.hpp"
#include "confgen/model.hpp"
#include "confgen/molgraph.hpp"
#include "confgen/rng.hpp"
#include "confgen/runconfig.hpp"
#include "confgen/training.hpp"

namespace {

using namespace confgen;
using nlohmann::json;

struct ConfigCapture {
  std::string config_path;
  std::map<std::string, std::string> flags;
  CLI::App* cmd = nullptr;

  void attach(CLI::App* app) {
    cmd = app;
    app->add_option("--config", config_path, "key=value config file");
    for (const auto& spec : cfg::RunConfig::known_keys())
      app->add_option("--" + spec.key, flags[spec.key], spec.help);
  }

  cfg::RunConfig resolve() const {
    cfg::RunConfig rc;
    if (!config_path.empty()) rc.load_file(config_path);
    for (const auto& [key, value] : flags) {
      if (cmd->count("--" + key) > 0) rc.set(key, value);
    }
    return rc;
  }
};

std::string require_path(const cfg::RunConfig& rc, const std::string& key) {
  const std::string v = rc.get(key);
  if (v.empty()) throw ConfigError("missing required setting '" + key + "'");
  return v;
}

std::string require_input_file(const cfg::RunConfig& rc,
                               const std::string& key) {
  const std::string v = require_path(rc, key);
  if (!std::filesystem::exists(v))
    throw ParseError("input file '" + v + "' does not exist");
  return v;
}

void emit_summary(const json& j) { std::cout << j.dump() << std::endl; }

std::vector<mol::MoleculeRecord> load_expanded(const std::string& path) {
  auto mols = mol::read_dataset(path);
  for (auto& rec : mols) {
    if (!rec.graph.expanded) rec.graph = mol::expand_auxiliary_edges(rec.graph);
  }
  return mols;
}

model::ArchConfig arch_from(const cfg::RunConfig& rc) {
  model::ArchConfig a;
  a.hidden = rc.get_int("hidden");
  a.layers = rc.get_int("layers");
  a.z_dim = rc.get_int("z_dim");
  a.dyn_hidden = rc.get_int("dyn_hidden");
  a.cnf_steps = rc.get_int("cnf_steps");
  a.validate();
  return a;
}

train::TrainConfig train_config_from(const cfg::RunConfig& rc) {
  train::TrainConfig cfg;
  cfg.learning_rate = rc.get_double("learning_rate");
  cfg.batch_size = rc.get_int("batch_size");
  cfg.epochs = rc.get_int("epochs");
  cfg.lambda = rc.get_double("lambda");
  cfg.alpha = rc.get_double("alpha");
  cfg.seed = rc.get_u64("seed");
  cfg.mode = train::mode_from_string(rc.get("mode"));
  cfg.checkpoint_every = rc.get_int("checkpoint_every");
  cfg.recon_heavy_only = rc.get_bool("recon_heavy_only");
  cfg.inner.steps = rc.get_int("inner_steps");
  cfg.inner.learning_rate = rc.get_double("inner_lr");
  cfg.inner.init_scale = rc.get_double("inner_init_scale");
  cfg.inner.restarts = rc.get_int("inner_restarts");
  cfg.validate();
  return cfg;
}

dg::InnerLoopConfig solve_config_from(const cfg::RunConfig& rc) {
  dg::InnerLoopConfig inner;
  inner.steps = rc.get_int("inner_steps");
  inner.learning_rate = rc.get_double("inner_lr");
  inner.init_scale = rc.get_double("inner_init_scale");
  inner.restarts = rc.get_int("solve_restarts");
  inner.early_stop_tol = rc.get_double("solve_early_stop");
  inner.validate();
  return inner;
}

// ---- commands ------------------------------------------------------------

int cmd_ingest(const cfg::RunConfig& rc) {
  const auto input = require_input_file(rc, "dataset");
  const auto output = require_path(rc, "output");

  const auto mols = mol::parse_dataset(input);
  std::vector<mol::MoleculeRecord> expanded;
  expanded.reserve(mols.size());
  std::size_t conformers = 0;
  for (const auto& rec : mols) {
    mol::MoleculeRecord out = rec;
    out.graph = mol::expand_auxiliary_edges(rec.graph);
    std::cout << out.graph.id << ": atoms=" << out.graph.atom_count()
              << " bonds=" << rec.graph.edge_count()
              << " expanded_edges=" << out.graph.edge_count()
              << " conformers=" << out.conformers.size() << "\n";
    conformers += out.conformers.size();
    expanded.push_back(std::move(out));
  }
  mol::write_dataset(output, expanded);

  emit_summary({{"status", "ok"},
                {"command", "ingest"},
                {"molecules", expanded.size()},
                {"conformers", conformers},
                {"output", output}});
  return 0;
}

int cmd_train(const cfg::RunConfig& rc) {
  const auto dataset_path = require_input_file(rc, "dataset");
  const auto out_dir = rc.get("out_dir");
  std::filesystem::create_directories(out_dir);

  const auto mols = load_expanded(dataset_path);
  const auto cfg = train_config_from(rc);

  model::ModelParameters params;
  train::OptimizerState opt;
  int start_epoch = 0;
  const std::string resume = rc.get("resume");
  if (!resume.empty()) {
    model::CheckpointExtras extras;
    params = model::load_checkpoint(resume, &extras);
    opt = train::OptimizerState::like(params);
    if (extras.has_optimizer) {
      opt.step = extras.step;
      opt.m = extras.adam_m;
      opt.v = extras.adam_v;
      start_epoch = extras.epoch;
    }
  } else {
    params = model::ModelParameters::init(arch_from(rc),
                                          RandomStream(cfg.seed).sub("init"));
    opt = train::OptimizerState::like(params);
  }

  const std::string log_path =
      (std::filesystem::path(out_dir) / "train_log.csv").string();
  std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw ConfigError("cannot open '" + log_path + "' for writing");
  if (resume.empty()) train::write_log_header(log);

  const std::string final_ckpt =
      (std::filesystem::path(out_dir) / "checkpoint.json").string();
  auto on_checkpoint = [&](int epoch, const model::ModelParameters& p,
                           const train::OptimizerState& o) {
    model::CheckpointExtras extras;
    extras.has_optimizer = true;
    extras.step = o.step;
    extras.epoch = epoch + 1;
    extras.adam_m = o.m;
    extras.adam_v = o.v;
    const std::string path =
        (std::filesystem::path(out_dir) /
         ("checkpoint_epoch" + std::to_string(epoch + 1) + ".json"))
            .string();
    model::save_checkpoint(path, p, &extras);
    model::save_checkpoint(final_ckpt, p, &extras);
  };

  const auto result =
      train::train(mols, cfg, params, opt, start_epoch, &log, on_checkpoint);

  emit_summary({{"status", "ok"},
                {"command", "train"},
                {"epochs", result.epochs_run},
                {"steps", result.steps_run},
                {"diverged_samples", result.total_diverged},
                {"final_recon", result.last_loss.recon},
                {"final_prior", result.last_loss.prior},
                {"final_aux", result.last_loss.aux},
                {"final_total", result.last_loss.total},
                {"checkpoint", final_ckpt},
                {"log", log_path}});
  return 0;
}

int cmd_sample(const cfg::RunConfig& rc) {
  const auto ckpt = require_input_file(rc, "checkpoint");
  const auto dataset_path = require_input_file(rc, "dataset");
  const auto output = require_path(rc, "output");
  const int multiplier = rc.get_int("multiplier");
  const auto seed = rc.get_u64("seed");
  const auto inner = solve_config_from(rc);

  const auto params = model::load_checkpoint(ckpt);
  auto mols = mol::read_dataset(dataset_path);

  RandomStream root(seed);
  std::vector<mol::MoleculeRecord> out;
  std::size_t total = 0;
  for (std::size_t mi = 0; mi < mols.size(); ++mi) {
    const auto& rec = mols[mi];
    mol::MolecularGraph expanded =
        rec.graph.expanded ? rec.graph : mol::expand_auxiliary_edges(rec.graph);
    const std::size_t count =
        std::max<std::size_t>(1, rec.conformers.size() *
                                     static_cast<std::size_t>(multiplier));
    mol::MoleculeRecord gen;
    gen.graph = rec.graph;
    gen.conformers.reserve(count);
    RandomStream mol_stream = root.sub("molecule", mi);
    for (std::size_t k = 0; k < count; ++k) {
      gen.conformers.push_back(train::sample_conformation(
          expanded, params, inner, mol_stream.sub("sample", k)));
    }
    total += count;
    out.push_back(std::move(gen));
  }
  mol::write_dataset(output, out);

  const std::string xyz = rc.get("xyz");
  if (!xyz.empty()) {
    std::ofstream xs(xyz);
    if (!xs) throw ConfigError("cannot open '" + xyz + "' for writing");
    for (const auto& rec : out)
      for (std::size_t k = 0; k < rec.conformers.size(); ++k)
        mol::write_xyz(xs, rec.graph, rec.conformers[k],
                       rec.graph.id + " sample " + std::to_string(k));
  }

  emit_summary({{"status", "ok"},
                {"command", "sample"},
                {"molecules", out.size()},
                {"conformers", total},
                {"multiplier", multiplier},
                {"output", output}});
  return 0;
}

int cmd_solve(const cfg::RunConfig& rc) {
  const auto dataset_path = require_input_file(rc, "dataset");
  const auto dist_path = require_input_file(rc, "distances");
  const auto output = require_path(rc, "output");
  const auto seed = rc.get_u64("seed");

  auto mols = load_expanded(dataset_path);
  if (mols.empty()) throw ValidationError("dataset contains no molecules");
  const std::string want_id = rc.get("id");
  const mol::MoleculeRecord* rec = &mols.front();
  if (!want_id.empty()) {
    rec = nullptr;
    for (const auto& m : mols)
      if (m.graph.id == want_id) rec = &m;
    if (!rec) throw ValidationError("molecule id '" + want_id + "' not found");
  }
  const auto& g = rec->graph;

  std::ifstream din(dist_path);
  json dj;
  try {
    din >> dj;
  } catch (const json::parse_error& e) {
    throw ParseError(dist_path + ": " + e.what());
  }
  mol::DistanceVector d;
  if (dj.is_array()) {
    d.values = dj.get<std::vector<double>>();
  } else if (dj.is_object() && dj.contains("distances")) {
    d.values = dj.at("distances").get<std::vector<double>>();
  } else {
    throw ParseError(dist_path +
                     ": expected a JSON array or {\"distances\": [...]}");
  }
  if (d.size() != g.edge_count())
    throw ValidationError("distance file has " + std::to_string(d.size()) +
                          " entries but the expanded graph has " +
                          std::to_string(g.edge_count()) + " edges");

  dg::InnerLoopConfig inner = solve_config_from(rc);
  inner.store_trajectory = false;
  const auto traj =
      dg::solve_distance_geometry(d, g, inner, RandomStream(seed).sub("solve"));

  {
    std::ofstream out(output);
    if (!out) throw ConfigError("cannot open '" + output + "' for writing");
    mol::write_xyz(out, g, traj.final_state(),
                   g.id + " solved, objective " +
                       std::to_string(traj.final_objective()));
  }
  const std::string traj_path = rc.get("trajectory");
  if (!traj_path.empty()) {
    std::ofstream out(traj_path);
    if (!out) throw ConfigError("cannot open '" + traj_path + "' for writing");
    out << "step,objective\n";
    for (std::size_t i = 0; i < traj.objective_values.size(); ++i)
      out << i << ',' << traj.objective_values[i] << '\n';
  }

  emit_summary({{"status", "ok"},
                {"command", "solve"},
                {"molecule", g.id},
                {"edges", g.edge_count()},
                {"steps", traj.objective_values.size() - 1},
                {"objective", traj.final_objective()},
                {"objective_per_edge",
                 traj.final_objective() / g.edge_count()},
                {"output", output}});
  return 0;
}

struct GradcheckOptions {
  int instances = 20;
  int atoms_min = 4;
  int atoms_max = 8;
  std::vector<int> step_grid{10, 50};
  double eta = 0.01;
  double h = 1e-4;
  double tol = 1e-3;
  bool inject_vjp_error = false;
};

int cmd_gradcheck(const cfg::RunConfig& rc, const GradcheckOptions& opt) {
  RandomStream rng(rc.get_u64("seed"));

  double worst = 0.0;
  bool pass = true;
  json per_instance = json::array();

  for (int inst = 0; inst < opt.instances; ++inst) {
    RandomStream irng = rng.sub("instance", static_cast<std::uint64_t>(inst));
    const int n = opt.atoms_min + static_cast<int>(irng.uniform_int(
                                      0, opt.atoms_max - opt.atoms_min));
    const int steps = opt.step_grid[static_cast<std::size_t>(inst) %
                                    opt.step_grid.size()];

    // Random connected molecule with self-consistent, perturbed distances.
    mol::MolecularGraph base;
    base.id = "gc" + std::to_string(inst);
    for (int i = 0; i < n; ++i)
      base.atoms.push_back({"C", mol::Element::C, true});
    for (int i = 1; i < n; ++i)
      base.edges.push_back({static_cast<int>(irng.uniform_int(0, i - 1)), i,
                            mol::BondType::Single});
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v) {
        bool present = false;
        for (const auto& e : base.edges)
          if ((e.u == u && e.v == v) || (e.u == v && e.v == u)) present = true;
        if (!present && irng.uniform01() < 0.25)
          base.edges.push_back({u, v, mol::BondType::Single});
      }
    base.sort_edges();
    const auto g = mol::expand_auxiliary_edges(base);

    mol::Conformation src;
    src.xyz.resize(static_cast<std::size_t>(n));
    for (auto& row : src.xyz)
      for (auto& c : row) c = 1.5 * irng.normal();
    auto d = mol::distances_from_conformation(g, src);
    for (auto& v : d.values) v += 0.15 * irng.normal();

    dg::InnerLoopConfig icfg;
    icfg.steps = steps;
    icfg.learning_rate = opt.eta;
    icfg.store_trajectory = true;
    const RandomStream solver_seed(irng.next_u64());

    const auto traj = dg::solve_distance_geometry(d, g, icfg, solver_seed);
    mol::Conformation ref;
    ref.xyz.resize(static_cast<std::size_t>(n));
    for (auto& row : ref.xyz)
      for (auto& c : row) c = 1.5 * irng.normal();
    const auto frozen =
        geom::detail::kabsch_core(traj.final_state(), ref, mol::all_mask(n))
            .aligned;

    const auto& RT = traj.final_state();
    std::vector<Vec3> outer_seed(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < outer_seed.size(); ++i)
      for (int j = 0; j < 3; ++j)
        outer_seed[i][static_cast<std::size_t>(j)] =
            2.0 * (RT.xyz[i][static_cast<std::size_t>(j)] -
                   frozen.xyz[i][static_cast<std::size_t>(j)]);

    auto hg = dg::hypergradient(traj, d, g, icfg, outer_seed);
    if (opt.inject_vjp_error)
      for (auto& v : hg) v *= 1.02;

    auto loss_at = [&](const std::vector<double>& dv) {
      mol::DistanceVector probe;
      probe.values = dv;
      dg::InnerLoopConfig c = icfg;
      c.store_trajectory = false;
      const auto t = dg::solve_distance_geometry(probe, g, c, solver_seed);
      double s = 0.0;
      for (std::size_t i = 0; i < t.final_state().xyz.size(); ++i)
        for (int j = 0; j < 3; ++j) {
          const double diff =
              t.final_state().xyz[i][static_cast<std::size_t>(j)] -
              frozen.xyz[i][static_cast<std::size_t>(j)];
          s += diff * diff;
        }
      return s;
    };

    double max_abs = 0.0, max_err = 0.0;
    std::vector<double> dv = d.values;
    for (std::size_t e = 0; e < dv.size(); ++e) {
      const double keep = dv[e];
      dv[e] = keep + opt.h;
      const double fp = loss_at(dv);
      dv[e] = keep - opt.h;
      const double fm = loss_at(dv);
      dv[e] = keep;
      const double fd = (fp - fm) / (2.0 * opt.h);
      max_abs = std::max(max_abs, std::abs(fd));
      max_err = std::max(max_err, std::abs(hg[e] - fd));
    }
    const double rel = max_err / std::max(max_abs, 1e-300);
    worst = std::max(worst, rel);
    const bool ok = rel < opt.tol;
    pass = pass && ok;
    std::cout << "instance " << inst << ": atoms=" << n << " steps=" << steps
              << " edges=" << g.edge_count() << " max_rel_err=" << rel << " "
              << (ok ? "PASS" : "FAIL") << "\n";
    per_instance.push_back({{"atoms", n}, {"steps", steps}, {"rel", rel}});
  }

  emit_summary({{"status", "ok"},
                {"command", "gradcheck"},
                {"pass", pass},
                {"worst_rel_error", worst},
                {"tolerance", opt.tol},
                {"instances", per_instance}});
  if (!pass) throw NumericError("gradcheck failed: worst relative error " +
                                std::to_string(worst));
  return 0;
}

// Pair generated/reference records by molecule id.
std::vector<std::pair<const mol::MoleculeRecord*, const mol::MoleculeRecord*>>
pair_by_id(const std::vector<mol::MoleculeRecord>& gen,
           const std::vector<mol::MoleculeRecord>& ref) {
  std::map<std::string, const mol::MoleculeRecord*> ref_by_id;
  for (const auto& r : ref) ref_by_id[r.graph.id] = &r;
  std::vector<std::pair<const mol::MoleculeRecord*, const mol::MoleculeRecord*>>
      pairs;
  for (const auto& g : gen) {
    auto it = ref_by_id.find(g.graph.id);
    if (it == ref_by_id.end())
      throw ValidationError("generated molecule '" + g.graph.id +
                            "' has no reference counterpart");
    if (g.graph.atom_count() != it->second->graph.atom_count())
      throw ValidationError("molecule '" + g.graph.id +
                            "' has mismatched atom counts across files");
    pairs.emplace_back(&g, it->second);
  }
  return pairs;
}

int cmd_eval(const cfg::RunConfig& rc) {
  const auto gen_path = require_input_file(rc, "generated");
  const auto ref_path = require_input_file(rc, "reference");
  const auto output = require_path(rc, "output");

  eval::MetricConfig mcfg;
  mcfg.delta = rc.get_double("delta");
  mcfg.heavy_only = rc.get_bool("heavy_only");
  mcfg.generated_multiplier = rc.get_int("multiplier");
  mcfg.validate();
  const int workers = rc.get_int("workers");

  const auto gen = mol::read_dataset(gen_path);
  const auto ref = mol::read_dataset(ref_path);
  const auto pairs = pair_by_id(gen, ref);

  std::vector<eval::MoleculeMetrics> rows;
  std::vector<eval::CovGridRow> grid_rows;
  const std::string grid_path = rc.get("cov_grid");
  const double grid_min = rc.get_double("grid_min");
  const double grid_max = rc.get_double("grid_max");
  const int grid_points = rc.get_int("grid_points");

  for (const auto& [g, r] : pairs) {
    eval::ConformerSet sg{g->graph, g->conformers};
    eval::ConformerSet sr{r->graph, r->conformers};
    const auto matrix = eval::rmsd_matrix(sg, sr, mcfg, workers);
    eval::MoleculeMetrics row;
    row.id = g->graph.id;
    row.n_ref = static_cast<int>(r->conformers.size());
    row.n_gen = static_cast<int>(g->conformers.size());
    row.cov = eval::coverage_from_matrix(matrix, mcfg.delta);
    row.mat = eval::matching_from_matrix(matrix);
    rows.push_back(row);

    if (!grid_path.empty()) {
      for (int k = 0; k < grid_points; ++k) {
        const double delta =
            grid_min +
            (grid_max - grid_min) * k / std::max(1, grid_points - 1);
        grid_rows.push_back(
            {row.id, delta, eval::coverage_from_matrix(matrix, delta)});
      }
    }
  }
  if (rows.empty()) throw ValidationError("no molecules to evaluate");

  {
    std::ofstream out(output);
    if (!out) throw ConfigError("cannot open '" + output + "' for writing");
    eval::write_metrics_csv(out, rows);
  }
  if (!grid_path.empty()) {
    std::ofstream out(grid_path);
    if (!out) throw ConfigError("cannot open '" + grid_path + "' for writing");
    eval::write_cov_grid_csv(out, grid_rows);
  }

  std::vector<double> covs, mats;
  for (const auto& r : rows) {
    covs.push_back(r.cov);
    mats.push_back(r.mat);
  }
  emit_summary({{"status", "ok"},
                {"command", "eval"},
                {"molecules", rows.size()},
                {"delta", mcfg.delta},
                {"cov_mean", eval::mean_of(covs)},
                {"cov_median", eval::median_of(covs)},
                {"mat_mean", eval::mean_of(mats)},
                {"mat_median", eval::median_of(mats)},
                {"output", output}});
  return 0;
}

int cmd_eval_mmd(const cfg::RunConfig& rc) {
  const auto gen_path = require_input_file(rc, "generated");
  const auto ref_path = require_input_file(rc, "reference");
  const auto output = require_path(rc, "output");

  eval::MmdConfig mmd_cfg;
  const std::string bw = rc.get("mmd_bandwidth");
  if (bw != "median") {
    mmd_cfg.rule = eval::MmdConfig::Bandwidth::Fixed;
    try {
      mmd_cfg.sigma = std::stod(bw);
    } catch (const std::exception&) {
      throw ConfigError("mmd_bandwidth must be 'median' or a number");
    }
  }
  mmd_cfg.validate();
  const auto filter = rc.get_bool("strict_co") ? eval::PairFilter::CrossCOOnly
                                               : eval::PairFilter::AmongCO;

  const auto gen = mol::read_dataset(gen_path);
  const auto ref = mol::read_dataset(ref_path);
  const auto pairs = pair_by_id(gen, ref);

  std::vector<eval::MmdReportRow> rows;
  for (const auto& [g, r] : pairs) {
    eval::ConformerSet sg{g->graph, g->conformers};
    eval::ConformerSet sr{r->graph, r->conformers};
    const auto ds_gen = eval::distance_samples(sg, filter);
    const auto ds_ref = eval::distance_samples(sr, filter);
    if (ds_gen.pairs.empty()) continue;  // warned inside

    eval::MmdReportRow row;
    row.id = g->graph.id;
    std::vector<double> singles;
    for (std::size_t p = 0; p < ds_gen.marginal.size(); ++p)
      singles.push_back(
          eval::mmd(ds_gen.marginal[p], ds_ref.marginal[p], mmd_cfg));
    row.single_mean = eval::mean_of(singles);
    if (!ds_gen.pair_subsets.empty()) {
      std::vector<double> pair_vals;
      for (std::size_t s = 0; s < ds_gen.paired.size(); ++s)
        pair_vals.push_back(
            eval::mmd(ds_gen.paired[s], ds_ref.paired[s], mmd_cfg));
      row.pair_mean = eval::mean_of(pair_vals);
    }
    row.joint = eval::mmd(ds_gen.joint, ds_ref.joint, mmd_cfg);
    rows.push_back(row);
  }

  std::ofstream out(output);
  if (!out) throw ConfigError("cannot open '" + output + "' for writing");
  eval::write_mmd_csv(out, rows);

  emit_summary({{"status", "ok"},
                {"command", "eval-mmd"},
                {"molecules", rows.size()},
                {"output", output}});
  return 0;
}

int cmd_export_xyz(const cfg::RunConfig& rc) {
  const auto dataset_path = require_input_file(rc, "dataset");
  const auto output = require_path(rc, "output");

  const auto mols = mol::read_dataset(dataset_path);
  std::ofstream out(output);
  if (!out) throw ConfigError("cannot open '" + output + "' for writing");
  std::size_t frames = 0;
  for (const auto& rec : mols) {
    for (std::size_t k = 0; k < rec.conformers.size(); ++k) {
      mol::write_xyz(out, rec.graph, rec.conformers[k],
                     rec.graph.id + " conformer " + std::to_string(k));
      ++frames;
    }
  }
  emit_summary({{"status", "ok"},
                {"command", "export-xyz"},
                {"frames", frames},
                {"output", output}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confgen: end-to-end molecular conformation generation"};
  app.require_subcommand(1);

  struct Cmd {
    ConfigCapture capture;
    CLI::App* sub = nullptr;
  };
  std::map<std::string, Cmd> cmds;
  for (const char* name : {"ingest", "train", "sample", "solve", "gradcheck",
                           "eval", "eval-mmd", "export-xyz"}) {
    auto& c = cmds[name];
    c.sub = app.add_subcommand(name);
    c.capture.attach(c.sub);
  }
  cmds["ingest"].sub->description("expand auxiliary edges in a dataset");
  cmds["train"].sub->description("train the generator");
  cmds["sample"].sub->description("sample conformers from a checkpoint");
  cmds["solve"].sub->description("solve distance geometry for given targets");
  cmds["gradcheck"].sub->description(
      "check the unrolled hypergradient against finite differences");
  cmds["eval"].sub->description("coverage and matching metrics");
  cmds["eval-mmd"].sub->description("distance-distribution MMD metrics");
  cmds["export-xyz"].sub->description("export conformers as multi-frame XYZ");

  GradcheckOptions gopt;
  {
    auto* gc = cmds["gradcheck"].sub;
    gc->add_option("--instances", gopt.instances, "number of random instances");
    gc->add_option("--atoms-min", gopt.atoms_min, "smallest molecule size");
    gc->add_option("--atoms-max", gopt.atoms_max, "largest molecule size");
    gc->add_option("--steps-grid", gopt.step_grid,
                   "inner step counts to alternate through");
    gc->add_option("--eta", gopt.eta, "inner learning rate");
    gc->add_option("--fd-step", gopt.h, "finite-difference step");
    gc->add_option("--tol", gopt.tol, "relative error tolerance");
    gc->add_flag("--inject-vjp-error", gopt.inject_vjp_error,
                 "deliberately corrupt the hypergradient (negative control)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  std::string active;
  for (const auto& [name, c] : cmds)
    if (c.sub->parsed()) active = name;

  try {
    const cfg::RunConfig rc = cmds[active].capture.resolve();
    if (active == "ingest") return cmd_ingest(rc);
    if (active == "train") return cmd_train(rc);
    if (active == "sample") return cmd_sample(rc);
    if (active == "solve") return cmd_solve(rc);
    if (active == "gradcheck") return cmd_gradcheck(rc, gopt);
    if (active == "eval") return cmd_eval(rc);
    if (active == "eval-mmd") return cmd_eval_mmd(rc);
    if (active == "export-xyz") return cmd_export_xyz(rc);
    std::cerr << "error: no command selected\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    emit_summary({{"status", "error"}, {"kind", "input"}, {"message", e.what()}});
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    emit_summary({{"status", "error"}, {"kind", "input"}, {"message", e.what()}});
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    emit_summary({{"status", "error"}, {"kind", "config"}, {"message", e.what()}});
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    emit_summary(
        {{"status", "error"}, {"kind", "numeric"}, {"message", e.what()}});
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    emit_summary(
        {{"status", "error"}, {"kind", "internal"}, {"message", e.what()}});
    return 2;
  }
}
