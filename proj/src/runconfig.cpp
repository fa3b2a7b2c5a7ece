#include "confgen/runconfig.hpp"

#include <fstream>

#include "confgen/errors.hpp"

namespace confgen::cfg {

const std::vector<RunConfig::KeySpec>& RunConfig::known_keys() {
  static const std::vector<KeySpec> keys = {
      {"dataset", "", "input dataset (JSON lines)"},
      {"generated", "", "generated conformer file (JSON lines)"},
      {"reference", "", "reference conformer file (JSON lines)"},
      {"distances", "", "distance target file (JSON)"},
      {"checkpoint", "", "model checkpoint path"},
      {"resume", "", "checkpoint to resume training from"},
      {"output", "", "primary output path"},
      {"out_dir", ".", "directory for training logs and checkpoints"},
      {"trajectory", "", "trajectory CSV path for the solve command"},
      {"xyz", "", "optional XYZ export path"},
      {"cov_grid", "", "optional coverage-vs-delta grid CSV path"},
      {"id", "", "molecule id selector (default: first molecule)"},

      {"hidden", "256", "MPNN hidden width"},
      {"layers", "3", "MPNN message-passing layers"},
      {"z_dim", "10", "latent dimension"},
      {"dyn_hidden", "256", "flow dynamics hidden width"},
      {"cnf_steps", "20", "RK4 steps for the flow integral"},

      {"learning_rate", "0.001", "Adam learning rate"},
      {"batch_size", "128", "training batch size"},
      {"epochs", "10", "training epochs"},
      {"lambda", "1.0", "prior term weight"},
      {"alpha", "1.0", "auxiliary term weight"},
      {"seed", "0", "global random seed"},
      {"mode", "full", "training mode: full | ablation_no_recon"},
      {"checkpoint_every", "0", "epochs between checkpoints (0 = final only)"},
      {"recon_heavy_only", "false", "restrict the training loss to heavy atoms"},

      {"inner_steps", "100", "inner-loop gradient descent steps"},
      {"inner_lr", "0.01", "inner-loop learning rate"},
      {"inner_init_scale", "1.0", "stddev of the Gaussian coordinate init"},
      {"inner_restarts", "1", "inner-loop restarts during training"},
      {"solve_restarts", "10", "restarts for standalone solving/sampling"},
      {"solve_early_stop", "1e-10", "objective early stop for standalone solving"},

      {"delta", "0.5", "coverage RMSD threshold (Angstrom)"},
      {"heavy_only", "true", "metrics over heavy atoms only"},
      {"multiplier", "2", "generated set size multiplier"},
      {"grid_min", "0.05", "coverage grid: smallest delta"},
      {"grid_max", "2.0", "coverage grid: largest delta"},
      {"grid_points", "20", "coverage grid: number of deltas"},

      {"mmd_bandwidth", "median", "MMD bandwidth: median | <sigma>"},
      {"strict_co", "false", "restrict distance pairs to C-O only"},

      {"workers", "1", "worker threads for metric computation"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& spec : known_keys()) values_[spec.key] = spec.default_value;
}

bool RunConfig::is_known(const std::string& key) const {
  return values_.count(key) > 0;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r\n");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    strip(key);
    strip(value);
    try {
      set(key, value);
    } catch (const ConfigError& err) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " +
                        err.what());
    }
  }
}

std::string RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  return static_cast<int>(get_i64(key));
}

std::int64_t RunConfig::get_i64(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: '" + v + "'");
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an unsigned integer: '" +
                      v + "'");
  }
}

double RunConfig::get_double(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: '" + v + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
}

}  // namespace confgen::cfg
