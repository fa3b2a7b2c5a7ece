#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "confgen/molgraph.hpp"

namespace confgen::eval {

struct ConformerSet {
  mol::MolecularGraph graph;
  std::vector<mol::Conformation> conformers;

  void validate() const;  // nonempty, conformers match the graph
};

struct MetricConfig {
  double delta = 0.5;  // Angstrom RMSD threshold
  bool heavy_only = true;
  int generated_multiplier = 2;

  void validate() const;
};

struct MmdConfig {
  enum class Bandwidth { MedianHeuristic, Fixed } rule = Bandwidth::MedianHeuristic;
  double sigma = 1.0;  // used when rule == Fixed

  void validate() const;
};

// RMSD between every (reference, generated) pair, computed once and shared
// by COV and MAT. matrix[r][g] = aligned_rmsd(gen[g], ref[r]).
std::vector<std::vector<double>> rmsd_matrix(const ConformerSet& generated,
                                             const ConformerSet& reference,
                                             const MetricConfig& cfg,
                                             int workers = 1);

double coverage_from_matrix(const std::vector<std::vector<double>>& matrix,
                            double delta);
double matching_from_matrix(const std::vector<std::vector<double>>& matrix);

// Fraction of reference conformers within delta of some generated conformer.
double coverage(const ConformerSet& generated, const ConformerSet& reference,
                const MetricConfig& cfg);

// Mean over reference conformers of the closest generated RMSD.
double matching(const ConformerSet& generated, const ConformerSet& reference,
                const MetricConfig& cfg);

// Biased (V-statistic) squared MMD with a Gaussian kernel. Bandwidth from
// the pooled median pairwise distance unless fixed; an all-identical pooled
// sample falls back to sigma = 1 with a warning.
double mmd(const std::vector<std::vector<double>>& samples_a,
           const std::vector<std::vector<double>>& samples_b,
           const MmdConfig& cfg);

enum class PairFilter {
  AmongCO,      // all pairs of atoms whose element is C or O
  CrossCOOnly,  // strictly one C and one O per pair
};

// Distance observations for the distribution-matching metrics: per-pair
// marginals, all 2-subsets of pairs, and the joint vector per conformer.
struct DistanceSamples {
  std::vector<std::pair<int, int>> pairs;  // atom index pairs, canonical order
  std::vector<std::vector<std::vector<double>>> marginal;  // [pair][conf] -> 1d
  std::vector<std::array<int, 2>> pair_subsets;            // indices into pairs
  std::vector<std::vector<std::vector<double>>> paired;    // [subset][conf] -> 2d
  std::vector<std::vector<double>> joint;                  // [conf] -> |pairs|-dim
};

DistanceSamples distance_samples(const ConformerSet& set, PairFilter filter);

struct MoleculeMetrics {
  std::string id;
  int n_ref = 0;
  int n_gen = 0;
  double cov = 0.0;
  double mat = 0.0;
};

// molecule_id,n_ref,n_gen,cov,mat rows plus mean/median aggregate rows.
void write_metrics_csv(std::ostream& out,
                       const std::vector<MoleculeMetrics>& rows);

struct MmdReportRow {
  std::string id;
  double single_mean = 0.0;
  double pair_mean = 0.0;
  double joint = 0.0;
};

void write_mmd_csv(std::ostream& out, const std::vector<MmdReportRow>& rows);

struct CovGridRow {
  std::string id;
  double delta = 0.0;
  double cov = 0.0;
};

void write_cov_grid_csv(std::ostream& out, const std::vector<CovGridRow>& rows);

double mean_of(const std::vector<double>& v);
double median_of(std::vector<double> v);

}  // namespace confgen::eval
