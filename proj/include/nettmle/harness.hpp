#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nettmle/config.hpp"
#include "nettmle/graph.hpp"
#include "nettmle/oracle.hpp"
#include "nettmle/table.hpp"
#include "nettmle/tmle.hpp"
#include "nettmle/variance.hpp"

namespace nettmle {

struct NetworkSpec {
  std::string family = "small_world";  // preferential_attachment | small_world | erdos_renyi | file
  Index m_attach = 5;
  double power = 0.5;
  Index k_ring = 10;
  double p_rewire = 0.1;
  double mean_degree = 10.0;  // erdos_renyi
  std::string path;           // file

  std::string describe() const;
};

/// Network of size n for the spec; `file` ignores n and the seed.
NetworkPtr make_network(const NetworkSpec& spec, Index n, std::uint64_t seed);

struct ExperimentConfig {
  std::string name = "experiment";
  std::string model_source;  // preset name or config path, for the manifest
  ModelSpec model;
  NetworkSpec network;
  std::vector<Index> sizes;
  Index replicates = 200;
  std::vector<std::string> interventions;
  std::vector<VarianceMethod> methods{VarianceMethod::Iid, VarianceMethod::Dependent};
  Index bootstrap_max_n = 1000;  // bootstrap runs only for n at or below this
  BootstrapConfig bootstrap;
  EstimatorConfig estimator;
  Index truth_replicates = 2000;
  Index conditional_truth_replicates = 200;
  std::uint64_t seed = 0;
  double level = 0.95;
  std::string truth_file;  // optional cache of marginal truths
  int workers = 1;
};

/// Sections [experiment], [network], [estimator], [bootstrap]; the model is
/// `preset = <name>` or `model = <path>` under [experiment], or inline
/// model sections. Relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment(const ConfigDocument& doc, const std::string& base_dir = ".");

/// NETTMLE_WORKERS, else 1.
int default_workers();

struct MethodOutcome {
  double variance = 0.0;
  Interval ci;
  bool covered = false;
};

struct ReplicateRecord {
  Index n = 0;
  std::string intervention;
  Index replicate = 0;
  bool ok = false;
  std::string error;
  double psi_hat = 0.0;
  double truth = 0.0;
  double epsilon = 0.0;
  double score = 0.0;
  std::vector<std::optional<MethodOutcome>> methods;  // parallel to config.methods
};

struct ExperimentResult {
  ResultTable coverage;
  ResultTable ci_length;
  ResultTable bias;
  ResultTable rescaled;
  ResultTable replicates;
  nlohmann::json manifest;
  std::vector<ReplicateRecord> records;
  Index numeric_failures = 0;
};

using ProgressFn = std::function<void(const std::string&)>;

/// One network per size; every replicate dataset is estimated under every
/// intervention. Deterministic in (config, seed) whatever the worker count.
ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress = nullptr);

/// coverage.tsv, ci_length.tsv, bias.tsv, rescaled.tsv, replicates.tsv and
/// manifest.json under `dir`, each written atomically.
void write_experiment(const ExperimentResult& result, const std::string& dir);

/// Runs fn(k) for k in [0, count) on `workers` threads.
void parallel_for(Index count, int workers, const std::function<void(Index)>& fn);

}  // namespace nettmle
