#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nettmle/config.hpp"
#include "nettmle/graph.hpp"
#include "nettmle/harness.hpp"
#include "nettmle/oracle.hpp"
#include "nettmle/sem.hpp"
#include "nettmle/table.hpp"
#include "nettmle/tmle.hpp"
#include "nettmle/variance.hpp"

using namespace nettmle;

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericError = 3;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParameter:
    case ErrorKind::Specification:
    case ErrorKind::Io:
    case ErrorKind::EmptyInput:
    case ErrorKind::EmptySubnetwork:
    case ErrorKind::MissingModel:
    case ErrorKind::NotIdentified:
    case ErrorKind::TooLarge: return kConfigError;
    default: return kNumericError;
  }
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
}

std::string family_name(const std::string& model) {
  if (model == "pa" || model == "preferential_attachment") return "preferential_attachment";
  if (model == "smallworld" || model == "small_world" || model == "sw") return "small_world";
  if (model == "er" || model == "erdos_renyi") return "erdos_renyi";
  throw Error(ErrorKind::Specification, "unknown network model '" + model + "'");
}

ModelSpec load_model(const std::string& preset, const std::string& config) {
  if (!preset.empty() && !config.empty()) throw Error(ErrorKind::Specification, "--preset and --config are exclusive");
  if (!config.empty()) return parse_model(ConfigDocument::parse_file(config));
  const Preset p = preset_by_name(preset.empty() ? "transmission" : preset);
  return {p.sem, p.summaries};
}

struct Options {
  // shared
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::string config;
  std::string network;
  std::string intervention = "g1";
  // gen-network
  std::string model = "small_world";
  Index n = 0;
  Index k = 10;
  double p = 0.1;
  Index m = 5;
  double power = 0.5;
  double mean_degree = 10.0;
  std::optional<Index> hub_threshold;
  // estimate
  std::string data;
  std::string variance = "iid,dependent";
  std::vector<double> y_bounds;
  std::string hbar = "pooled-empirical";
  std::string estimand = "marginal";
  Index draws = 100;
  Index hbar_draws = 100;
  Index centering_draws = 50;
  Index bootstrap_replicates = 1000;
  Index bootstrap_draws = 20;
  double level = 0.95;
  std::optional<double> weight_cap;
  bool positivity_override = false;
  // oracle
  std::string method = "auto";
  Index replicates = 0;
  // experiment
  std::vector<Index> sizes;
  bool full_scale = false;
};

std::uint64_t require_seed(const Options& o, const std::string& command) {
  if (!o.seed) throw Error(ErrorKind::Specification, command + " is stochastic and needs --seed");
  return *o.seed;
}

int gen_network(const Options& o) {
  if (o.n < 1) throw Error(ErrorKind::InvalidParameter, "--n must be positive");
  NetworkSpec spec;
  spec.family = family_name(o.model);
  spec.k_ring = o.k;
  spec.p_rewire = o.p;
  spec.m_attach = o.m;
  spec.power = o.power;
  spec.mean_degree = o.mean_degree;
  Network net = *make_network(spec, o.n, require_seed(o, "gen-network"));
  const auto stein = stein_rate_diagnostic(net);
  std::cerr << "nodes " << net.size() << ", edges " << net.edge_count() << ", max degree " << stein.k_max
            << ", K_max^2/n " << stein.ratio << (stein.warning ? " (hub warning)" : "") << "\n";
  if (o.hub_threshold) {
    const HubConditioning h = condition_on_hubs(net, *o.hub_threshold);
    std::cerr << "conditioned on " << (net.size() - h.sub.size()) << " hubs\n";
    net = h.sub;
  }
  std::ostringstream text;
  write_edge_list(text, net);
  emit(o.out, text.str());
  return 0;
}

int simulate_cmd(const Options& o) {
  if (o.network.empty()) throw Error(ErrorKind::Specification, "simulate needs --network");
  const ModelSpec model = load_model(o.preset, o.config);
  const LabeledNetwork ln = read_edge_list_file(o.network);
  const Dataset data =
      simulate(std::make_shared<const Network>(ln.network), model.sem, model.summaries, require_seed(o, "simulate"));
  std::ostringstream text;
  write_dataset(text, data, &ln.labels);
  emit(o.out, text.str());
  return 0;
}

int estimate_cmd(const Options& o) {
  if (o.network.empty() || o.data.empty()) throw Error(ErrorKind::Specification, "estimate needs --data and --network");
  const std::uint64_t seed = require_seed(o, "estimate");
  const ModelSpec model = load_model(o.preset, o.config);
  const LabeledNetwork ln = read_edge_list_file(o.network);
  RawData raw = align_to_labels(read_dataset_file(o.data), ln.labels);
  if (!o.y_bounds.empty()) {
    if (o.y_bounds.size() != 2) throw Error(ErrorKind::Specification, "--y-bounds takes lower,upper");
    raw.Y = rescale_outcome(raw.Y, o.y_bounds[0], o.y_bounds[1]);
  }
  const Dataset data =
      make_dataset(std::make_shared<const Network>(ln.network), raw.C, raw.X, raw.Y, model.summaries);

  EstimatorConfig ec;
  ec.hbar = parse_hbar_method(o.hbar);
  ec.estimand = parse_estimand(o.estimand);
  ec.draws = o.draws;
  ec.hbar_draws = o.hbar_draws;
  ec.weight_cap = o.weight_cap;
  ec.positivity_override = o.positivity_override;
  ec.centering_draws = o.centering_draws;
  const Intervention iv = parse_intervention(o.intervention);
  const TmleResult fit = tmle_estimate(data, iv, ec, derive_seed(seed, Stream::Estimate, 0));

  nlohmann::json j = fit;
  if (!o.y_bounds.empty()) {
    const double scale = o.y_bounds[1] - o.y_bounds[0];
    j["psi_original_scale"] = o.y_bounds[0] + scale * fit.psi;
  }
  nlohmann::json reports = nlohmann::json::array();
  const DependencyStructure dep = dependency_neighborhoods(ln.network);
  for (VarianceMethod m : parse_variance_methods(o.variance)) {
    switch (m) {
      case VarianceMethod::Iid: reports.push_back(var_iid(fit.ic(), fit.psi, o.level)); break;
      case VarianceMethod::Dependent: reports.push_back(var_dependent(fit.ic(), dep, fit.psi, o.level)); break;
      case VarianceMethod::Bootstrap: {
        BootstrapConfig bc;
        bc.replicates = o.bootstrap_replicates;
        bc.draws = o.bootstrap_draws;
        bc.workers = default_workers();
        reports.push_back(var_bootstrap(data, fit, iv, bc, derive_seed(seed, Stream::Bootstrap, 0), o.level));
        break;
      }
    }
  }
  j["variance"] = reports;
  j["seed"] = seed;
  emit(o.out, j.dump(2) + "\n");
  std::cerr << "psi " << fit.psi << "\n";
  return 0;
}

int oracle_cmd(const Options& o) {
  if (o.network.empty()) throw Error(ErrorKind::Specification, "oracle needs --network");
  const ModelSpec model = load_model(o.preset, o.config);
  const LabeledNetwork ln = read_edge_list_file(o.network);
  const Intervention iv = parse_intervention(o.intervention);
  std::string method = o.method;
  if (method == "auto") {
    bool small = !model.sem.latent;
    if (small) {
      try {
        small = enumeration_size(ln.network, model.sem, iv) <= kEnumerationCap;
      } catch (const Error&) {
        small = false;
      }
    }
    method = small ? "enumerate" : "monte-carlo";
  }
  nlohmann::json j{{"intervention", o.intervention}, {"method", method}, {"n", ln.network.size()}};
  if (method == "enumerate") {
    j["psi"] = psi_exact_enumeration(ln.network, model.sem, model.summaries, iv);
    j["mc_se"] = 0.0;
  } else if (method == "monte-carlo") {
    const std::uint64_t seed = require_seed(o, "oracle --method monte-carlo");
    const Index R = o.replicates > 0 ? o.replicates : 10000;
    const TruthEstimate t =
        psi_monte_carlo_truth(ln.network, model.sem, model.summaries, iv, R, seed, default_workers());
    j["psi"] = t.psi;
    j["mc_se"] = t.mc_se;
    j["replicates"] = t.replicates;
    j["seed"] = seed;
  } else {
    throw Error(ErrorKind::Specification, "--method must be auto, enumerate or monte-carlo");
  }
  emit(o.out, j.dump(2) + "\n");
  return 0;
}

int experiment_cmd(const Options& o, const std::vector<std::string>& overrides) {
  if (o.config.empty()) throw Error(ErrorKind::Specification, "experiment needs --config");
  if (o.out.empty()) throw Error(ErrorKind::Specification, "experiment needs --out <directory>");
  ConfigDocument doc = ConfigDocument::parse_file(o.config);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    const auto dot = ov.rfind('.', eq);
    if (eq == std::string::npos || dot == std::string::npos)
      throw Error(ErrorKind::Specification, "--set expects section.key=value, got '" + ov + "'");
    doc.set(ov.substr(0, dot), ov.substr(dot + 1, eq - dot - 1), ov.substr(eq + 1));
  }
  if (o.seed) doc.set("experiment", "seed", std::to_string(*o.seed));
  if (o.full_scale) doc.set("experiment", "replicates", "1000");
  if (o.replicates > 0) doc.set("experiment", "replicates", std::to_string(o.replicates));
  const std::string base = std::filesystem::path(o.config).parent_path().string();
  const ExperimentConfig config = parse_experiment(doc, base.empty() ? "." : base);
  const ExperimentResult result = run_experiment(config, [](const std::string& s) { std::cerr << s << "\n"; });
  write_experiment(result, o.out);
  if (result.numeric_failures > 0) {
    std::cerr << result.numeric_failures << " replicate estimates failed numerically; see replicates.tsv\n";
    return kNumericError;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network TMLE: simulation, estimation, variance and Monte Carlo experiments"};
  app.require_subcommand(1);
  Options o;
  std::vector<std::string> overrides;

  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Master seed"); };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--preset", o.preset, "Model preset: transmission, latent or randomized");
    sub->add_option("--config", o.config, "Model config file");
  };

  auto* gen = app.add_subcommand("gen-network", "Generate a network edge list");
  gen->add_option("--model", o.model, "pa, smallworld or er")->default_val("smallworld");
  gen->add_option("--n", o.n, "Number of nodes")->required();
  gen->add_option("--k", o.k, "Small-world ring degree")->default_val(10);
  gen->add_option("--p", o.p, "Small-world rewiring probability")->default_val(0.1);
  gen->add_option("--m", o.m, "Preferential attachment edges per node")->default_val(5);
  gen->add_option("--power", o.power, "Preferential attachment power")->default_val(0.5);
  gen->add_option("--mean-degree", o.mean_degree, "Erdos-Renyi mean degree")->default_val(10.0);
  gen->add_option("--hub-threshold", o.hub_threshold, "Drop nodes with degree above this");
  gen->add_option("--out", o.out, "Edge-list file (stdout if omitted)");
  add_seed(gen);

  auto* sim = app.add_subcommand("simulate", "Simulate a dataset on a network");
  sim->add_option("--network", o.network, "Edge-list file")->required();
  sim->add_option("--out", o.out, "Dataset CSV (stdout if omitted)");
  add_model(sim);
  add_seed(sim);

  auto* est = app.add_subcommand("estimate", "TMLE of the mean counterfactual outcome");
  est->add_option("--data", o.data, "Dataset CSV: id,<covariates>,X,Y")->required();
  est->add_option("--network", o.network, "Edge-list file")->required();
  est->add_option("--intervention", o.intervention, "Intervention name or expression")->default_val("g1");
  est->add_option("--variance", o.variance, "iid, dependent, bootstrap, a comma list, or all")
      ->default_val("iid,dependent");
  est->add_option("--y-bounds", o.y_bounds, "Outcome bounds lower,upper for rescaling")->delimiter(',');
  est->add_option("--hbar", o.hbar, "pooled-empirical or pooled-model")->default_val("pooled-empirical");
  est->add_option("--estimand", o.estimand, "marginal or conditional")->default_val("marginal");
  est->add_option("--draws", o.draws, "Counterfactual draws for random interventions")->default_val(100);
  est->add_option("--hbar-draws", o.hbar_draws, "Draws for the pooled-model density")->default_val(100);
  est->add_option("--centering-draws", o.centering_draws, "Covariate resamples for per-node centering (0: center at psi)")
      ->default_val(50);
  est->add_option("--bootstrap-replicates", o.bootstrap_replicates)->default_val(1000);
  est->add_option("--bootstrap-draws", o.bootstrap_draws)->default_val(20);
  est->add_option("--level", o.level, "Confidence level")->default_val(0.95);
  est->add_option("--weight-cap", o.weight_cap, "Truncate clever weights at this value");
  est->add_flag("--positivity-override", o.positivity_override, "Estimate despite a positivity failure");
  est->add_option("--out", o.out, "Result JSON (stdout if omitted)");
  add_model(est);
  add_seed(est);

  auto* ora = app.add_subcommand("oracle", "True mean counterfactual outcome under a known model");
  ora->add_option("--network", o.network, "Edge-list file")->required();
  ora->add_option("--intervention", o.intervention)->default_val("g1");
  ora->add_option("--method", o.method, "auto, enumerate or monte-carlo")->default_val("auto");
  ora->add_option("--replicates", o.replicates, "Monte Carlo replicates (default 10000)");
  ora->add_option("--out", o.out, "Result JSON (stdout if omitted)");
  add_model(ora);
  add_seed(ora);

  auto* exp = app.add_subcommand("experiment", "Run a Monte Carlo experiment");
  exp->add_option("--config", o.config, "Experiment config file")->required();
  exp->add_option("--out", o.out, "Output directory")->required();
  exp->add_option("--replicates", o.replicates, "Override the replicate count");
  exp->add_flag("--full-scale", o.full_scale, "Use 1000 replicates");
  exp->add_option("--set", overrides, "Config override section.key=value (repeatable)");
  add_seed(exp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*gen) return gen_network(o);
    if (*sim) return simulate_cmd(o);
    if (*est) return estimate_cmd(o);
    if (*ora) return oracle_cmd(o);
    if (*exp) return experiment_cmd(o, overrides);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return 0;
}
