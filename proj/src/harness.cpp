#include "nettmle/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "nettmle/stats.hpp"

namespace nettmle {

namespace {

constexpr const char* kVersion = "1.0.0";

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base_dir) / path).string();
}

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), '\t', ' ');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

std::string NetworkSpec::describe() const {
  std::ostringstream out;
  out << family;
  if (family == "preferential_attachment") out << ":m=" << m_attach << ":power=" << power;
  else if (family == "small_world") out << ":k=" << k_ring << ":p=" << p_rewire;
  else if (family == "erdos_renyi") out << ":mean_degree=" << mean_degree;
  else if (family == "file") out << ":" << path;
  return out.str();
}

NetworkPtr make_network(const NetworkSpec& spec, Index n, std::uint64_t seed) {
  if (spec.family == "preferential_attachment")
    return std::make_shared<const Network>(gen_preferential_attachment(n, spec.m_attach, spec.power, seed));
  if (spec.family == "small_world")
    return std::make_shared<const Network>(gen_small_world(n, spec.k_ring, spec.p_rewire, seed));
  if (spec.family == "erdos_renyi") {
    const auto m = static_cast<Index>(std::llround(spec.mean_degree * static_cast<double>(n) / 2.0));
    return std::make_shared<const Network>(gen_erdos_renyi(n, m, seed));
  }
  if (spec.family == "file") return std::make_shared<const Network>(read_edge_list_file(spec.path).network);
  throw Error(ErrorKind::Specification, "unknown network family '" + spec.family + "'");
}

int default_workers() {
  if (const char* env = std::getenv("NETTMLE_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w >= 1) return w;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::Specification, std::string("NETTMLE_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

void parallel_for(Index count, int workers, const std::function<void(Index)>& fn) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<Index>(count, 1))));
  if (workers == 1) {
    for (Index k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      try {
        for (Index k = t; k < count; k += workers) fn(k);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

ExperimentConfig parse_experiment(const ConfigDocument& doc, const std::string& base_dir) {
  doc.require_known("experiment", {"name", "preset", "model", "sizes", "replicates", "interventions", "variance",
                                   "seed", "level", "truth_replicates", "conditional_truth_replicates",
                                   "truth_file", "bootstrap_max_n", "estimand"});
  doc.require_known("network", {"family", "m_attach", "power", "k_ring", "p_rewire", "mean_degree", "path"});
  doc.require_known("estimator", {"draws", "hbar", "hbar_draws", "m_features", "g_features", "weight_cap",
                                  "positivity_override", "centering_draws"});
  doc.require_known("bootstrap", {"replicates", "draws", "max_failure_rate"});
  for (const auto& s : doc.sections()) {
    static const std::vector<std::string> known{"experiment", "network",      "estimator",    "bootstrap", "covariates",
                                                "summaries.W", "summaries.V", "treatment", "outcome", "latent"};
    if (std::find(known.begin(), known.end(), s.name) == known.end())
      throw Error(ErrorKind::Specification, "line " + std::to_string(s.line) + ": unknown section [" + s.name + "]");
  }

  ExperimentConfig c;
  c.name = doc.get_or("experiment", "name", "experiment");
  if (doc.has("experiment", "preset")) {
    c.model_source = "preset:" + doc.get("experiment", "preset");
    const Preset p = preset_by_name(doc.get("experiment", "preset"));
    c.model = {p.sem, p.summaries};
  } else if (doc.has("experiment", "model")) {
    const std::string path = resolve(base_dir, doc.get("experiment", "model"));
    c.model_source = path;
    c.model = parse_model(ConfigDocument::parse_file(path));
  } else {
    c.model_source = "inline";
    c.model = parse_model(doc);
  }

  c.network.family = doc.get_or("network", "family", c.network.family);
  c.network.m_attach = doc.get_int_or("network", "m_attach", c.network.m_attach);
  c.network.power = doc.get_double_or("network", "power", c.network.power);
  c.network.k_ring = doc.get_int_or("network", "k_ring", c.network.k_ring);
  c.network.p_rewire = doc.get_double_or("network", "p_rewire", c.network.p_rewire);
  c.network.mean_degree = doc.get_double_or("network", "mean_degree", c.network.mean_degree);
  if (doc.has("network", "path")) c.network.path = resolve(base_dir, doc.get("network", "path"));
  {
    static const std::vector<std::string> families{"preferential_attachment", "small_world", "erdos_renyi", "file"};
    if (std::find(families.begin(), families.end(), c.network.family) == families.end())
      throw Error(ErrorKind::Specification, "unknown network family '" + c.network.family + "'");
    if (c.network.family == "file" && c.network.path.empty())
      throw Error(ErrorKind::Specification, "network family 'file' needs a path");
  }

  for (const auto& s : split_list(doc.get("experiment", "sizes"))) {
    const auto n = parse_integer(s, "[experiment] sizes");
    if (n < 2) throw Error(ErrorKind::Specification, "[experiment] sizes must be at least 2");
    c.sizes.push_back(n);
  }
  c.replicates = doc.get_int_or("experiment", "replicates", c.replicates);
  if (c.replicates < 1) throw Error(ErrorKind::Specification, "[experiment] replicates must be positive");
  c.interventions = split_list(doc.get_or("experiment", "interventions", "g1"));
  for (const auto& iv : c.interventions) parse_intervention(iv);
  c.methods = parse_variance_methods(doc.get_or("experiment", "variance", "iid,dependent"));
  c.seed = static_cast<std::uint64_t>(parse_integer(doc.get("experiment", "seed"), "[experiment] seed"));
  c.level = doc.get_double_or("experiment", "level", c.level);
  if (!(c.level > 0.0 && c.level < 1.0)) throw Error(ErrorKind::Specification, "[experiment] level outside (0,1)");
  c.truth_replicates = doc.get_int_or("experiment", "truth_replicates", c.truth_replicates);
  c.conditional_truth_replicates =
      doc.get_int_or("experiment", "conditional_truth_replicates", c.conditional_truth_replicates);
  if (doc.has("experiment", "truth_file")) c.truth_file = resolve(base_dir, doc.get("experiment", "truth_file"));
  c.bootstrap_max_n = doc.get_int_or("experiment", "bootstrap_max_n", c.bootstrap_max_n);
  c.estimator.estimand = parse_estimand(doc.get_or("experiment", "estimand", "marginal"));

  c.estimator.draws = doc.get_int_or("estimator", "draws", c.estimator.draws);
  c.estimator.hbar = parse_hbar_method(doc.get_or("estimator", "hbar", "pooled-empirical"));
  c.estimator.hbar_draws = doc.get_int_or("estimator", "hbar_draws", c.estimator.hbar_draws);
  if (doc.has("estimator", "m_features")) c.estimator.m_features = split_list(doc.get("estimator", "m_features"));
  if (doc.has("estimator", "g_features")) c.estimator.g_features = split_list(doc.get("estimator", "g_features"));
  if (doc.has("estimator", "weight_cap")) c.estimator.weight_cap = doc.get_double("estimator", "weight_cap");
  c.estimator.positivity_override = doc.get_bool_or("estimator", "positivity_override", false);
  c.estimator.centering_draws = doc.get_int_or("estimator", "centering_draws", c.estimator.centering_draws);

  c.bootstrap.replicates = doc.get_int_or("bootstrap", "replicates", c.bootstrap.replicates);
  c.bootstrap.draws = doc.get_int_or("bootstrap", "draws", c.bootstrap.draws);
  c.bootstrap.max_failure_rate = doc.get_double_or("bootstrap", "max_failure_rate", c.bootstrap.max_failure_rate);
  c.workers = default_workers();
  return c;
}

namespace {

nlohmann::json config_json(const ExperimentConfig& c) {
  std::vector<std::string> methods;
  for (auto m : c.methods) methods.push_back(to_string(m));
  nlohmann::json est{{"draws", c.estimator.draws},
                     {"hbar", to_string(c.estimator.hbar)},
                     {"hbar_draws", c.estimator.hbar_draws},
                     {"estimand", to_string(c.estimator.estimand)},
                     {"positivity_override", c.estimator.positivity_override},
                     {"centering_draws", c.estimator.centering_draws}};
  if (c.estimator.m_features) est["m_features"] = *c.estimator.m_features;
  if (c.estimator.g_features) est["g_features"] = *c.estimator.g_features;
  if (c.estimator.weight_cap) est["weight_cap"] = *c.estimator.weight_cap;
  return nlohmann::json{
      {"name", c.name},
      {"model_source", c.model_source},
      {"model", to_config_text(c.model.sem, c.model.summaries)},
      {"network", c.network.describe()},
      {"sizes", c.sizes},
      {"replicates", c.replicates},
      {"interventions", c.interventions},
      {"variance", methods},
      {"bootstrap", {{"max_n", c.bootstrap_max_n}, {"replicates", c.bootstrap.replicates}, {"draws", c.bootstrap.draws}}},
      {"estimator", est},
      {"truth_replicates", c.truth_replicates},
      {"conditional_truth_replicates", c.conditional_truth_replicates},
      {"level", c.level},
      {"seed", c.seed}};
}

std::uint64_t network_seed(std::uint64_t master, Index n) {
  return derive_seed(master, Stream::Network, static_cast<std::uint64_t>(n));
}

std::uint64_t data_seed(std::uint64_t master, Index n, Index r) {
  return derive_seed(derive_seed(master, Stream::Data, static_cast<std::uint64_t>(n)), static_cast<std::uint64_t>(r));
}

std::uint64_t truth_seed(std::uint64_t master, Index n, std::size_t k) {
  return derive_seed(derive_seed(master, Stream::Truth, static_cast<std::uint64_t>(n)), k);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  if (config.sizes.empty()) throw Error(ErrorKind::Specification, "no sample sizes");
  if (config.interventions.empty()) throw Error(ErrorKind::Specification, "no interventions");
  const auto& sem = config.model.sem;
  const auto& summaries = config.model.summaries;
  validate(sem, summaries);
  const bool conditional = config.estimator.estimand == EstimandKind::Conditional;
  const std::string model_text = to_config_text(sem, summaries);
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };

  TruthTable truths;
  if (!config.truth_file.empty() && std::filesystem::exists(config.truth_file)) {
    std::ifstream in(config.truth_file);
    truths = read_truth_table(in);
  }
  bool truths_changed = false;

  ExperimentResult res;
  res.manifest = {{"version", kVersion},
                  {"config", config_json(config)},
                  {"seed_scheme",
                   "network: derive(seed, Network, n); data: derive(derive(seed, Data, n), r); "
                   "estimate: derive(data, Estimate, k); bootstrap: derive(data, Bootstrap, k); "
                   "truth: derive(derive(seed, Truth, n), k)"}};
  res.manifest["config_hash"] = instance_key(res.manifest["config"].dump());
  nlohmann::json truth_log = nlohmann::json::array();

  std::map<std::pair<Index, std::size_t>, TruthEstimate> marginal_all;
  std::vector<Intervention> ivs;
  for (const auto& text : config.interventions) ivs.push_back(parse_intervention(text));
  const std::size_t K = ivs.size();

  for (Index n : config.sizes) {
    const std::uint64_t nseed = network_seed(config.seed, n);
    const NetworkPtr net = make_network(config.network, n, nseed);
    const Index size = net->size();
    const DependencyStructure dep = dependency_neighborhoods(*net);
    const auto stein = stein_rate_diagnostic(*net);
    say("n=" + std::to_string(size) + ": network " + config.network.describe() + ", " +
        std::to_string(net->edge_count()) + " edges, K_max=" + std::to_string(stein.k_max));

    std::vector<TruthEstimate> marginal(K);
    if (!conditional) {
      for (std::size_t k = 0; k < K; ++k) {
        std::ostringstream desc;
        desc << "model{" << model_text << "} network{" << config.network.describe() << " n=" << size
             << " seed=" << nseed << "} iv{" << config.interventions[k] << "} R=" << config.truth_replicates
             << " seed=" << truth_seed(config.seed, n, k);
        const std::string key = instance_key(desc.str());
        if (const auto* e = truths.find(key)) {
          marginal[k] = {e->psi, e->mc_se, e->replicates};
        } else {
          say("  truth for " + config.interventions[k] + " (" + std::to_string(config.truth_replicates) +
              " replicates)");
          marginal[k] = psi_monte_carlo_truth(*net, sem, summaries, ivs[k], config.truth_replicates,
                                              truth_seed(config.seed, n, k), config.workers);
          truths.entries[key] = {marginal[k].psi, marginal[k].mc_se, marginal[k].replicates,
                                 config.name + " n=" + std::to_string(size) + " " + config.interventions[k]};
          truths_changed = true;
        }
        marginal_all[{size, k}] = marginal[k];
        truth_log.push_back({{"n", size},
                             {"intervention", config.interventions[k]},
                             {"key", key},
                             {"psi", marginal[k].psi},
                             {"mc_se", marginal[k].mc_se},
                             {"replicates", marginal[k].replicates}});
      }
    }

    const bool bootstrap_here = size <= config.bootstrap_max_n;
    std::vector<ReplicateRecord> records(static_cast<std::size_t>(config.replicates) * K);
    parallel_for(config.replicates, config.workers, [&](Index r) {
      const std::uint64_t dseed = data_seed(config.seed, n, r);
      const Dataset data = simulate(net, sem, summaries, dseed);
      for (std::size_t k = 0; k < K; ++k) {
        ReplicateRecord& rec = records[static_cast<std::size_t>(r) * K + k];
        rec.n = size;
        rec.intervention = config.interventions[k];
        rec.replicate = r;
        rec.methods.resize(config.methods.size());
        try {
          const TmleResult est = tmle_estimate(data, ivs[k], config.estimator, derive_seed(dseed, Stream::Estimate, k));
          rec.psi_hat = est.psi;
          rec.epsilon = est.epsilon;
          rec.score = est.score;
          rec.truth = conditional ? psi_conditional_truth(net, sem, summaries, ivs[k], data.C,
                                                          config.conditional_truth_replicates,
                                                          derive_seed(dseed, Stream::Truth, k))
                                        .psi
                                  : marginal[k].psi;
          for (std::size_t m = 0; m < config.methods.size(); ++m) {
            VarianceReport vr;
            switch (config.methods[m]) {
              case VarianceMethod::Iid: vr = var_iid(est.ic(), est.psi, config.level); break;
              case VarianceMethod::Dependent: vr = var_dependent(est.ic(), dep, est.psi, config.level); break;
              case VarianceMethod::Bootstrap:
                if (!bootstrap_here) continue;
                vr = var_bootstrap(data, est, ivs[k], config.bootstrap, derive_seed(dseed, Stream::Bootstrap, k),
                                   config.level);
                break;
            }
            rec.methods[m] = MethodOutcome{vr.variance, vr.ci, vr.ci.lower <= rec.truth && rec.truth <= vr.ci.upper};
          }
          rec.ok = true;
        } catch (const Error& e) {
          rec.ok = false;
          rec.error = sanitize(e.what());
        }
      }
    });
    for (auto& rec : records) {
      if (!rec.ok && rec.error.rfind(to_string(ErrorKind::Numeric), 0) == 0) ++res.numeric_failures;
      res.records.push_back(std::move(rec));
    }
    say("  " + std::to_string(config.replicates) + " replicates done");
  }

  if (truths_changed && !config.truth_file.empty()) {
    std::ostringstream out;
    write_truth_table(out, truths);
    write_file_atomic(config.truth_file, out.str());
  }
  res.manifest["truths"] = truth_log;
  res.manifest["numeric_failures"] = res.numeric_failures;

  // Tables, grouped by (n, intervention) in run order.
  res.coverage.columns = {"n", "intervention", "ci_type", "replicates", "coverage", "mc_error"};
  res.ci_length.columns = {"n", "intervention", "ci_type", "replicates", "mean_length", "sd_length"};
  res.bias.columns = {"n",    "intervention", "replicates", "failures",    "truth",
                      "truth_mc_se", "mean_psi_hat", "bias",      "bias_se", "sd_psi_hat"};
  res.rescaled.columns = {"n", "intervention", "replicate", "rescaled"};
  res.replicates.columns = {"n", "intervention", "replicate", "status", "psi_hat", "truth", "epsilon", "score"};
  for (auto m : config.methods)
    for (const char* suffix : {"_variance", "_lower", "_upper", "_covered"})
      res.replicates.columns.push_back(to_string(m) + suffix);

  const std::size_t K_ = config.interventions.size();
  std::size_t offset = 0;
  for (Index n : config.sizes) {
    (void)n;
    const std::size_t block = static_cast<std::size_t>(config.replicates) * K_;
    for (std::size_t k = 0; k < K_; ++k) {
      std::vector<const ReplicateRecord*> group;
      for (std::size_t r = 0; r < static_cast<std::size_t>(config.replicates); ++r)
        group.push_back(&res.records[offset + r * K_ + k]);
      const std::string size = std::to_string(group.front()->n);
      const std::string& ivname = config.interventions[k];

      std::vector<double> psi;
      std::vector<double> err;
      std::vector<double> truth;
      for (const auto* rec : group) {
        std::vector<std::string> row{size, ivname, std::to_string(rec->replicate), rec->ok ? "ok" : rec->error,
                                     format_number(rec->psi_hat), format_number(rec->truth),
                                     format_number(rec->epsilon), format_number(rec->score)};
        for (const auto& mo : rec->methods) {
          if (rec->ok && mo) {
            row.insert(row.end(), {format_number(mo->variance), format_number(mo->ci.lower),
                                   format_number(mo->ci.upper), mo->covered ? "1" : "0"});
          } else {
            row.insert(row.end(), {"nan", "nan", "nan", "nan"});
          }
        }
        if (!rec->ok) row.resize(res.replicates.columns.size(), "nan");
        res.replicates.add_row(std::move(row));
        if (!rec->ok) continue;
        psi.push_back(rec->psi_hat);
        err.push_back(rec->psi_hat - rec->truth);
        truth.push_back(rec->truth);
      }
      const Index ok = static_cast<Index>(psi.size());
      const double sd = sample_sd(psi);
      const double truth_se = conditional ? sample_sd(truth) / std::sqrt(std::max<double>(1.0, truth.size()))
                                          : marginal_all.at({group.front()->n, k}).mc_se;
      res.bias.add_row({size, ivname, std::to_string(ok), std::to_string(static_cast<Index>(group.size()) - ok),
                        format_number(mean(truth)), format_number(truth_se), format_number(mean(psi)),
                        format_number(mean(err)), format_number(sample_sd(err) / std::sqrt(std::max<double>(1.0, ok))),
                        format_number(sd)});
      Index idx = 0;
      for (const auto* rec : group) {
        if (!rec->ok) continue;
        res.rescaled.add_row({size, ivname, std::to_string(rec->replicate),
                              format_number(sd > 0.0 ? err[idx] / sd : 0.0)});
        ++idx;
      }
      for (std::size_t m = 0; m < config.methods.size(); ++m) {
        std::vector<double> cover;
        std::vector<double> length;
        for (const auto* rec : group) {
          if (!rec->ok || !rec->methods[m]) continue;
          cover.push_back(rec->methods[m]->covered ? 1.0 : 0.0);
          length.push_back(rec->methods[m]->ci.upper - rec->methods[m]->ci.lower);
        }
        if (cover.empty()) continue;
        const double p = mean(cover);
        const double R = static_cast<double>(cover.size());
        const std::string count = std::to_string(cover.size());
        const std::string type = to_string(config.methods[m]);
        res.coverage.add_row({size, ivname, type, count, format_number(p),
                              format_number(1.96 * std::sqrt(p * (1.0 - p) / R))});
        res.ci_length.add_row({size, ivname, type, count, format_number(mean(length)),
                               format_number(sample_sd(length))});
      }
    }
    offset += block;
  }
  return res;
}

void write_experiment(const ExperimentResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const ResultTable& t) {
    std::ostringstream out;
    write_tsv(out, t);
    write_file_atomic((std::filesystem::path(dir) / name).string(), out.str());
  };
  put("coverage.tsv", result.coverage);
  put("ci_length.tsv", result.ci_length);
  put("bias.tsv", result.bias);
  put("rescaled.tsv", result.rescaled);
  put("replicates.tsv", result.replicates);
  write_file_atomic((std::filesystem::path(dir) / "manifest.json").string(), result.manifest.dump(2) + "\n");
}

}  // namespace nettmle
