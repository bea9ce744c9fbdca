#include "nettmle/sem.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace nettmle {

std::vector<std::string> SemSpec::covariate_names() const {
  std::vector<std::string> out;
  for (const auto& c : covariates) out.push_back(c.name);
  return out;
}

namespace {

void check_terms(const LinearPredictor& lp, const std::vector<std::string>& names, const char* what) {
  for (const auto& [name, coef] : lp.terms) {
    (void)coef;
    if (std::find(names.begin(), names.end(), name) == names.end())
      throw Error(ErrorKind::Specification,
                  std::string(what) + " law references '" + name + "', which its summaries do not produce");
  }
}

}  // namespace

void validate(const SemSpec& spec, const SummarySpec& summaries) {
  const auto cov = spec.covariate_names();
  for (const auto& c : spec.covariates) {
    if (c.name == kTreatmentColumn || c.name == "Y" || c.name == "id")
      throw Error(ErrorKind::Specification, "reserved covariate name '" + c.name + "'");
    if (c.values.empty() || c.values.size() != c.probs.size())
      throw Error(ErrorKind::Specification, "covariate '" + c.name + "' needs matching values/probs");
    double total = 0.0;
    for (double p : c.probs) {
      if (p < 0.0) throw Error(ErrorKind::Specification, "negative probability in '" + c.name + "'");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw Error(ErrorKind::Specification, "probabilities of '" + c.name + "' do not sum to 1");
  }
  SummaryProgram w(summaries.w, cov, false);
  SummaryProgram v(summaries.v, cov, true);
  if (spec.treatment.kind == TreatmentLaw::Kind::Logit) check_terms(spec.treatment.predictor, w.names(), "treatment");
  if (spec.treatment.kind == TreatmentLaw::Kind::FixedFraction &&
      (spec.treatment.fraction < 0.0 || spec.treatment.fraction > 1.0))
    throw Error(ErrorKind::Specification, "treatment fraction must be in [0,1]");
  check_terms(spec.outcome.predictor, v.names(), "outcome");
}

CompiledPredictor::CompiledPredictor(const LinearPredictor& lp, const std::vector<std::string>& feature_names)
    : intercept_(lp.intercept) {
  for (const auto& [name, coef] : lp.terms) {
    auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end())
      throw Error(ErrorKind::Specification, "unknown feature '" + name + "'");
    terms_.emplace_back(static_cast<Index>(it - feature_names.begin()), coef);
  }
}

double CompiledPredictor::eval(const Table& t, Index row) const {
  double eta = intercept_;
  for (const auto& [col, coef] : terms_) eta += coef * t(row, col);
  return eta;
}

Vector CompiledPredictor::eval(const Table& t) const {
  Vector eta(t.rows());
  for (Index i = 0; i < t.rows(); ++i) eta[i] = eval(t, i);
  return eta;
}

Dataset make_dataset(NetworkPtr net, CovariateTable C, Vector X, Vector Y, SummarySpec summaries) {
  const Index n = net->size();
  if (C.rows() != n || X.size() != n || Y.size() != n)
    throw Error(ErrorKind::InvalidParameter, "dataset dimensions do not match the network");
  for (Index i = 0; i < n; ++i) {
    if (X[i] != 0.0 && X[i] != 1.0) throw Error(ErrorKind::InvalidParameter, "treatment must be binary");
    if (!(Y[i] >= 0.0 && Y[i] <= 1.0)) throw Error(ErrorKind::InvalidParameter, "outcome must lie in [0,1]");
  }
  Dataset d;
  auto s = apply_summaries(*net, summaries, C, X);
  d.network = std::move(net);
  d.C = std::move(C);
  d.X = std::move(X);
  d.Y = std::move(Y);
  d.W = std::move(s.W);
  d.V = std::move(s.V);
  d.summaries = std::move(summaries);
  return d;
}

Vector draw_latent(Index n, Rng& rng) {
  Vector u(n);
  for (Index i = 0; i < n; ++i) u[i] = rng.normal();
  return u;
}

namespace {

// own * U_i + friends * sum_{j ~ i} U_j
Vector latent_shift(const Network& net, const Vector& u, double own, double friends) {
  Vector s(net.size());
  for (Index i = 0; i < net.size(); ++i) {
    double f = 0.0;
    for (Node j : net.neighbors(i)) f += u[j];
    s[i] = own * u[i] + friends * f;
  }
  return s;
}

}  // namespace

CovariateTable draw_covariates(const SemSpec& spec, const Network& net, Rng& rng, const Vector* latent) {
  const Index n = net.size();
  CovariateTable C;
  C.names = spec.covariate_names();
  C.values.resize(n, static_cast<Index>(spec.covariates.size()));
  Vector shift;
  const bool shifted = latent && spec.latent &&
                       (spec.latent->covariate_loading_own != 0.0 || spec.latent->covariate_loading_friends != 0.0);
  if (shifted)
    shift = latent_shift(net, *latent, spec.latent->covariate_loading_own, spec.latent->covariate_loading_friends);
  for (Index k = 0; k < static_cast<Index>(spec.covariates.size()); ++k) {
    const auto& col = spec.covariates[k];
    if (shifted && col.binary()) {
      const double base = logit(clip_probability(col.probs[1]));
      for (Index i = 0; i < n; ++i) C.values(i, k) = rng.bernoulli(expit(base + shift[i])) ? 1.0 : 0.0;
      continue;
    }
    for (Index i = 0; i < n; ++i) {
      double u = rng.uniform();
      std::size_t v = 0;
      while (v + 1 < col.values.size() && u >= col.probs[v]) {
        u -= col.probs[v];
        ++v;
      }
      C.values(i, k) = col.values[v];
    }
  }
  return C;
}

Vector treatment_probabilities(const TreatmentLaw& law, const Table& W, const std::vector<std::string>& w_names) {
  if (law.kind == TreatmentLaw::Kind::FixedFraction) return Vector::Constant(W.rows(), law.fraction);
  CompiledPredictor pred(law.predictor, w_names);
  return expit_all(pred.eval(W));
}

void draw_treatment(const TreatmentLaw& law, const Vector& probabilities, Rng& rng, Vector& x) {
  const Index n = probabilities.size();
  x.setZero(n);
  if (law.kind == TreatmentLaw::Kind::FixedFraction) {
    const auto k = static_cast<Index>(std::floor(law.fraction * static_cast<double>(n) + 1e-9));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (Index i = 0; i < k; ++i) {
      const Index j = i + rng.index(n - i);
      std::swap(order[i], order[j]);
      x[order[i]] = 1.0;
    }
    return;
  }
  for (Index i = 0; i < n; ++i) x[i] = rng.bernoulli(probabilities[i]) ? 1.0 : 0.0;
}

Vector outcome_probabilities(const SemSpec& spec, const Table& V, const std::vector<std::string>& v_names,
                             const Network& net, const Vector* latent) {
  CompiledPredictor pred(spec.outcome.predictor, v_names);
  Vector eta = pred.eval(V);
  if (latent && spec.latent) eta += latent_shift(net, *latent, spec.latent->loading_own, spec.latent->loading_friends);
  if (spec.outcome.deterministic) return eta.unaryExpr([](double e) { return e > 0.0 ? 1.0 : 0.0; });
  return expit_all(eta);
}

Dataset simulate(NetworkPtr net, const SemSpec& spec, const SummarySpec& summaries, std::uint64_t seed) {
  validate(spec, summaries);
  Rng rng(seed);
  const Index n = net->size();
  Vector u;
  const Vector* latent = nullptr;
  if (spec.latent) {
    u = draw_latent(n, rng);
    latent = &u;
  }
  CovariateTable C = draw_covariates(spec, *net, rng, latent);
  SummaryProgram w_prog(summaries.w, C.names, false);
  SummaryProgram v_prog(summaries.v, C.names, true);
  Table W = w_prog.evaluate(*net, C.values, nullptr);
  Vector X;
  draw_treatment(spec.treatment, treatment_probabilities(spec.treatment, W, w_prog.names()), rng, X);
  Table V = v_prog.evaluate(*net, C.values, &X);
  Vector p = outcome_probabilities(spec, V, v_prog.names(), *net, latent);
  Vector Y(n);
  for (Index i = 0; i < n; ++i) Y[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;

  Dataset d;
  d.network = std::move(net);
  d.C = std::move(C);
  d.X = std::move(X);
  d.Y = std::move(Y);
  d.W = std::move(W);
  d.V = std::move(V);
  d.summaries = summaries;
  return d;
}

Preset preset_transmission() {
  Preset p;
  p.name = "transmission";
  p.sem.covariates.push_back({"PA", {0.0, 1.0}, {0.5, 0.5}});
  p.summaries.w = {parse_feature("PA", "own(PA)"), parse_feature("nPA", "nbr_sum(PA)")};
  p.summaries.v = {
      parse_feature("PA", "own(PA)"),        parse_feature("X", "own(X)"),
      parse_feature("XPA", "product(X, PA)"), parse_feature("nX", "nbr_sum(X)"),
      parse_feature("nPA", "nbr_sum(PA)"),   parse_feature("nXnPA", "product(nX, nPA)"),
  };
  p.sem.treatment.kind = TreatmentLaw::Kind::Logit;
  p.sem.treatment.predictor = {-1.5, {{"PA", 0.8}}};
  // The incentive helps only nodes that are not already active (X + XPA
  // cancel for PA = 1); active friends and treated friends both help.
  p.sem.outcome.predictor = {-2.0, {{"PA", 1.0}, {"X", 0.4}, {"XPA", -0.4}, {"nX", 0.25}, {"nPA", 0.3}, {"nXnPA", 0.05}}};
  return p;
}

Preset preset_latent() {
  Preset p = preset_transmission();
  p.name = "latent";
  p.sem.latent = LatentConfig{0.8, 0.4, 0.0, 0.0};
  return p;
}

Preset preset_randomized() {
  Preset p = preset_transmission();
  p.name = "randomized";
  p.sem.treatment.kind = TreatmentLaw::Kind::FixedFraction;
  p.sem.treatment.fraction = 0.25;
  p.sem.treatment.predictor = {};
  return p;
}

Preset preset_by_name(const std::string& name) {
  if (name == "transmission") return preset_transmission();
  if (name == "latent") return preset_latent();
  if (name == "randomized") return preset_randomized();
  throw Error(ErrorKind::Specification, "unknown preset '" + name + "'");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

double parse_number(const std::string& s, Index row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Io, "row " + std::to_string(row) + ": not a number: '" + s + "'");
  }
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& data, const std::vector<std::string>* labels) {
  out << "id";
  for (const auto& name : data.C.names) out << "," << name;
  out << ",X,Y\n";
  out.precision(17);
  for (Index i = 0; i < data.size(); ++i) {
    out << (labels ? (*labels)[i] : std::to_string(i));
    for (Index k = 0; k < data.C.values.cols(); ++k) out << "," << data.C.values(i, k);
    out << "," << data.X[i] << "," << data.Y[i] << "\n";
  }
}

RawData read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Io, "dataset is empty");
  const auto header = split_csv(line);
  if (header.size() < 3 || header.front() != "id" || header[header.size() - 2] != "X" || header.back() != "Y")
    throw Error(ErrorKind::Io, "dataset header must be id,<covariates...>,X,Y");
  RawData raw;
  raw.C.names.assign(header.begin() + 1, header.end() - 2);
  std::vector<std::vector<double>> rows;
  std::vector<double> xs, ys;
  Index row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw Error(ErrorKind::Io, "row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields");
    raw.ids.push_back(cells[0]);
    std::vector<double> c;
    for (std::size_t k = 1; k + 2 < cells.size(); ++k) c.push_back(parse_number(cells[k], row));
    rows.push_back(std::move(c));
    xs.push_back(parse_number(cells[cells.size() - 2], row));
    ys.push_back(parse_number(cells.back(), row));
  }
  const auto n = static_cast<Index>(rows.size());
  raw.C.values.resize(n, static_cast<Index>(raw.C.names.size()));
  raw.X.resize(n);
  raw.Y.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < raw.C.values.cols(); ++k) raw.C.values(i, k) = rows[i][k];
    raw.X[i] = xs[i];
    raw.Y[i] = ys[i];
  }
  return raw;
}

RawData read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return read_dataset(in);
}

RawData align_to_labels(const RawData& raw, const std::vector<std::string>& labels) {
  std::unordered_map<std::string, Index> row_of;
  for (Index i = 0; i < static_cast<Index>(raw.ids.size()); ++i)
    if (!row_of.emplace(raw.ids[i], i).second) throw Error(ErrorKind::Io, "duplicate id '" + raw.ids[i] + "'");
  if (raw.ids.size() != labels.size())
    throw Error(ErrorKind::Io, "dataset has " + std::to_string(raw.ids.size()) + " rows but network has " +
                                   std::to_string(labels.size()) + " nodes");
  RawData out;
  const auto n = static_cast<Index>(labels.size());
  out.C.names = raw.C.names;
  out.C.values.resize(n, raw.C.values.cols());
  out.X.resize(n);
  out.Y.resize(n);
  for (Index i = 0; i < n; ++i) {
    auto it = row_of.find(labels[i]);
    if (it == row_of.end()) throw Error(ErrorKind::Io, "no dataset row for node '" + labels[i] + "'");
    out.ids.push_back(labels[i]);
    out.C.values.row(i) = raw.C.values.row(it->second);
    out.X[i] = raw.X[it->second];
    out.Y[i] = raw.Y[it->second];
  }
  return out;
}

Vector rescale_outcome(const Vector& y, double lower, double upper) {
  if (!(upper > lower)) throw Error(ErrorKind::InvalidParameter, "outcome bounds must satisfy lower < upper");
  Vector out(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    if (y[i] < lower || y[i] > upper)
      throw Error(ErrorKind::InvalidParameter, "outcome " + std::to_string(y[i]) + " outside bounds");
    out[i] = (y[i] - lower) / (upper - lower);
  }
  return out;
}

}  // namespace nettmle
