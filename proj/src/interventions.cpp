#include "nettmle/interventions.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "nettmle/tuple_index.hpp"

namespace nettmle {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Specification, "cannot parse number '" + s + "' in '" + context + "'");
  }
}

void flatten(const Intervention& iv, std::vector<const Intervention*>& out) {
  if (const auto* c = std::get_if<Compose>(&iv.kind)) {
    for (const auto& p : c->parts) flatten(p, out);
  } else {
    out.push_back(&iv);
  }
}

Network add_active_friends(const Network& net, const CovariateTable& C, const AddActiveFriend& spec) {
  const Index col = C.column(spec.column);
  if (col < 0) throw Error(ErrorKind::Specification, "add_active_friend: unknown covariate '" + spec.column + "'");
  const Index n = net.size();
  std::vector<Index> donors;
  for (Index i = 0; i < n; ++i)
    if (C.values(i, col) == 1.0) donors.push_back(i);
  std::stable_sort(donors.begin(), donors.end(),
                   [&](Index a, Index b) { return net.degree(a) > net.degree(b); });
  std::set<Edge> added;
  for (Index i = 0; i < n; ++i) {
    if (net.degree(i) >= spec.max_degree) continue;
    for (Index j : donors) {
      if (j == i || net.adjacent(i, j)) continue;
      const Edge e{static_cast<Node>(std::min(i, j)), static_cast<Node>(std::max(i, j))};
      if (added.count(e)) continue;
      added.insert(e);
      break;
    }
  }
  std::vector<Edge> extra(added.begin(), added.end());
  return add_edges(net, extra);
}

Vector top_degree_treatment(const Network& net, double fraction) {
  const Index n = net.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return net.degree(a) > net.degree(b); });
  const auto k = static_cast<Index>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  Vector x = Vector::Zero(n);
  for (Index r = 0; r < k; ++r) x[order[r]] = 1.0;
  return x;
}

}  // namespace

Intervention make_observed(const Vector& x) { return {Deterministic{x}, "observed"}; }

Intervention make_natural() { return {Stochastic{}, "natural"}; }

Intervention make_bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidParameter, "bernoulli probability outside [0,1]");
  std::ostringstream label;
  label << "bernoulli:" << p;
  return {BernoulliP{p}, label.str()};
}

Intervention make_top_degree(double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw Error(ErrorKind::InvalidParameter, "top_degree fraction outside [0,1]");
  std::ostringstream label;
  label << "top_degree:" << fraction;
  return {TopDegree{fraction}, label.str()};
}

Intervention make_add_active_friend(Index max_degree, const std::string& column) {
  if (max_degree < 1) throw Error(ErrorKind::InvalidParameter, "add_active_friend needs max_degree >= 1");
  return {AddActiveFriend{max_degree, column}, "add_active_friend:" + std::to_string(max_degree) + ":" + column};
}

Intervention make_dynamic_own(const std::string& column, double threshold) {
  std::ostringstream label;
  label << "dynamic_own:" << column << ":" << threshold;
  Dynamic d{label.str(), [column, threshold](const Network&, const CovariateTable& C, Index i) {
              const Index c = C.column(column);
              if (c < 0) throw Error(ErrorKind::Specification, "dynamic rule: unknown covariate '" + column + "'");
              return C.values(i, c) >= threshold;
            }};
  return {d, label.str()};
}

Intervention make_dynamic_peer(const std::string& column, double threshold) {
  std::ostringstream label;
  label << "dynamic_peer:" << column << ":" << threshold;
  Dynamic d{label.str(), [column, threshold](const Network& net, const CovariateTable& C, Index i) {
              const Index c = C.column(column);
              if (c < 0) throw Error(ErrorKind::Specification, "dynamic rule: unknown covariate '" + column + "'");
              double s = 0.0;
              for (Node j : net.neighbors(i)) s += C.values(j, c);
              return s >= threshold;
            }};
  return {d, label.str()};
}

Intervention make_compose(std::vector<Intervention> parts) {
  std::string label;
  for (const auto& p : parts) label += (label.empty() ? "" : "+") + p.label;
  return {Compose{std::move(parts)}, label};
}

Intervention parse_intervention(const std::string& text) {
  if (text.find('+') != std::string::npos) {
    std::vector<Intervention> parts;
    for (const auto& piece : split(text, '+')) parts.push_back(parse_intervention(piece));
    return make_compose(std::move(parts));
  }
  const auto f = split(text, ':');
  if (f.empty() || f[0].empty()) throw Error(ErrorKind::Specification, "empty intervention");
  const std::string& name = f[0];
  auto want = [&](std::size_t k) {
    if (f.size() != k) throw Error(ErrorKind::Specification, "malformed intervention '" + text + "'");
  };
  Intervention iv;
  if (name == "g1") {
    want(1);
    iv = make_bernoulli(0.35);
  } else if (name == "g2") {
    want(1);
    iv = make_top_degree(0.10);
  } else if (name == "g3") {
    want(1);
    iv = make_add_active_friend(10, "PA");
  } else if (name == "g4") {
    want(1);
    iv = make_compose({make_top_degree(0.10), make_add_active_friend(10, "PA")});
  } else if (name == "natural") {
    want(1);
    iv = make_natural();
  } else if (name == "bernoulli") {
    want(2);
    iv = make_bernoulli(parse_double(f[1], text));
  } else if (name == "top_degree") {
    want(2);
    iv = make_top_degree(parse_double(f[1], text));
  } else if (name == "add_active_friend") {
    if (f.size() != 2 && f.size() != 3) want(3);
    iv = make_add_active_friend(static_cast<Index>(parse_double(f[1], text)), f.size() == 3 ? f[2] : "PA");
  } else if (name == "dynamic_own") {
    want(3);
    iv = make_dynamic_own(f[1], parse_double(f[2], text));
  } else if (name == "dynamic_peer") {
    want(3);
    iv = make_dynamic_peer(f[1], parse_double(f[2], text));
  } else if (name == "centrality") {
    want(2);
    iv = {CentralityTarget{f[1]}, text};
  } else {
    throw Error(ErrorKind::Specification, "unknown intervention '" + text + "'");
  }
  if (name.size() == 2 && name[0] == 'g') iv.label = name;
  return iv;
}

bool needs_treatment_model(const Intervention& iv) {
  std::vector<const Intervention*> parts;
  flatten(iv, parts);
  const Intervention* treatment = nullptr;
  for (const auto* p : parts)
    if (!std::holds_alternative<NetworkRewire>(p->kind) && !std::holds_alternative<AddActiveFriend>(p->kind) &&
        !std::holds_alternative<CentralityTarget>(p->kind))
      treatment = p;
  return treatment == nullptr || std::holds_alternative<Stochastic>(treatment->kind);
}

TreatmentModel TreatmentModel::from_law(const TreatmentLaw& law, std::vector<std::string> w_names) {
  const auto names = w_names;
  TreatmentModel g(std::move(w_names), [law, names](const Table& W) { return treatment_probabilities(law, W, names); });
  if (law.kind == TreatmentLaw::Kind::FixedFraction) {
    g.fixed_fraction_ = true;
    g.fraction_ = law.fraction;
  }
  return g;
}

CounterfactualEngine::CounterfactualEngine(NetworkPtr net, const CovariateTable& C, const SummarySpec& summaries,
                                           const Intervention& iv, const TreatmentModel* g)
    : base_(std::move(net)), effective_(base_), C_(C), g_(g) {
  const Index n = base_->size();
  if (C_.rows() != n) throw Error(ErrorKind::InvalidParameter, "covariate rows do not match network size");

  std::vector<const Intervention*> parts;
  flatten(iv, parts);
  const Intervention* treatment = nullptr;
  const Intervention* topology = nullptr;
  for (const auto* p : parts) {
    if (const auto* c = std::get_if<CentralityTarget>(&p->kind))
      throw Error(ErrorKind::NotIdentified, "interventions on centrality ('" + c->measure + "') are not identified");
    if (std::holds_alternative<NetworkRewire>(p->kind) || std::holds_alternative<AddActiveFriend>(p->kind))
      topology = p;
    else
      treatment = p;
  }

  if (topology) {
    if (const auto* r = std::get_if<NetworkRewire>(&topology->kind)) {
      if (r->family) {
        family_ = r->family;
        random_network_ = true;
      } else if (r->target) {
        if (r->target->size() != n)
          throw Error(ErrorKind::InvalidParameter, "rewire target has a different node count");
        effective_ = r->target;
      } else {
        throw Error(ErrorKind::InvalidParameter, "network intervention without target or family");
      }
    } else {
      const auto& a = std::get<AddActiveFriend>(topology->kind);
      effective_ = std::make_shared<const Network>(add_active_friends(*base_, C_, a));
    }
  }

  std::vector<Feature> w_features = summaries.w;
  std::vector<Feature> v_features = summaries.v;
  if (treatment == nullptr) {
    model_treatment_ = true;
  } else if (const auto* d = std::get_if<Deterministic>(&treatment->kind)) {
    if (d->x.size() != n) throw Error(ErrorKind::InvalidParameter, "deterministic x* has the wrong length");
    fixed_x_ = d->x;
  } else if (const auto* dy = std::get_if<Dynamic>(&treatment->kind)) {
    dynamic_ = *dy;
  } else if (const auto* s = std::get_if<Stochastic>(&treatment->kind)) {
    model_treatment_ = true;
    if (s->w_star) w_features = *s->w_star;
    if (s->v_star) v_features = *s->v_star;
  } else if (const auto* b = std::get_if<BernoulliP>(&treatment->kind)) {
    bernoulli_p_ = b->p;
  } else if (const auto* t = std::get_if<TopDegree>(&treatment->kind)) {
    fixed_x_ = top_degree_treatment(*base_, t->fraction);
  }
  if (model_treatment_ && g_ == nullptr)
    throw Error(ErrorKind::MissingModel, "intervention '" + iv.label + "' needs a treatment model");

  w_prog_ = SummaryProgram(w_features, C_.names, false);
  v_prog_ = SummaryProgram(v_features, C_.names, true);
  if (model_treatment_ && w_prog_.names() != g_->w_names())
    throw Error(ErrorKind::Specification, "treatment model features do not match the intervened W summaries");
  if (!random_network_) plan_ = plan_for(*effective_);
  else if (!model_treatment_ && !dynamic_) plan_ = plan_for(*base_);
  else plan_.kind = TreatmentPlan::Kind::Independent;  // varies per draw
}

TreatmentPlan CounterfactualEngine::plan_for(const Network& net) const {
  const Index n = net.size();
  TreatmentPlan plan;
  if (fixed_x_) {
    plan.value = *fixed_x_;
  } else if (dynamic_) {
    plan.value.resize(n);
    for (Index i = 0; i < n; ++i) plan.value[i] = dynamic_->rule(net, C_, i) ? 1.0 : 0.0;
  } else if (bernoulli_p_) {
    plan.kind = TreatmentPlan::Kind::Independent;
    plan.value = Vector::Constant(n, *bernoulli_p_);
  } else if (g_->fixed_fraction()) {
    plan.kind = TreatmentPlan::Kind::FixedFraction;
    plan.value = Vector::Zero(n);
    plan.treated = static_cast<Index>(std::floor(g_->fraction() * static_cast<double>(n) + 1e-9));
  } else {
    plan.kind = TreatmentPlan::Kind::Independent;
    plan.value = g_->probabilities(w_prog_.evaluate(net, C_.values, nullptr));
  }
  return plan;
}

std::pair<NetworkPtr, TreatmentPlan> CounterfactualEngine::resolve(std::uint64_t seed, Index d) const {
  if (!random_network_) return {effective_, plan_};
  Rng rng(derive_seed(seed, Stream::Draw, static_cast<std::uint64_t>(d)));
  auto net = std::make_shared<const Network>(family_(*base_, C_, rng));
  if (net->size() != base_->size()) throw Error(ErrorKind::InvalidParameter, "network family changed the node count");
  return {net, plan_for(*net)};
}

void CounterfactualEngine::draw(std::uint64_t seed, Index d, Table& v_star, Vector& x_star) const {
  Rng rng(derive_seed(seed, Stream::Draw, static_cast<std::uint64_t>(d)));
  if (random_network_) {
    const Network net = family_(*base_, C_, rng);
    if (net.size() != base_->size())
      throw Error(ErrorKind::InvalidParameter, "network family changed the node count");
    sample_treatment(plan_for(net), rng, x_star);
    v_prog_.evaluate(net, C_.values, &x_star, v_star);
    return;
  }
  sample_treatment(plan_, rng, x_star);
  v_prog_.evaluate(*effective_, C_.values, &x_star, v_star);
}

void sample_treatment(const TreatmentPlan& plan, Rng& rng, Vector& x) {
  switch (plan.kind) {
    case TreatmentPlan::Kind::Fixed:
      x = plan.value;
      return;
    case TreatmentPlan::Kind::Independent:
      x.resize(plan.value.size());
      for (Index i = 0; i < x.size(); ++i) x[i] = rng.bernoulli(plan.value[i]) ? 1.0 : 0.0;
      return;
    case TreatmentPlan::Kind::FixedFraction: {
      const Index n = plan.value.size();
      x.resize(n);
      if (plan.treated > n) throw Error(ErrorKind::InvalidParameter, "fixed-fraction plan exceeds node count");
      std::vector<Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      x.setZero();
      for (Index i = 0; i < plan.treated; ++i) {
        const Index j = i + rng.index(n - i);
        std::swap(order[i], order[j]);
        x[order[i]] = 1.0;
      }
      return;
    }
  }
}

std::vector<Table> counterfactual_summaries(const Dataset& data, const Intervention& iv, const TreatmentModel* g_hat,
                                            Index draws, std::uint64_t seed) {
  if (draws < 1) throw Error(ErrorKind::InvalidParameter, "draws must be >= 1");
  CounterfactualEngine engine(data.network, data.C, data.summaries, iv, g_hat);
  const Index count = engine.random() ? draws : 1;
  std::vector<Table> out(static_cast<std::size_t>(count));
  Vector x(data.size());
  for (Index d = 0; d < count; ++d) engine.draw(seed, d, out[d], x);
  return out;
}

class PositivityAccumulator::Impl {
 public:
  explicit Impl(Index dims) : observed(dims), star(dims) {}
  TupleIndex observed;
  std::vector<Index> observed_count;
  std::map<double, Index> stratum_size;
  TupleIndex star;
  std::vector<Index> star_count;
  std::vector<Index> star_node;
  std::vector<Index> star_observed;  // id in `observed`, or -1
  Index total = 0;
  Index n = 0;
};

PositivityAccumulator::PositivityAccumulator(const Table& v_obs, const std::vector<double>* strata)
    : key_dims_(v_obs.cols() + (strata ? 1 : 0)), strata_(strata), key_(static_cast<std::size_t>(key_dims_)) {
  if (v_obs.rows() == 0) throw Error(ErrorKind::EmptyInput, "positivity diagnostic needs observed summaries");
  if (strata && static_cast<Index>(strata->size()) != v_obs.rows())
    throw Error(ErrorKind::InvalidParameter, "strata length does not match summaries");
  impl_ = std::make_shared<Impl>(key_dims_);
  impl_->n = v_obs.rows();
  for (Index i = 0; i < v_obs.rows(); ++i) {
    std::copy_n(v_obs.row(i).data(), v_obs.cols(), key_.begin());
    if (strata) {
      key_.back() = (*strata)[i];
      ++impl_->stratum_size[(*strata)[i]];
    }
    const Index id = impl_->observed.insert(key_);
    if (id == static_cast<Index>(impl_->observed_count.size())) impl_->observed_count.push_back(0);
    ++impl_->observed_count[id];
  }
}

void PositivityAccumulator::add(const Table& v_star) {
  if (v_star.rows() != impl_->n || v_star.cols() + (strata_ ? 1 : 0) != key_dims_)
    throw Error(ErrorKind::InvalidParameter, "counterfactual summaries have the wrong shape");
  for (Index i = 0; i < v_star.rows(); ++i) {
    std::copy_n(v_star.row(i).data(), v_star.cols(), key_.begin());
    if (strata_) key_.back() = (*strata_)[i];
    const Index id = impl_->star.insert(key_);
    if (id == static_cast<Index>(impl_->star_count.size())) {
      impl_->star_count.push_back(0);
      impl_->star_node.push_back(i);
      impl_->star_observed.push_back(impl_->observed.find(key_));
    }
    ++impl_->star_count[id];
    ++impl_->total;
  }
}

PositivityReport PositivityAccumulator::finish() const {
  PositivityReport r;
  r.star_support = impl_->star.size();
  Index unsupported_count = 0;
  double min_freq = 1.0;
  for (Index id = 0; id < impl_->star.size(); ++id) {
    const Index obs = impl_->star_observed[id];
    const auto key = impl_->star.row(id);
    if (obs < 0) {
      min_freq = 0.0;
      ++r.unsupported_distinct;
      unsupported_count += impl_->star_count[id];
      if (static_cast<Index>(r.unsupported.size()) < PositivityReport::kMaxListed) {
        UnsupportedValue u;
        u.value.assign(key.begin(), key.end() - (strata_ ? 1 : 0));
        u.node = impl_->star_node[id];
        u.stratum = strata_ ? key.back() : 0.0;
        u.count = impl_->star_count[id];
        r.unsupported.push_back(std::move(u));
      }
      continue;
    }
    const double denom =
        strata_ ? static_cast<double>(impl_->stratum_size.at(key.back())) : static_cast<double>(impl_->n);
    min_freq = std::min(min_freq, static_cast<double>(impl_->observed_count[obs]) / denom);
  }
  r.pass = r.unsupported_distinct == 0;
  r.min_frequency = impl_->star.size() == 0 ? 0.0 : min_freq;
  r.unsupported_mass = impl_->total == 0 ? 0.0 : static_cast<double>(unsupported_count) / impl_->total;
  return r;
}

PositivityReport positivity_diagnostic(const Table& v_obs, const std::vector<Table>& v_star,
                                       const std::vector<double>* strata) {
  PositivityAccumulator acc(v_obs, strata);
  for (const auto& t : v_star) acc.add(t);
  return acc.finish();
}

}  // namespace nettmle
