#include "nettmle/config.hpp"
#include "nettmle/table.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace nettmle {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_number(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used == t.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::Specification, context + ": '" + text + "' is not a number");
}

long long parse_integer(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(t, &used);
    if (used == t.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::Specification, context + ": '" + text + "' is not an integer");
}

bool parse_bool(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  if (t == "true" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "no" || t == "0") return false;
  throw Error(ErrorKind::Specification, context + ": '" + text + "' is not a boolean");
}

ConfigDocument ConfigDocument::parse(std::istream& in) {
  ConfigDocument doc;
  std::string raw;
  int lineno = 0;
  Section* current = nullptr;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(ErrorKind::Specification, "line " + std::to_string(lineno) + ": unterminated section header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) throw Error(ErrorKind::Specification, "line " + std::to_string(lineno) + ": empty section");
      if (doc.section(name))
        throw Error(ErrorKind::Specification, "line " + std::to_string(lineno) + ": duplicate section [" + name + "]");
      doc.sections_.push_back({name, {}, lineno});
      current = &doc.sections_.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Specification, "line " + std::to_string(lineno) + ": expected key = value");
    if (!current) throw Error(ErrorKind::Specification, "line " + std::to_string(lineno) + ": key outside a section");
    Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
    if (e.key.empty()) throw Error(ErrorKind::Specification, "line " + std::to_string(lineno) + ": empty key");
    for (const auto& other : current->entries)
      if (other.key == e.key)
        throw Error(ErrorKind::Specification, "line " + std::to_string(lineno) + ": duplicate key '" + e.key + "'");
    current->entries.push_back(std::move(e));
  }
  return doc;
}

ConfigDocument ConfigDocument::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config '" + path + "'");
  return parse(in);
}

ConfigDocument ConfigDocument::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

const ConfigDocument::Section* ConfigDocument::section(const std::string& name) const {
  for (const auto& s : sections_)
    if (s.name == name) return &s;
  return nullptr;
}

bool ConfigDocument::has(const std::string& section_name, const std::string& key) const {
  const auto* s = section(section_name);
  if (!s) return false;
  return std::any_of(s->entries.begin(), s->entries.end(), [&](const Entry& e) { return e.key == key; });
}

std::string ConfigDocument::get(const std::string& section_name, const std::string& key) const {
  if (const auto* s = section(section_name))
    for (const auto& e : s->entries)
      if (e.key == key) return e.value;
  throw Error(ErrorKind::Specification, "missing [" + section_name + "] " + key);
}

std::string ConfigDocument::get_or(const std::string& section_name, const std::string& key,
                                   const std::string& fallback) const {
  return has(section_name, key) ? get(section_name, key) : fallback;
}

double ConfigDocument::get_double(const std::string& section_name, const std::string& key) const {
  return parse_number(get(section_name, key), "[" + section_name + "] " + key);
}

double ConfigDocument::get_double_or(const std::string& section_name, const std::string& key, double fallback) const {
  return has(section_name, key) ? get_double(section_name, key) : fallback;
}

long long ConfigDocument::get_int_or(const std::string& section_name, const std::string& key,
                                     long long fallback) const {
  return has(section_name, key) ? parse_integer(get(section_name, key), "[" + section_name + "] " + key) : fallback;
}

bool ConfigDocument::get_bool_or(const std::string& section_name, const std::string& key, bool fallback) const {
  return has(section_name, key) ? parse_bool(get(section_name, key), "[" + section_name + "] " + key) : fallback;
}

void ConfigDocument::set(const std::string& section_name, const std::string& key, const std::string& value) {
  auto it = std::find_if(sections_.begin(), sections_.end(), [&](const Section& s) { return s.name == section_name; });
  if (it == sections_.end()) {
    sections_.push_back({section_name, {}, 0});
    it = sections_.end() - 1;
  }
  for (auto& e : it->entries)
    if (e.key == key) {
      e.value = value;
      return;
    }
  it->entries.push_back({key, value, 0});
}

void ConfigDocument::require_known(const std::string& section_name, const std::vector<std::string>& keys) const {
  const auto* s = section(section_name);
  if (!s) return;
  for (const auto& e : s->entries)
    if (std::find(keys.begin(), keys.end(), e.key) == keys.end())
      throw Error(ErrorKind::Specification,
                  "line " + std::to_string(e.line) + ": unknown key '" + e.key + "' in [" + section_name + "]");
}

namespace {

CovariateColumn parse_covariate(const std::string& name, const std::string& text) {
  const auto parts = split_list(text, ':');
  CovariateColumn col;
  col.name = name;
  const std::string ctx = "covariate " + name;
  if (parts.size() == 2 && parts[0] == "bernoulli") {
    const double p = parse_number(parts[1], ctx);
    col.values = {0.0, 1.0};
    col.probs = {1.0 - p, p};
  } else if (parts.size() == 3 && parts[0] == "categorical") {
    for (const auto& v : split_list(parts[1])) col.values.push_back(parse_number(v, ctx));
    for (const auto& p : split_list(parts[2])) col.probs.push_back(parse_number(p, ctx));
  } else {
    throw Error(ErrorKind::Specification, ctx + ": expected bernoulli:<p> or categorical:<values>:<probs>");
  }
  return col;
}

LinearPredictor parse_predictor(const ConfigDocument::Section& s, const std::vector<std::string>& reserved) {
  LinearPredictor lp;
  for (const auto& e : s.entries) {
    if (e.key == "intercept") {
      lp.intercept = parse_number(e.value, "[" + s.name + "] intercept");
    } else if (std::find(reserved.begin(), reserved.end(), e.key) == reserved.end()) {
      lp.terms.emplace_back(e.key, parse_number(e.value, "[" + s.name + "] " + e.key));
    }
  }
  return lp;
}

std::vector<Feature> parse_features(const ConfigDocument& doc, const std::string& name) {
  std::vector<Feature> out;
  const auto* s = doc.section(name);
  if (!s) throw Error(ErrorKind::Specification, "missing section [" + name + "]");
  for (const auto& e : s->entries) out.push_back(parse_feature(e.key, e.value));
  return out;
}

std::string number(double v) { return format_number(v); }

}  // namespace

ModelSpec parse_model(const ConfigDocument& doc) {
  ModelSpec m;
  const auto* cov = doc.section("covariates");
  if (!cov) throw Error(ErrorKind::Specification, "missing section [covariates]");
  for (const auto& e : cov->entries) m.sem.covariates.push_back(parse_covariate(e.key, e.value));

  m.summaries.w = parse_features(doc, "summaries.W");
  m.summaries.v = parse_features(doc, "summaries.V");

  const auto* tr = doc.section("treatment");
  if (!tr) throw Error(ErrorKind::Specification, "missing section [treatment]");
  const std::string law = doc.get_or("treatment", "law", "logit");
  if (law == "logit") m.sem.treatment.kind = TreatmentLaw::Kind::Logit;
  else if (law == "fixed_fraction") m.sem.treatment.kind = TreatmentLaw::Kind::FixedFraction;
  else throw Error(ErrorKind::Specification, "[treatment] law must be logit or fixed_fraction");
  m.sem.treatment.fraction = doc.get_double_or("treatment", "fraction", 0.25);
  m.sem.treatment.predictor = parse_predictor(*tr, {"law", "fraction"});

  const auto* out = doc.section("outcome");
  if (!out) throw Error(ErrorKind::Specification, "missing section [outcome]");
  m.sem.outcome.deterministic = doc.get_bool_or("outcome", "deterministic", false);
  m.sem.outcome.predictor = parse_predictor(*out, {"deterministic"});

  if (doc.section("latent")) {
    doc.require_known("latent",
                      {"loading_own", "loading_friends", "covariate_loading_own", "covariate_loading_friends"});
    LatentConfig lc;
    lc.loading_own = doc.get_double_or("latent", "loading_own", 0.0);
    lc.loading_friends = doc.get_double_or("latent", "loading_friends", 0.0);
    lc.covariate_loading_own = doc.get_double_or("latent", "covariate_loading_own", 0.0);
    lc.covariate_loading_friends = doc.get_double_or("latent", "covariate_loading_friends", 0.0);
    m.sem.latent = lc;
  }
  validate(m.sem, m.summaries);
  return m;
}

std::string to_config_text(const SemSpec& sem, const SummarySpec& summaries) {
  std::ostringstream out;
  out << "[covariates]\n";
  for (const auto& c : sem.covariates) {
    if (c.binary()) {
      out << c.name << " = bernoulli:" << number(c.probs[1]) << "\n";
      continue;
    }
    out << c.name << " = categorical:";
    for (std::size_t k = 0; k < c.values.size(); ++k) out << (k ? "," : "") << number(c.values[k]);
    out << ":";
    for (std::size_t k = 0; k < c.probs.size(); ++k) out << (k ? "," : "") << number(c.probs[k]);
    out << "\n";
  }
  out << "\n[summaries.W]\n";
  for (const auto& f : summaries.w) out << f.name << " = " << to_expression(f) << "\n";
  out << "\n[summaries.V]\n";
  for (const auto& f : summaries.v) out << f.name << " = " << to_expression(f) << "\n";
  out << "\n[treatment]\n";
  if (sem.treatment.kind == TreatmentLaw::Kind::FixedFraction) {
    out << "law = fixed_fraction\nfraction = " << number(sem.treatment.fraction) << "\n";
  } else {
    out << "law = logit\n";
  }
  out << "intercept = " << number(sem.treatment.predictor.intercept) << "\n";
  for (const auto& [name, b] : sem.treatment.predictor.terms) out << name << " = " << number(b) << "\n";
  out << "\n[outcome]\n";
  if (sem.outcome.deterministic) out << "deterministic = true\n";
  out << "intercept = " << number(sem.outcome.predictor.intercept) << "\n";
  for (const auto& [name, b] : sem.outcome.predictor.terms) out << name << " = " << number(b) << "\n";
  if (sem.latent) {
    out << "\n[latent]\n"
        << "loading_own = " << number(sem.latent->loading_own) << "\n"
        << "loading_friends = " << number(sem.latent->loading_friends) << "\n"
        << "covariate_loading_own = " << number(sem.latent->covariate_loading_own) << "\n"
        << "covariate_loading_friends = " << number(sem.latent->covariate_loading_friends) << "\n";
  }
  return out.str();
}

}  // namespace nettmle
