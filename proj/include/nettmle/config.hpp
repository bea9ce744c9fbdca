#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nettmle/sem.hpp"
#include "nettmle/summaries.hpp"

namespace nettmle {

/// `[section]` headers and `key = value` lines; `#` starts a comment. Key
/// order is kept because feature lists are ordered.
class ConfigDocument {
 public:
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;
  };
  struct Section {
    std::string name;
    std::vector<Entry> entries;
    int line = 0;
  };

  static ConfigDocument parse(std::istream& in);
  static ConfigDocument parse_file(const std::string& path);
  static ConfigDocument parse_string(const std::string& text);

  const Section* section(const std::string& name) const;
  bool has(const std::string& section, const std::string& key) const;
  /// Throws Specification naming the missing key.
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key, double fallback) const;
  long long get_int_or(const std::string& section, const std::string& key, long long fallback) const;
  bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;

  /// Sets or appends a key; used for command-line overrides.
  void set(const std::string& section, const std::string& key, const std::string& value);
  /// Rejects sections or keys outside the given allow-lists.
  void require_known(const std::string& section, const std::vector<std::string>& keys) const;

  const std::vector<Section>& sections() const { return sections_; }

 private:
  std::vector<Section> sections_;
};

double parse_number(const std::string& text, const std::string& context);
long long parse_integer(const std::string& text, const std::string& context);
bool parse_bool(const std::string& text, const std::string& context);
std::vector<std::string> split_list(const std::string& text, char sep = ',');
std::string trim(const std::string& s);

/// SEM and summary grammar: sections [covariates], [summaries.W],
/// [summaries.V], [treatment], [outcome] and optional [latent].
struct ModelSpec {
  SemSpec sem;
  SummarySpec summaries;
};

ModelSpec parse_model(const ConfigDocument& doc);
/// Canonical text of a model; parse_model(to_config_text(m)) reproduces m.
std::string to_config_text(const SemSpec& sem, const SummarySpec& summaries);

}  // namespace nettmle
