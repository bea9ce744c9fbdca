#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nettmle/core.hpp"

namespace nettmle {

/// Headered tab-separated table. Numbers are stored in their shortest
/// round-trip form, so reading a written table reproduces it exactly.
struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  Index size() const { return static_cast<Index>(rows.size()); }
  /// -1 when absent.
  Index column(const std::string& name) const;
  const std::string& cell(Index row, const std::string& name) const;
  double number(Index row, const std::string& name) const;
  void add_row(std::vector<std::string> row);

  friend bool operator==(const ResultTable&, const ResultTable&) = default;
};

std::string format_number(double v);
double parse_cell_number(const std::string& s);

void write_tsv(std::ostream& out, const ResultTable& table);
ResultTable read_tsv(std::istream& in);
ResultTable read_tsv_file(const std::string& path);

/// Writes to `path.tmp` and renames, so readers never see partial files.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace nettmle
