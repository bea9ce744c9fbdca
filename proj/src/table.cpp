#include "nettmle/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace nettmle {

Index ResultTable::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1 : static_cast<Index>(it - columns.begin());
}

const std::string& ResultTable::cell(Index row, const std::string& name) const {
  const Index c = column(name);
  if (c < 0) throw Error(ErrorKind::Io, "table has no column '" + name + "'");
  return rows.at(static_cast<std::size_t>(row)).at(static_cast<std::size_t>(c));
}

double ResultTable::number(Index row, const std::string& name) const { return parse_cell_number(cell(row, name)); }

void ResultTable::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw Error(ErrorKind::InvalidParameter, "row width does not match header");
  rows.push_back(std::move(row));
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_cell_number(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorKind::Io, "not a number: '" + s + "'");
  return v;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

void check_cell(const std::string& s) {
  if (s.find_first_of("\t\n") != std::string::npos)
    throw Error(ErrorKind::InvalidParameter, "table cells may not contain tabs or newlines");
}

}  // namespace

void write_tsv(std::ostream& out, const ResultTable& table) {
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    check_cell(table.columns[c]);
    out << (c ? "\t" : "") << table.columns[c];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      check_cell(row[c]);
      out << (c ? "\t" : "") << row[c];
    }
    out << '\n';
  }
}

ResultTable read_tsv(std::istream& in) {
  ResultTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Io, "table: missing header");
  t.columns = split_tabs(line);
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto row = split_tabs(line);
    if (row.size() != t.columns.size())
      throw Error(ErrorKind::Io, "table: line " + std::to_string(lineno) + " has the wrong number of cells");
    t.rows.push_back(std::move(row));
  }
  return t;
}

ResultTable read_tsv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  return read_tsv(in);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) {
      std::remove(tmp.c_str());
      throw Error(ErrorKind::Io, "write to '" + tmp + "' failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw Error(ErrorKind::Io, "cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
  }
}

}  // namespace nettmle
