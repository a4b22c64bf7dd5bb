#include "cicada/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cicada/errors.hpp"

namespace cicada {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_cell(const std::string& cell, const std::string& path, std::size_t row) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  while (end != nullptr && (*end == ' ' || *end == '\r')) ++end;
  require(end != begin && end != nullptr && *end == '\0', Err::CorruptFile,
          path + ": non-numeric cell '" + cell + "' in row " + std::to_string(row));
  return v;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Err::IoError, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  require(out.good(), Err::IoError, "cannot open " + path + " for writing");
  for (const auto& l : lines) out << l << '\n';
  require(out.good(), Err::IoError, "write failed for " + path);
}

std::string join_row(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) line += ',';
    line += cells[i];
  }
  return line;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

SeriesCsv read_series_csv(const std::string& path) {
  auto lines = read_lines(path);
  require(!lines.empty(), Err::CorruptFile, path + ": empty file");
  auto header = split_row(lines[0]);
  require(!header.empty(), Err::CorruptFile, path + ": empty header");
  bool labeled = header.back() == "label";
  std::size_t d = header.size() - (labeled ? 1 : 0);
  require(d >= 1, Err::CorruptFile, path + ": no data columns");
  std::size_t T = lines.size() - 1;
  require(T >= 1, Err::CorruptFile, path + ": no data rows");

  SeriesCsv s;
  s.names.assign(header.begin(), header.begin() + static_cast<long>(d));
  s.x = Matrix(T, d);
  if (labeled) s.label.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto cells = split_row(lines[t + 1]);
    require(cells.size() == header.size(), Err::CorruptFile,
            path + ": row " + std::to_string(t + 1) + " has " +
                std::to_string(cells.size()) + " cells, expected " +
                std::to_string(header.size()));
    for (std::size_t j = 0; j < d; ++j) s.x(t, j) = parse_cell(cells[j], path, t + 1);
    if (labeled) {
      double v = parse_cell(cells[d], path, t + 1);
      require(v == 0.0 || v == 1.0, Err::CorruptFile,
              path + ": label in row " + std::to_string(t + 1) + " must be 0 or 1");
      s.label[t] = static_cast<int>(v);
    }
  }
  return s;
}

void write_series_csv(const std::string& path, const SeriesCsv& s) {
  require(s.names.size() == static_cast<std::size_t>(s.x.cols), Err::DimensionMismatch,
          "series header count does not match variable count");
  require(s.label.empty() || s.label.size() == static_cast<std::size_t>(s.x.rows),
          Err::DimensionMismatch, "label length does not match series length");
  std::vector<std::string> lines;
  lines.reserve(s.x.rows + 1);
  auto header = s.names;
  if (!s.label.empty()) header.push_back("label");
  lines.push_back(join_row(header));
  for (int t = 0; t < s.x.rows; ++t) {
    std::vector<std::string> cells;
    cells.reserve(header.size());
    for (int j = 0; j < s.x.cols; ++j) cells.push_back(format_double(s.x(t, j)));
    if (!s.label.empty()) cells.push_back(std::to_string(s.label[t]));
    lines.push_back(join_row(cells));
  }
  write_lines(path, lines);
}

TableCsv read_table_csv(const std::string& path) {
  auto lines = read_lines(path);
  require(!lines.empty(), Err::CorruptFile, path + ": empty file");
  TableCsv t;
  t.names = split_row(lines[0]);
  require(!t.names.empty(), Err::CorruptFile, path + ": empty header");
  t.rows.reserve(lines.size() - 1);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto cells = split_row(lines[r]);
    require(cells.size() == t.names.size(), Err::CorruptFile,
            path + ": row " + std::to_string(r) + " has " + std::to_string(cells.size()) +
                " cells, expected " + std::to_string(t.names.size()));
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) row[j] = parse_cell(cells[j], path, r);
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_table_csv(const std::string& path, const TableCsv& t) {
  std::vector<std::string> lines;
  lines.reserve(t.rows.size() + 1);
  lines.push_back(join_row(t.names));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    require(t.rows[r].size() == t.names.size(), Err::DimensionMismatch,
            "table row " + std::to_string(r) + " does not match header width");
    std::vector<std::string> cells;
    cells.reserve(t.rows[r].size());
    for (double v : t.rows[r]) cells.push_back(format_double(v));
    lines.push_back(join_row(cells));
  }
  write_lines(path, lines);
}

}  // namespace cicada
