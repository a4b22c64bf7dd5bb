#pragma once

#include <string>
#include <vector>

#include "cicada/matrix.hpp"

namespace cicada {

// Formats a double with enough digits to round-trip exactly through
// strtod ("%.17g").
std::string format_double(double v);

// A multivariate series plus an optional binary label column.  Rows of `x`
// are time steps, columns are variables; `names` holds one header per
// variable (label excluded).  `label` is empty when the file had no label
// column.
struct SeriesCsv {
  Matrix x;
  std::vector<int> label;
  std::vector<std::string> names;
};

// Reads a series CSV.  The first row is a header; a trailing column named
// "label" is split out and must contain only 0 or 1.  Ragged rows or
// non-numeric cells raise CorruptFile; an unreadable path raises IoError.
SeriesCsv read_series_csv(const std::string& path);

// Writes a series CSV in the layout read_series_csv expects.  The label
// column is appended only when `label` is non-empty, in which case its
// length must equal x.cols.
void write_series_csv(const std::string& path, const SeriesCsv& s);

// A rectangular table of doubles with named columns, used for training
// histories and detection reports.
struct TableCsv {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
};

TableCsv read_table_csv(const std::string& path);
void write_table_csv(const std::string& path, const TableCsv& t);

}  // namespace cicada
