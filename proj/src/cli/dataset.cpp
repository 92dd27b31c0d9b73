#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>

#include "abgreg/cli.hpp"
#include "abgreg/error.hpp"

namespace abgreg::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Comma-separated fields; double quotes group commas and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

struct RawCsv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawCsv read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) data_error("cannot open CSV file " + path.string());
  RawCsv csv;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      csv.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != csv.header.size()) {
      data_error(path.string() + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                 " fields, header has " + std::to_string(csv.header.size()));
    }
    csv.rows.push_back(std::move(fields));
  }
  if (!have_header) data_error(path.string() + ": missing header row");
  return csv;
}

std::size_t column_index(const RawCsv& csv, const std::string& name, const fs::path& path) {
  for (std::size_t k = 0; k < csv.header.size(); ++k) {
    if (csv.header[k] == name) return k;
  }
  data_error(path.string() + ": missing column '" + name + "'");
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column, const fs::path& path) {
  if (cell.empty()) {
    data_error(path.string() + ": missing value in row " + std::to_string(row) + ", column '" + column + "'");
  }
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    data_error(path.string() + ": nonnumeric value '" + cell + "' in row " + std::to_string(row) + ", column '" +
               column + "'");
  }
  return v;
}

int parse_label(const std::string& cell, std::size_t row, const std::string& column, const fs::path& path) {
  const double v = parse_number(cell, row, column, path);
  if (v != std::floor(v) || std::abs(v) > 2e9) {
    data_error(path.string() + ": domain label '" + cell + "' in row " + std::to_string(row) + " is not an integer");
  }
  return static_cast<int>(v);
}

}  // namespace

Dataset ingest_csv(const fs::path& path, const ColumnMap& columns) {
  const RawCsv csv = read_csv(path);
  const std::size_t iy = column_index(csv, columns.response, path);
  const std::size_t iw = column_index(csv, columns.weight, path);
  std::vector<std::size_t> ix;
  for (const auto& name : columns.auxiliaries) ix.push_back(column_index(csv, name, path));
  std::optional<std::size_t> id;
  if (columns.domain) id = column_index(csv, *columns.domain, path);

  Dataset ds;
  ds.rows = static_cast<Index>(csv.rows.size());
  ds.aux.assign(ix.size(), {});
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::size_t row_no = r + 1;
    ds.y.push_back(parse_number(row[iy], row_no, columns.response, path));
    const double w = parse_number(row[iw], row_no, columns.weight, path);
    if (!(w > 0.0)) {
      data_error(path.string() + ": nonpositive weight " + row[iw] + " in row " + std::to_string(row_no));
    }
    ds.weight.push_back(w);
    for (std::size_t k = 0; k < ix.size(); ++k) {
      ds.aux[k].push_back(parse_number(row[ix[k]], row_no, columns.auxiliaries[k], path));
    }
    if (id) ds.domain.push_back(parse_label(row[*id], row_no, *columns.domain, path));
  }
  if (ds.rows == 0) data_error(path.string() + ": no data rows");
  return ds;
}

Table read_numeric_columns(const fs::path& path, const std::vector<std::string>& columns,
                           const std::optional<std::string>& label_column) {
  const RawCsv csv = read_csv(path);
  std::vector<std::size_t> idx;
  for (const auto& name : columns) idx.push_back(column_index(csv, name, path));
  std::optional<std::size_t> il;
  if (label_column) il = column_index(csv, *label_column, path);
  Table t;
  t.names = columns;
  t.values.resize(static_cast<Index>(csv.rows.size()), static_cast<Index>(columns.size()));
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      t.values(static_cast<Index>(r), static_cast<Index>(k)) = parse_number(csv.rows[r][idx[k]], r + 1, columns[k], path);
    }
    if (il) t.labels.push_back(parse_label(csv.rows[r][*il], r + 1, *label_column, path));
  }
  if (csv.rows.empty()) data_error(path.string() + ": no data rows");
  return t;
}

}  // namespace abgreg::cli
