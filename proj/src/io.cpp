#include "bsr/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bsr/error.hpp"

namespace bsr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

// Rows of whitespace-separated fields with comments and blank lines removed.
std::vector<std::vector<std::string>> table_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::stringstream fields(line);
    std::vector<std::string> row;
    std::string f;
    while (fields >> f) row.push_back(f);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

Op table_symbol(const std::string& s, std::size_t row) {
  const auto op = op_from_symbol(s);
  if (!op) throw ValidationError("row " + std::to_string(row) + ": unknown operator '" + s + "'");
  return *op;
}

double table_number(const std::string& s, std::size_t row) {
  double v = 0.0;
  if (!parse_number(s, v)) throw ValidationError("row " + std::to_string(row) + ": '" + s + "' is not a number");
  return v;
}

}  // namespace

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

CsvTable parse_csv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  CsvTable table;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);  // UTF-8 BOM
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (!have_header) {
      table.header = cells;
      for (const auto& h : cells)
        if (h.empty()) throw ValidationError("CSV header has an empty column name");
      table.columns.assign(cells.size(), {});
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size())
      throw ValidationError("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(table.header.size()));
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v = 0.0;
      if (!parse_number(cells[j], v) || !std::isfinite(v))
        throw ValidationError("CSV line " + std::to_string(line_no) + ", column '" + table.header[j] +
                              "': '" + cells[j] + "' is not a finite number");
      table.columns[j].push_back(v);
    }
  }
  if (!have_header) throw ValidationError("CSV is empty");
  if (table.columns.empty() || table.columns.front().empty()) throw ValidationError("CSV has no data rows");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text_file(path)); }

Dataset dataset_from_csv(const CsvTable& table, const std::optional<std::string>& target) {
  if (table.header.size() < 2) throw ValidationError("CSV needs at least one feature column and a target column");
  std::size_t t = table.header.size() - 1;
  if (target) {
    const auto it = std::find(table.header.begin(), table.header.end(), *target);
    if (it == table.header.end()) throw ValidationError("target column '" + *target + "' not found in CSV header");
    t = static_cast<std::size_t>(it - table.header.begin());
  }
  std::vector<std::vector<double>> features;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j == t) continue;
    features.push_back(table.columns[j]);
    names.push_back(table.header[j]);
  }
  return Dataset(std::move(features), table.columns[t], std::move(names), table.header[t]);
}

void write_csv(std::ostream& out, const Dataset& data) {
  for (const auto& name : data.feature_names()) out << name << ',';
  out << data.target_name() << '\n';
  for (std::size_t k = 0; k < data.size(); ++k) {
    for (std::size_t j = 0; j < data.n_features(); ++j) out << format_real(data.column(j)[k]) << ',';
    out << format_real(data.target()[k]) << '\n';
  }
}

PriorHyperparams parse_prior_table(const std::string& text) {
  PriorHyperparams hp;
  const auto rows = table_rows(text);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i == 0 && r.front() == "symbol") continue;
    if (r.size() != 3) throw ValidationError("prior table row " + std::to_string(i + 1) + ": expected 'symbol alpha beta'");
    const Op op = table_symbol(r[0], i + 1);
    if (hp.covers(op)) throw ValidationError("prior table lists '" + r[0] + "' twice");
    hp.alpha[op] = table_number(r[1], i + 1);
    hp.beta[op] = table_number(r[2], i + 1);
    if (!std::isfinite(hp.alpha[op]) || !(hp.beta[op] >= 0.0) || !std::isfinite(hp.beta[op]))
      throw ValidationError("prior table row " + std::to_string(i + 1) + ": need finite alpha and beta >= 0");
  }
  if (hp.alpha.empty()) throw ValidationError("prior table is empty");
  return hp;
}

PriorHyperparams read_prior_table(const std::filesystem::path& path) { return parse_prior_table(read_text_file(path)); }

void write_prior_table(std::ostream& out, const PriorHyperparams& hp) {
  out << "symbol\talpha\tbeta\n";
  for (Op op : all_ops()) {
    if (!hp.covers(op)) continue;
    out << symbol(op) << '\t' << format_real(hp.alpha.at(op)) << '\t' << format_real(hp.beta.at(op)) << '\n';
  }
}

TargetMoments parse_target_moments(const std::string& text) {
  TargetMoments t;
  const auto rows = table_rows(text);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i == 0 && r.front() == "symbol") continue;
    if (r.size() != 3)
      throw ValidationError("targets row " + std::to_string(i + 1) + ": expected 'symbol mean mean_square'");
    const Op op = table_symbol(r[0], i + 1);
    if (t.targets.count(op)) throw ValidationError("targets list '" + r[0] + "' twice");
    t.targets[op] = {table_number(r[1], i + 1), table_number(r[2], i + 1)};
  }
  t.validate();
  return t;
}

TargetMoments read_target_moments(const std::filesystem::path& path) {
  return parse_target_moments(read_text_file(path));
}

}  // namespace bsr
