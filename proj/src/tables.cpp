// SPDX-License-Identifier: Apache-2.0
#include "safesteer/tables.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "safesteer/errors.hpp"

namespace safesteer {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  if (!t.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (t.empty() || ec != std::errc() || ptr != end) throw ConfigError("not a number: '" + text + "'");
  return v;
}

std::vector<diffnum::VectorXd> read_point_table(std::istream& in) {
  std::vector<diffnum::VectorXd> points;
  std::string line;
  int line_no = 0;
  diffnum::Index cols = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::vector<double> values;
    std::stringstream ss(t);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(parse_double(cell));
      } catch (const ConfigError& e) {
        throw ConfigError(e.what(), line_no);
      }
    }
    if (!t.empty() && t.back() == ',') throw ConfigError("trailing comma", line_no);
    if (cols >= 0 && static_cast<diffnum::Index>(values.size()) != cols) {
      throw ConfigError("expected " + std::to_string(cols) + " columns, got " + std::to_string(values.size()), line_no);
    }
    cols = static_cast<diffnum::Index>(values.size());
    points.push_back(Eigen::Map<const diffnum::VectorXd>(values.data(), cols));
  }
  return points;
}

std::vector<diffnum::VectorXd> load_point_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open point table '" + path + "'");
  return read_point_table(in);
}

void write_point_table(std::ostream& out, const std::vector<diffnum::VectorXd>& points) {
  for (const auto& p : points) {
    for (diffnum::Index i = 0; i < p.size(); ++i) {
      if (i) out << ',';
      out << format_double(p[i]);
    }
    out << '\n';
  }
}

}  // namespace safesteer
