// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "safesteer/diffnum/dense.hpp"

namespace safesteer {

// Plain-text point tables:
//
//   table   := { line '\n' }
//   line    := blank | comment | row
//   comment := optional-space '#' any-text
//   row     := number { ',' number }      (spaces around numbers allowed)
//
// Every row must have the same number of columns. Numbers use the C locale
// and are written in shortest round-trip form.
std::vector<diffnum::VectorXd> read_point_table(std::istream& in);
std::vector<diffnum::VectorXd> load_point_table(const std::string& path);
void write_point_table(std::ostream& out, const std::vector<diffnum::VectorXd>& points);

std::string format_double(double v);
// Full-string parse; throws ConfigError on trailing garbage.
double parse_double(const std::string& text);

}  // namespace safesteer
