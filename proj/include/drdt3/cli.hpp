// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// The `drdt3` command line: gen-data, train, eval, check, plot.

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace drdt3::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // bad flags, config, inputs or I/O
inline constexpr int kExitCheck = 2;  // a check or invariant failed
inline constexpr int kExitAbort = 3;  // training hit a non-finite loss

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

/// Trailing moving average: point t averages values max(0, t−window+1)..t.
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Numeric CSV with a header line. Throws FormatError naming the 1-based
/// line for ragged or non-numeric rows, and for a missing header.
CsvTable parse_numeric_csv(const std::string& text, const std::string& source);

/// Learning-curve SVG of every column after the first against the first,
/// each drawn raw (faint) and smoothed. The raw table is embedded in a
/// comment. Throws FormatError when there are no rows.
std::string render_svg(const CsvTable& table, std::size_t window, const std::string& title);

}  // namespace drdt3::cli
