#pragma once

#include "smoothcal/types.hpp"

#include <string>
#include <vector>

namespace smoothcal {

// Shortest-safe round-trip text for a double: 17 significant digits.
std::string format_double(double v);

// Comma-separated row of values, each via format_double.
std::string csv_row(const std::vector<double>& values);

// Splits one CSV line on commas; no quoting support.
std::vector<std::string> split_csv_line(const std::string& line);

double parse_double(const std::string& s);

}  // namespace smoothcal
