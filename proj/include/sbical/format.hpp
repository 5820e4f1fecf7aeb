#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sbical {

// Shortest decimal string that parses back to exactly `v`. inf/nan are
// written as "inf", "-inf", "nan".
std::string format_double(double v);
// Throws InvalidArgument unless the whole of `text` is a number.
double parse_double(std::string_view text);

std::string join_doubles(std::span<const double> values, std::string_view sep);
std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

}  // namespace sbical
