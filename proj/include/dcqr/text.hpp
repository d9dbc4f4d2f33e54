#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dcqr {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

// Whole-token parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

}  // namespace dcqr
