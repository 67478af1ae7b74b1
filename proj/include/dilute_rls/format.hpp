#pragma once

// Shortest round-trip decimal formatting for CSV output. Output is
// byte-identical for identical doubles, and parse_double(format_double(x)) == x.

#include <array>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <system_error>

#include "dilute_rls/errors.hpp"

namespace dilute_rls {

inline std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view text) {
    if (text == "nan") return std::nan("");
    if (text == "inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw ContractViolation("parse_double: invalid number '" + std::string(text) + "'");
    return value;
}

template <typename Int>
Int parse_integer(std::string_view text) {
    Int value{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw ContractViolation("parse_integer: invalid integer '" + std::string(text) + "'");
    return value;
}

}  // namespace dilute_rls
