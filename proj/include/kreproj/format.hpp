#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace kreproj {

/// Shortest decimal text that parses back to exactly `value`.
/// Non-finite values print as "inf", "-inf", "nan".
inline std::string format_shortest(double value)
{
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

}  // namespace kreproj
