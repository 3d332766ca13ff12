#pragma once

#include <charconv>
#include <string>

namespace bfgpu {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Fixed-precision text, used for report columns.
inline std::string format_fixed(double v, int digits)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
    return std::string(buf, res.ptr);
}

}  // namespace bfgpu
