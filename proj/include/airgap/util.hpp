#pragma once

#include <charconv>
#include <string>

namespace airgap {

// Shortest round-trip decimal form, locale-free ('.' decimal point always).
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace airgap
