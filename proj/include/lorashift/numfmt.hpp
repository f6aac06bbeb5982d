#pragma once

#include <string>
#include <string_view>

namespace lorashift {

/// Exact hexadecimal float, e.g. "0x1.8p+1", "-0x1.999999999999ap-4".
std::string format_hexfloat(double v);
/// Inverse of format_hexfloat. Throws FormatError on malformed input.
double parse_hexfloat(std::string_view s);

/// Shortest decimal string that round-trips to the same double.
std::string format_shortest(double v);

}  // namespace lorashift
