#pragma once

#include <string>

namespace gathermos {

// Shortest decimal rendering that parses back to the same double.
std::string format_roundtrip(double v);

// Fixed 4-decimal rendering ("%.4f"), used for reals inside prompts.
std::string format_fixed4(double v);

// 6-significant-digit rendering ("%.6g"), used for the feature cache.
std::string format_sig6(double v);

// Parses a real from the whole string (leading/trailing whitespace allowed).
// Throws std::invalid_argument if anything else remains.
double parse_real(const std::string& s);

std::string replace_all(std::string s, const std::string& from, const std::string& to);

}  // namespace gathermos
