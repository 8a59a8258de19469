#pragma once

#include <string>

namespace twoscale {

/// Locale-independent shortest-roundtrip-safe rendering with 17 significant
/// digits ("nan", "inf", "-inf" for non-finite values).
std::string format_double(double v);

}  // namespace twoscale
