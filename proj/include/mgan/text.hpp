#pragma once

#include <string>

namespace mgan {

/// Shortest round-trip decimal representation.
std::string format_double(double v);

} // namespace mgan
