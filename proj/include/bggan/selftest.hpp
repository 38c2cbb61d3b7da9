#pragma once

#include <iosfwd>

namespace bggan {

// Normalization equivalence, gradient checks, loss-weight probes, and a
// short synthetic training smoke. Prints one line per check.
bool run_selftest(std::ostream& os);

}  // namespace bggan
