#pragma once

#include "netslic/model.hpp"

namespace netslic {

/// Ten 345 kV lines of the IEEE 118-bus case (buses 30 and 65 of degree
/// three, bus 9 without load) over a lumped lower-voltage system; slack at
/// bus 69, RQM on (30,38) at bus 30.
NetworkSpec builtin_network();

/// `lines` monitored lines 1-2-...-(lines+1) fed from an outside slack bus,
/// RQM on (1,2) at bus 1. With `loaded_interior` false the interior buses
/// carry no injection and no other line, so their residual currents vanish.
NetworkSpec chain_network(int lines, bool loaded_interior = true);

}  // namespace netslic
