#pragma once

#include <string>
#include <vector>

namespace gcanon {

/// Time-indexed samples of a state type plus per-sample scalar diagnostics.
/// `energy` holds H for full orbits and K for guiding-center runs;
/// `constraint_residual` is only filled by the guiding-center integrator.
template <class State>
struct Trajectory {
  std::vector<State> states;
  std::vector<double> energy;
  std::vector<double> constraint_residual;
  std::vector<std::string> warnings;

  std::size_t size() const { return states.size(); }
  bool empty() const { return states.empty(); }
};

}  // namespace gcanon
