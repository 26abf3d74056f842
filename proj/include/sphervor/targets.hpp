#pragma once

#include <functional>
#include <string>

#include "sphervor/fitter.hpp"
#include "sphervor/image.hpp"

namespace sphervor {

// Named analytic targets for fitting experiments:
//   cells2    two-cell piecewise-constant RGB partition
//   cells4    four-cell piecewise-constant RGB partition
//   glint5deg white 5-degree cap on black
//   const<v>  constant value v in every channel, e.g. const0.3
//   shmixL2   fixed random degree-2 harmonic mixture
struct BuiltinTarget {
  std::string name;
  int channels = 3;
  std::function<void(const UnitDir&, double*)> fn;
};

BuiltinTarget builtin_target(const std::string& name);

// Fibonacci-lattice directions (deterministic) or uniform random ones.
std::vector<UnitDir> sample_dirs(int n, bool fibonacci, uint64_t seed);

SampleSet sample_target(const BuiltinTarget& t, int n, bool fibonacci = true,
                        uint64_t seed = 0);
SampleSet sample_equirect(const EquirectMap& map, int n, bool fibonacci = true,
                          uint64_t seed = 0);
SampleSet sample_model(const SphericalModel& m, int n, bool fibonacci = true,
                       uint64_t seed = 0);

// Evaluates a model at every pixel center of an equirect grid.
EquirectMap render_equirect(const SphericalModel& m, int height);

}  // namespace sphervor
