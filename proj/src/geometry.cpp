#include "sphervor/geometry.hpp"

#include <stdexcept>

namespace sphervor {

std::vector<UnitDir> fibonacci_sphere(int n, double rotation) {
  if (n < 1) throw std::invalid_argument("fibonacci_sphere: n must be >= 1");
  std::vector<UnitDir> dirs;
  dirs.reserve(n);
  for (int i = 0; i < n; ++i) {
    double z = 1.0 - 2.0 * i / n;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double theta = i * kGoldenAngle + rotation;
    dirs.push_back(UnitDir::from_unit(Vec3(r * std::cos(theta), r * std::sin(theta), z)));
  }
  return dirs;
}

UnitDir uniform_dir(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uz(-1.0, 1.0);
  std::uniform_real_distribution<double> ua(0.0, 2.0 * M_PI);
  double z = uz(rng);
  double a = ua(rng);
  double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return UnitDir::from_unit(Vec3(r * std::cos(a), r * std::sin(a), z));
}

uint64_t splitmix64(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + stream * 0x9E3779B97F4A7C15ull + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace sphervor
