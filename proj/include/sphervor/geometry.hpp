#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace sphervor {

using Vec3 = Eigen::Vector3d;

// Direction on the unit sphere. Normalizes on construction; from_unit skips
// the division for inputs that are already unit length.
class UnitDir {
 public:
  UnitDir() : v_(0, 0, 1) {}
  explicit UnitDir(const Vec3& v) : v_(v.normalized()) {}
  UnitDir(double x, double y, double z) : UnitDir(Vec3(x, y, z)) {}

  static UnitDir from_unit(const Vec3& v) {
    UnitDir d;
    d.v_ = v;
    return d;
  }

  const Vec3& vec() const { return v_; }
  operator const Vec3&() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }

 private:
  Vec3 v_;
};

inline double dot(const UnitDir& a, const UnitDir& b) { return a.vec().dot(b.vec()); }

// Mirror direction: 2(v.n)n - v. Result is unit up to roundoff, no renormalization.
inline UnitDir reflect(const UnitDir& v, const UnitDir& n) {
  return UnitDir::from_unit(2.0 * v.vec().dot(n.vec()) * n.vec() - v.vec());
}

constexpr double kGoldenAngle = 2.399963229728653;  // pi * (3 - sqrt(5))

// Golden-angle spiral lattice. z_i = 1 - 2i/n, azimuth i * golden_angle + rotation,
// so n = 1 yields exactly (0,0,1) for any rotation.
std::vector<UnitDir> fibonacci_sphere(int n, double rotation = 0.0);

// Uniform direction via z in [-1,1], azimuth in [0,2pi).
UnitDir uniform_dir(std::mt19937_64& rng);

// Deterministic per-stream seed derivation.
uint64_t splitmix64(uint64_t seed, uint64_t stream);

}  // namespace sphervor
