#pragma once

#include "sphervor/geometry.hpp"

namespace sphervor {

// Real spherical harmonics, orthonormal over the sphere, graphics sign
// convention (no Condon-Shortley phase). Basis index is l*(l+1)+m for
// l = 0..degree, m = -l..l.
inline int sh_count(int degree) { return (degree + 1) * (degree + 1); }
inline int sh_index(int l, int m) { return l * (l + 1) + m; }

// Writes sh_count(degree) values; d must be unit length.
void sh_basis(int degree, const Vec3& d, double* out);

}  // namespace sphervor
