#include "sphervor/targets.hpp"

#include <cmath>
#include <stdexcept>

#include "sphervor/sh.hpp"

namespace sphervor {

namespace {

struct CellSpec {
  Vec3 site;
  Vec3 color;
};

void nearest_cell(const std::vector<CellSpec>& cells, const UnitDir& d, double* out) {
  int best = 0;
  double bd = cells[0].site.dot(d.vec());
  for (size_t k = 1; k < cells.size(); ++k) {
    double dk = cells[k].site.dot(d.vec());
    if (dk > bd) {
      bd = dk;
      best = (int)k;
    }
  }
  for (int c = 0; c < 3; ++c) out[c] = cells[best].color[c];
}

Eigen::MatrixXd shmix_coeffs() {
  // fixed mixture, mostly inside [0,1] with a 0.5 mean
  Eigen::MatrixXd coeffs(9, 3);
  std::mt19937_64 rng(0xC0FFEEull);
  std::normal_distribution<double> n(0.0, 0.12);
  for (int i = 0; i < 9; ++i)
    for (int c = 0; c < 3; ++c) coeffs(i, c) = i == 0 ? 0.5 / 0.28209479177387814 : n(rng);
  return coeffs;
}

}  // namespace

BuiltinTarget builtin_target(const std::string& name) {
  BuiltinTarget t;
  t.name = name;
  t.channels = 3;
  if (name == "cells2") {
    std::vector<CellSpec> cells = {
        {Vec3(0.3, -0.4, 0.866).normalized(), Vec3(0.85, 0.25, 0.1)},
        {-Vec3(0.3, -0.4, 0.866).normalized(), Vec3(0.1, 0.3, 0.8)},
    };
    t.fn = [cells](const UnitDir& d, double* out) { nearest_cell(cells, d, out); };
    return t;
  }
  if (name == "cells4") {
    const double s = 1.0 / std::sqrt(3.0);
    Eigen::AngleAxisd rot(0.41, Vec3(0.2, 0.9, 0.38).normalized());
    std::vector<CellSpec> cells = {
        {rot * Vec3(s, s, s), Vec3(0.9, 0.15, 0.1)},
        {rot * Vec3(s, -s, -s), Vec3(0.1, 0.8, 0.2)},
        {rot * Vec3(-s, s, -s), Vec3(0.15, 0.25, 0.9)},
        {rot * Vec3(-s, -s, s), Vec3(0.95, 0.85, 0.2)},
    };
    t.fn = [cells](const UnitDir& d, double* out) { nearest_cell(cells, d, out); };
    return t;
  }
  if (name == "glint5deg") {
    const Vec3 center = Vec3(0.3, -0.2, 0.93).normalized();
    const double cos5 = std::cos(5.0 * M_PI / 180.0);
    t.fn = [center, cos5](const UnitDir& d, double* out) {
      double v = center.dot(d.vec()) > cos5 ? 1.0 : 0.0;
      out[0] = out[1] = out[2] = v;
    };
    return t;
  }
  if (name.rfind("const", 0) == 0) {
    double v;
    try {
      v = std::stod(name.substr(5));
    } catch (...) {
      throw std::invalid_argument("builtin_target: bad constant in " + name);
    }
    t.fn = [v](const UnitDir&, double* out) { out[0] = out[1] = out[2] = v; };
    return t;
  }
  if (name == "shmixL2") {
    auto coeffs = shmix_coeffs();
    t.fn = [coeffs](const UnitDir& d, double* out) {
      double y[9];
      sh_basis(2, d.vec(), y);
      for (int c = 0; c < 3; ++c) {
        out[c] = 0.0;
        for (int i = 0; i < 9; ++i) out[c] += y[i] * coeffs(i, c);
      }
    };
    return t;
  }
  throw std::invalid_argument("builtin_target: unknown target " + name);
}

std::vector<UnitDir> sample_dirs(int n, bool fibonacci, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_dirs: n must be >= 1");
  if (fibonacci) return fibonacci_sphere(n);
  std::vector<UnitDir> dirs;
  dirs.reserve(n);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) dirs.push_back(uniform_dir(rng));
  return dirs;
}

SampleSet sample_target(const BuiltinTarget& t, int n, bool fibonacci, uint64_t seed) {
  SampleSet s;
  s.source = "builtin:" + t.name;
  s.dirs = sample_dirs(n, fibonacci, seed);
  s.values.resize(n, t.channels);
  std::vector<double> v(t.channels);
  for (int i = 0; i < n; ++i) {
    t.fn(s.dirs[i], v.data());
    for (int c = 0; c < t.channels; ++c) s.values(i, c) = v[c];
  }
  return s;
}

SampleSet sample_equirect(const EquirectMap& map, int n, bool fibonacci, uint64_t seed) {
  SampleSet s;
  s.source = "equirect";
  s.dirs = sample_dirs(n, fibonacci, seed);
  s.values.resize(n, map.channels());
  std::vector<double> v(map.channels());
  for (int i = 0; i < n; ++i) {
    map.sample_into(s.dirs[i], v.data());
    for (int c = 0; c < map.channels(); ++c) s.values(i, c) = v[c];
  }
  return s;
}

SampleSet sample_model(const SphericalModel& m, int n, bool fibonacci, uint64_t seed) {
  check_finite(m);
  SampleSet s;
  s.source = "model";
  s.dirs = sample_dirs(n, fibonacci, seed);
  const int C = m.channels();
  s.values.resize(n, C);
  std::vector<double> v(C);
  for (int i = 0; i < n; ++i) {
    eval_into(m, s.dirs[i], v.data());
    for (int c = 0; c < C; ++c) s.values(i, c) = v[c];
  }
  return s;
}

EquirectMap render_equirect(const SphericalModel& m, int height) {
  check_finite(m);
  EquirectMap map(height, m.channels());
  std::vector<double> v(m.channels());
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x) {
      eval_into(m, map.pixel_dir(x, y), v.data());
      double* p = map.img().at(x, y);
      for (int c = 0; c < m.channels(); ++c) p[c] = v[c];
    }
  return map;
}

}  // namespace sphervor
