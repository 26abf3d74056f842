#include "sphervor/image.hpp"

#include <cmath>
#include <stdexcept>

namespace sphervor {

EquirectMap::EquirectMap(int height, int channels, double fill)
    : img_(2 * height, height, channels, fill) {}

EquirectMap::EquirectMap(ImageBuffer img) : img_(std::move(img)) {
  if (img_.width != 2 * img_.height || img_.height < 1 || img_.channels < 1)
    throw std::invalid_argument("EquirectMap: width must be 2*height, channels >= 1");
}

UnitDir EquirectMap::pixel_dir(int u, int v) const {
  double theta = M_PI * (v + 0.5) / img_.height;
  double phi = 2.0 * M_PI * (u + 0.5) / img_.width - M_PI;
  double st = std::sin(theta);
  return UnitDir::from_unit(Vec3(st * std::cos(phi), st * std::sin(phi), std::cos(theta)));
}

std::vector<double> EquirectMap::row_avg(int v) const {
  std::vector<double> avg(img_.channels, 0.0);
  for (int u = 0; u < img_.width; ++u) {
    const double* p = img_.at(u, v);
    for (int c = 0; c < img_.channels; ++c) avg[c] += p[c];
  }
  for (double& a : avg) a /= img_.width;
  return avg;
}

void EquirectMap::sample_into(const UnitDir& d, double* out) const {
  const int W = img_.width, H = img_.height, C = img_.channels;
  double theta = std::acos(std::clamp(d.z(), -1.0, 1.0));
  double phi = std::atan2(d.y(), d.x());
  double vf = theta / M_PI * H - 0.5;
  if (vf < 0.0 || vf > H - 1.0) {
    auto avg = row_avg(vf < 0.0 ? 0 : H - 1);
    for (int c = 0; c < C; ++c) out[c] = avg[c];
    return;
  }
  double uf = (phi + M_PI) / (2.0 * M_PI) * W - 0.5;
  int v0 = (int)std::floor(vf);
  int v1 = std::min(v0 + 1, H - 1);
  double fv = vf - v0;
  int u0 = (int)std::floor(uf);
  double fu = uf - u0;
  u0 = ((u0 % W) + W) % W;
  int u1 = (u0 + 1) % W;
  const double* p00 = img_.at(u0, v0);
  const double* p10 = img_.at(u1, v0);
  const double* p01 = img_.at(u0, v1);
  const double* p11 = img_.at(u1, v1);
  for (int c = 0; c < C; ++c)
    out[c] = (1 - fv) * ((1 - fu) * p00[c] + fu * p10[c]) +
             fv * ((1 - fu) * p01[c] + fu * p11[c]);
}

Eigen::VectorXd EquirectMap::sample(const UnitDir& d) const {
  Eigen::VectorXd out(img_.channels);
  sample_into(d, out.data());
  return out;
}

CubeMap::CubeMap(int res, int c, double fill) : face_res(res), channels(c) {
  for (auto& f : faces) f.assign(size_t(res) * res * c, fill);
}

UnitDir cubemap_texel_dir(int face, int i, int j, int face_res) {
  double s = 2.0 * (i + 0.5) / face_res - 1.0;
  double t = 2.0 * (j + 0.5) / face_res - 1.0;
  Vec3 v;
  switch (face) {
    case 0: v = Vec3(1, s, t); break;
    case 1: v = Vec3(-1, s, t); break;
    case 2: v = Vec3(s, 1, t); break;
    case 3: v = Vec3(s, -1, t); break;
    case 4: v = Vec3(s, t, 1); break;
    default: v = Vec3(s, t, -1); break;
  }
  return UnitDir(v);
}

void cubemap_dir_to_texel(const UnitDir& d, int face_res, int& face, int& i, int& j) {
  double x = d.x(), y = d.y(), z = d.z();
  double ax = std::fabs(x), ay = std::fabs(y), az = std::fabs(z);
  double s, t, m;
  if (ax >= ay && ax >= az) {
    face = x >= 0 ? 0 : 1;
    m = ax; s = y / m; t = z / m;
  } else if (ay >= az) {
    face = y >= 0 ? 2 : 3;
    m = ay; s = x / m; t = z / m;
  } else {
    face = z >= 0 ? 4 : 5;
    m = az; s = x / m; t = y / m;
  }
  i = std::clamp((int)std::floor((s + 1.0) * 0.5 * face_res), 0, face_res - 1);
  j = std::clamp((int)std::floor((t + 1.0) * 0.5 * face_res), 0, face_res - 1);
}

void cubemap_sample_nearest_into(const CubeMap& cm, const UnitDir& d, double* out) {
  int face, i, j;
  cubemap_dir_to_texel(d, cm.face_res, face, i, j);
  const double* p = cm.at(face, i, j);
  for (int c = 0; c < cm.channels; ++c) out[c] = p[c];
}

Eigen::VectorXd cubemap_sample_nearest(const CubeMap& cm, const UnitDir& d) {
  Eigen::VectorXd out(cm.channels);
  cubemap_sample_nearest_into(cm, d, out.data());
  return out;
}

Eigen::VectorXd cubemap_sample_bilinear(const CubeMap& cm, const UnitDir& d) {
  double x = d.x(), y = d.y(), z = d.z();
  double ax = std::fabs(x), ay = std::fabs(y), az = std::fabs(z);
  int face;
  double s, t;
  if (ax >= ay && ax >= az) {
    face = x >= 0 ? 0 : 1; s = y / ax; t = z / ax;
  } else if (ay >= az) {
    face = y >= 0 ? 2 : 3; s = x / ay; t = z / ay;
  } else {
    face = z >= 0 ? 4 : 5; s = x / az; t = y / az;
  }
  const int R = cm.face_res, C = cm.channels;
  double fi = (s + 1.0) * 0.5 * R - 0.5;
  double fj = (t + 1.0) * 0.5 * R - 0.5;
  int i0 = std::clamp((int)std::floor(fi), 0, R - 1);
  int j0 = std::clamp((int)std::floor(fj), 0, R - 1);
  int i1 = std::min(i0 + 1, R - 1);
  int j1 = std::min(j0 + 1, R - 1);
  double fu = std::clamp(fi - i0, 0.0, 1.0);
  double fv = std::clamp(fj - j0, 0.0, 1.0);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(C);
  const double* p00 = cm.at(face, i0, j0);
  const double* p10 = cm.at(face, i1, j0);
  const double* p01 = cm.at(face, i0, j1);
  const double* p11 = cm.at(face, i1, j1);
  for (int c = 0; c < C; ++c)
    out[c] = (1 - fv) * ((1 - fu) * p00[c] + fu * p10[c]) +
             fv * ((1 - fu) * p01[c] + fu * p11[c]);
  return out;
}

CubeMap cubemap_from_equirect(const EquirectMap& eq, int face_res) {
  CubeMap cm(face_res, eq.channels());
  for (int f = 0; f < 6; ++f)
    for (int j = 0; j < face_res; ++j)
      for (int i = 0; i < face_res; ++i)
        eq.sample_into(cubemap_texel_dir(f, i, j, face_res), cm.at(f, i, j));
  return cm;
}

}  // namespace sphervor
