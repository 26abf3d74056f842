#pragma once

#include <array>
#include <vector>

#include "sphervor/geometry.hpp"

namespace sphervor {

// Row-major interleaved pixel buffer, row 0 at the top.
struct ImageBuffer {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(size_t(w) * h * c, fill) {}

  double* at(int u, int v) { return data.data() + (size_t(v) * width + u) * channels; }
  const double* at(int u, int v) const {
    return data.data() + (size_t(v) * width + u) * channels;
  }
};

// Latitude-longitude map over the full sphere, width == 2*height.
// Pixel (u,v) center maps to polar angle theta = pi*(v+0.5)/height measured
// from +Z and azimuth phi = 2*pi*(u+0.5)/width - pi, with
// dir = (sin t cos p, sin t sin p, cos t).
class EquirectMap {
 public:
  EquirectMap() = default;
  EquirectMap(int height, int channels, double fill = 0.0);
  explicit EquirectMap(ImageBuffer img);

  const ImageBuffer& img() const { return img_; }
  ImageBuffer& img() { return img_; }
  int width() const { return img_.width; }
  int height() const { return img_.height; }
  int channels() const { return img_.channels; }

  UnitDir pixel_dir(int u, int v) const;

  // Bilinear with longitudinal wrap. Inside the half-pixel polar caps the
  // row average is returned so the field is continuous at the poles.
  void sample_into(const UnitDir& d, double* out) const;
  Eigen::VectorXd sample(const UnitDir& d) const;

 private:
  ImageBuffer img_;
  std::vector<double> row_avg(int v) const;
};

// Face order +X,-X,+Y,-Y,+Z,-Z. Texel (i,j) of a face has local coordinates
// s = 2(i+0.5)/res - 1, t = 2(j+0.5)/res - 1; the two non-dominant world axes
// in xyz order carry (s,t) and the dominant axis carries the face sign:
//   +X:( 1,s,t)  -X:(-1,s,t)  +Y:(s, 1,t)  -Y:(s,-1,t)  +Z:(s,t, 1)  -Z:(s,t,-1)
// Faces are selected by the dominant axis of the direction (ties x>=y>=z).
struct CubeMap {
  int face_res = 0, channels = 0;
  std::array<std::vector<double>, 6> faces;

  CubeMap() = default;
  CubeMap(int res, int c, double fill = 0.0);

  double* at(int face, int i, int j) {
    return faces[face].data() + (size_t(j) * face_res + i) * channels;
  }
  const double* at(int face, int i, int j) const {
    return faces[face].data() + (size_t(j) * face_res + i) * channels;
  }
};

UnitDir cubemap_texel_dir(int face, int i, int j, int face_res);
void cubemap_dir_to_texel(const UnitDir& d, int face_res, int& face, int& i, int& j);

void cubemap_sample_nearest_into(const CubeMap& cm, const UnitDir& d, double* out);
Eigen::VectorXd cubemap_sample_nearest(const CubeMap& cm, const UnitDir& d);
// Bilinear within the selected face, clamped at face edges.
Eigen::VectorXd cubemap_sample_bilinear(const CubeMap& cm, const UnitDir& d);

// Point-sampled resampling of an equirect map onto a cubemap.
CubeMap cubemap_from_equirect(const EquirectMap& eq, int face_res);

}  // namespace sphervor
