#include "sphervor/image_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sphervor/errors.hpp"

namespace sphervor {

namespace {

const char* kFaceSuffix[6] = {"_px", "_nx", "_py", "_ny", "_pz", "_nz"};

void byteswap_floats(std::vector<float>& v) {
  for (float& f : v) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    u = __builtin_bswap32(u);
    std::memcpy(&f, &u, 4);
  }
}

}  // namespace

void write_pfm(const std::string& path, const ImageBuffer& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_pfm: channels must be 1 or 3");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pfm: cannot open " + path);
  const bool le = std::endian::native == std::endian::little;
  f << (img.channels == 3 ? "PF" : "Pf") << "\n"
    << img.width << " " << img.height << "\n"
    << (le ? "-1.0" : "1.0") << "\n";
  std::vector<float> row(size_t(img.width) * img.channels);
  for (int v = img.height - 1; v >= 0; --v) {
    const double* src = img.at(0, v);
    for (size_t i = 0; i < row.size(); ++i) row[i] = (float)src[i];
    f.write((const char*)row.data(), row.size() * 4);
  }
  if (!f) throw std::runtime_error("write_pfm: write failed for " + path);
}

ImageBuffer read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("read_pfm: cannot open " + path);
  std::string magic;
  f >> magic;
  int channels;
  if (magic == "PF") channels = 3;
  else if (magic == "Pf") channels = 1;
  else throw FormatError("read_pfm: bad magic in " + path);
  int w, h;
  double scale;
  f >> w >> h >> scale;
  if (!f || w < 1 || h < 1 || scale == 0.0)
    throw FormatError("read_pfm: bad header in " + path);
  f.get();  // single whitespace after scale
  ImageBuffer img(w, h, channels);
  std::vector<float> row(size_t(w) * channels);
  const bool file_le = scale < 0.0;
  const bool host_le = std::endian::native == std::endian::little;
  for (int v = h - 1; v >= 0; --v) {
    f.read((char*)row.data(), row.size() * 4);
    if (!f) throw FormatError("read_pfm: truncated data in " + path);
    if (file_le != host_le) byteswap_floats(row);
    double* dst = img.at(0, v);
    for (size_t i = 0; i < row.size(); ++i) dst[i] = row[i];
  }
  return img;
}

void write_ppm(const std::string& path, const ImageBuffer& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_ppm: channels must be 1 or 3");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> row(size_t(img.width) * 3);
  for (int v = 0; v < img.height; ++v) {
    const double* src = img.at(0, v);
    for (int u = 0; u < img.width; ++u)
      for (int c = 0; c < 3; ++c) {
        double x = src[u * img.channels + (img.channels == 3 ? c : 0)];
        x = std::clamp(x, 0.0, 1.0);
        row[u * 3 + c] = (uint8_t)std::lround(std::pow(x, 1.0 / 2.2) * 255.0);
      }
    f.write((const char*)row.data(), row.size());
  }
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

ImageBuffer read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("read_ppm: cannot open " + path);
  std::string magic;
  int w, h, maxval;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || w < 1 || h < 1 || maxval != 255)
    throw FormatError("read_ppm: unsupported header in " + path);
  f.get();
  ImageBuffer img(w, h, 3);
  std::vector<uint8_t> row(size_t(w) * 3);
  for (int v = 0; v < h; ++v) {
    f.read((char*)row.data(), row.size());
    if (!f) throw FormatError("read_ppm: truncated data in " + path);
    double* dst = img.at(0, v);
    for (size_t i = 0; i < row.size(); ++i)
      dst[i] = std::pow(row[i] / 255.0, 2.2);
  }
  return img;
}

void write_cubemap_pfm(const std::string& path, const CubeMap& cm) {
  ImageBuffer img(cm.face_res, 6 * cm.face_res, cm.channels);
  for (int fi = 0; fi < 6; ++fi)
    for (int j = 0; j < cm.face_res; ++j)
      std::memcpy(img.at(0, fi * cm.face_res + j), cm.at(fi, 0, j),
                  sizeof(double) * cm.face_res * cm.channels);
  write_pfm(path, img);
}

CubeMap read_cubemap_pfm(const std::string& path) {
  ImageBuffer img = read_pfm(path);
  if (img.height != 6 * img.width)
    throw FormatError("read_cubemap_pfm: height must be 6*width in " + path);
  CubeMap cm(img.width, img.channels);
  for (int fi = 0; fi < 6; ++fi)
    for (int j = 0; j < cm.face_res; ++j)
      std::memcpy(cm.at(fi, 0, j), img.at(0, fi * cm.face_res + j),
                  sizeof(double) * cm.face_res * cm.channels);
  return cm;
}

void write_cubemap_pfm_faces(const std::string& prefix, const CubeMap& cm) {
  for (int fi = 0; fi < 6; ++fi) {
    ImageBuffer img(cm.face_res, cm.face_res, cm.channels);
    for (int j = 0; j < cm.face_res; ++j)
      std::memcpy(img.at(0, j), cm.at(fi, 0, j),
                  sizeof(double) * cm.face_res * cm.channels);
    write_pfm(prefix + kFaceSuffix[fi] + ".pfm", img);
  }
}

CubeMap read_cubemap_pfm_faces(const std::string& prefix) {
  CubeMap cm;
  for (int fi = 0; fi < 6; ++fi) {
    ImageBuffer img = read_pfm(prefix + kFaceSuffix[fi] + ".pfm");
    if (img.width != img.height)
      throw FormatError("read_cubemap_pfm_faces: face must be square");
    if (fi == 0) cm = CubeMap(img.width, img.channels);
    else if (img.width != cm.face_res || img.channels != cm.channels)
      throw FormatError("read_cubemap_pfm_faces: face size mismatch");
    for (int j = 0; j < cm.face_res; ++j)
      std::memcpy(cm.at(fi, 0, j), img.at(0, j),
                  sizeof(double) * cm.face_res * cm.channels);
  }
  return cm;
}

}  // namespace sphervor
