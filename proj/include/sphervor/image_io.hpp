#pragma once

#include <string>

#include "sphervor/image.hpp"

namespace sphervor {

// PFM: "PF" (3 channel) or "Pf" (1 channel), negative scale = little endian,
// rows stored bottom-up. Values pass through float32.
void write_pfm(const std::string& path, const ImageBuffer& img);
ImageBuffer read_pfm(const std::string& path);

// Binary PPM (P6, maxval 255). Written with clamp to [0,1] and gamma 1/2.2;
// read applies gamma 2.2 to get back to linear.
void write_ppm(const std::string& path, const ImageBuffer& img);
ImageBuffer read_ppm(const std::string& path);

// Single PFM, faces stacked vertically in face order (+X block on top).
void write_cubemap_pfm(const std::string& path, const CubeMap& cm);
CubeMap read_cubemap_pfm(const std::string& path);

// Six files prefix_px.pfm, prefix_nx.pfm, prefix_py.pfm, prefix_ny.pfm,
// prefix_pz.pfm, prefix_nz.pfm.
void write_cubemap_pfm_faces(const std::string& prefix, const CubeMap& cm);
CubeMap read_cubemap_pfm_faces(const std::string& prefix);

}  // namespace sphervor
