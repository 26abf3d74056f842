#pragma once

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "sphervor/fitter.hpp"
#include "sphervor/image.hpp"
#include "sphervor/probes.hpp"

namespace sphervor {

struct Material {
  Vec3 diffuse = Vec3::Zero();
  double roughness = 0.0;
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Material mat;
};

struct Plane {
  Vec3 point = Vec3::Zero();
  UnitDir normal{0.0, 1.0, 0.0};
  Material mat;
};

struct Camera {
  Vec3 position = Vec3::Zero();
  Vec3 right{1, 0, 0}, up{0, 1, 0}, forward{0, 0, -1};  // orthonormal
  double fov_y = 0.7853981633974483;                    // vertical, radians
  int width = 64, height = 64;
};

Camera make_lookat_camera(const Vec3& position, const Vec3& target, const Vec3& up_hint,
                          double fov_y_deg, int width, int height);

struct AnalyticScene {
  std::vector<Sphere> spheres;
  std::vector<Plane> planes;
  std::vector<Camera> cameras;
};

// Per-pixel surface attributes from the geometry pass; mask false on miss.
// ray_dir is the primary ray for every pixel (misses shade from the far field
// along it). Normals are flipped toward the camera.
struct GBuffer {
  int width = 0, height = 0;
  std::vector<uint8_t> mask;
  std::vector<double> position;   // 3 per pixel
  std::vector<double> normal;     // 3 per pixel, unit where mask
  std::vector<double> diffuse;    // 3 per pixel
  std::vector<double> roughness;  // 1 per pixel, in [0,1]
  std::vector<double> ray_dir;    // 3 per pixel

  GBuffer() = default;
  GBuffer(int w, int h);
  size_t idx(int u, int v) const { return size_t(v) * width + u; }
};

GBuffer raytrace_gbuffer(const AnalyticScene& scene, const Camera& cam);

// Deferred lighting: per masked pixel w = normalize(eye - P), wr = reflect(w, N),
// tau = roughness_to_tau(R) unless tau_override >= 0, then
//   C = D + alpha * C_near + (1 - alpha) * C_far(wr)   (nearest-texel far field)
// clamped to [0, inf). Miss pixels sample the far field along the primary ray.
ImageBuffer shade(const GBuffer& gbuf, const Camera& cam, const ProbeField& field,
                  double tau_override = -1.0);

// raytrace + shade for every camera in the scene.
std::vector<ImageBuffer> render_views(const AnalyticScene& scene, const ProbeField& field,
                                      double tau_override = -1.0);

// Line-based text format, '#' comments:
//   sphere cx cy cz r dr dg db rough
//   plane px py pz nx ny nz dr dg db rough
//   camera px py pz lx ly lz ux uy uz fov_deg width height
AnalyticScene parse_scene(std::istream& is);
AnalyticScene load_scene(const std::string& path);
void write_scene(std::ostream& os, const AnalyticScene& scene);

// Named test scenes: "mirrorsphere" (unit mirror sphere, one 256x256 camera),
// "proberoom" (rough sphere over a ground plane, two 64x64 cameras).
AnalyticScene builtin_scene(const std::string& name);

// _pos/_nrm/_rough/_diff PFMs for inspection.
void write_gbuffer(const GBuffer& gbuf, const std::string& prefix);

struct ProbeFitReport {
  ProbeField field;
  double final_loss = 0.0;
  double final_psnr = 0.0;
  std::vector<double> loss_trace;        // loss before each step
  std::vector<double> mean_alpha_trace;  // blend factor averaged over masked pixels
  double wall_ms = 0.0;
  int iterations = 0;
};

// Loss went non-finite; last holds the last finite iterate.
struct ProbeDivergedError : std::runtime_error {
  explicit ProbeDivergedError(ProbeFitReport r)
      : std::runtime_error("probe fit diverged at iteration " +
                           std::to_string(r.iterations)),
        last(std::move(r)) {}
  ProbeFitReport last;
};

using ProbeCheckpointFn = std::function<void(int iter, const ProbeField&, double loss)>;

// Flat layout: probe blocks (pack_probes) then far-field texels in face-major
// row-major channel-interleaved order.
Eigen::VectorXd pack_probe_scene(const ProbeField& field);
void unpack_probe_scene(const Eigen::VectorXd& theta, ProbeField& field);

// MSE of shade() against the references over all cameras; the forward pass of
// fit_probe_scene, exposed for finite-difference checks.
double probe_scene_loss(const std::vector<GBuffer>& gbufs, const std::vector<Camera>& cams,
                        const std::vector<ImageBuffer>& refs, const ProbeField& field);
// Same loss plus d(loss)/dtheta in the pack_probe_scene layout.
double probe_scene_loss_grad(const std::vector<GBuffer>& gbufs,
                             const std::vector<Camera>& cams,
                             const std::vector<ImageBuffer>& refs, const ProbeField& field,
                             Eigen::VectorXd& grad_out);

// Optimizes probe parameters and far-field texels against the references.
// Geometry is fixed; gradients flow through near_field and the texel blend.
// checkpoint (optional) fires every cfg.log_every iterations and at the end.
ProbeFitReport fit_probe_scene(const AnalyticScene& scene, const std::vector<Camera>& cams,
                               const std::vector<ImageBuffer>& refs, const ProbeField& init,
                               const FitConfig& cfg,
                               const ProbeCheckpointFn& checkpoint = nullptr);

// Probes uniform in [lo, hi], Fibonacci sites with zero values, alpha logit 0,
// constant gray far field.
ProbeField init_probe_field(int probes, int sites_per_probe, int knn_k, const Vec3& lo,
                            const Vec3& hi, int face_res, uint64_t seed,
                            double far_init = 0.5);

}  // namespace sphervor
