#include "sphervor/shading.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "sphervor/errors.hpp"
#include "sphervor/image_io.hpp"

namespace sphervor {

Camera make_lookat_camera(const Vec3& position, const Vec3& target, const Vec3& up_hint,
                          double fov_y_deg, int width, int height) {
  if (width < 1 || height < 1 || !(fov_y_deg > 0) || fov_y_deg >= 180)
    throw std::invalid_argument("make_lookat_camera: bad resolution or fov");
  Vec3 f = target - position;
  if (f.norm() < 1e-12)
    throw std::invalid_argument("make_lookat_camera: target equals position");
  f.normalize();
  Vec3 r = f.cross(up_hint);
  if (r.norm() < 1e-9)
    throw std::invalid_argument("make_lookat_camera: up parallel to view direction");
  r.normalize();
  Camera cam;
  cam.position = position;
  cam.forward = f;
  cam.right = r;
  cam.up = r.cross(f);
  cam.fov_y = fov_y_deg * EIGEN_PI / 180.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

GBuffer::GBuffer(int w, int h)
    : width(w),
      height(h),
      mask(size_t(w) * h, 0),
      position(size_t(w) * h * 3, 0.0),
      normal(size_t(w) * h * 3, 0.0),
      diffuse(size_t(w) * h * 3, 0.0),
      roughness(size_t(w) * h, 0.0),
      ray_dir(size_t(w) * h * 3, 0.0) {}

namespace {

constexpr double kRayEps = 1e-6;

struct Hit {
  double t = -1.0;
  Vec3 normal = Vec3::Zero();
  const Material* mat = nullptr;
  bool ok() const { return t > kRayEps; }
};

Hit intersect_sphere(const Sphere& s, const Vec3& o, const Vec3& d) {
  Hit h;
  Vec3 oc = o - s.center;
  double b = oc.dot(d);
  double c = oc.squaredNorm() - s.radius * s.radius;
  double disc = b * b - c;
  if (disc < 0) return h;
  double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= kRayEps) t = -b + sq;
  if (t <= kRayEps) return h;
  h.t = t;
  h.normal = (o + t * d - s.center) / s.radius;
  h.mat = &s.mat;
  return h;
}

Hit intersect_plane(const Plane& p, const Vec3& o, const Vec3& d) {
  Hit h;
  double denom = d.dot(p.normal.vec());
  if (std::abs(denom) < 1e-12) return h;
  double t = (p.point - o).dot(p.normal.vec()) / denom;
  if (t <= kRayEps) return h;
  h.t = t;
  h.normal = p.normal.vec();
  h.mat = &p.mat;
  return h;
}

Vec3 pixel_ray(const Camera& cam, int u, int v) {
  double th = std::tan(0.5 * cam.fov_y);
  double aspect = double(cam.width) / cam.height;
  double px = (2.0 * (u + 0.5) / cam.width - 1.0) * th * aspect;
  double py = (1.0 - 2.0 * (v + 0.5) / cam.height) * th;
  return (px * cam.right + py * cam.up + cam.forward).normalized();
}

}  // namespace

GBuffer raytrace_gbuffer(const AnalyticScene& scene, const Camera& cam) {
  GBuffer g(cam.width, cam.height);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      Vec3 d = pixel_ray(cam, u, v);
      size_t i = g.idx(u, v);
      for (int c = 0; c < 3; ++c) g.ray_dir[i * 3 + c] = d[c];
      Hit best;
      for (const auto& s : scene.spheres) {
        Hit h = intersect_sphere(s, cam.position, d);
        if (h.ok() && (!best.ok() || h.t < best.t)) best = h;
      }
      for (const auto& p : scene.planes) {
        Hit h = intersect_plane(p, cam.position, d);
        if (h.ok() && (!best.ok() || h.t < best.t)) best = h;
      }
      if (!best.ok()) continue;
      g.mask[i] = 1;
      Vec3 P = cam.position + best.t * d;
      Vec3 N = best.normal;
      if (N.dot(d) > 0) N = -N;
      for (int c = 0; c < 3; ++c) {
        g.position[i * 3 + c] = P[c];
        g.normal[i * 3 + c] = N[c];
        g.diffuse[i * 3 + c] = best.mat->diffuse[c];
      }
      g.roughness[i] = std::clamp(best.mat->roughness, 0.0, 1.0);
    }
  }
  return g;
}

namespace {

// Everything about a pixel that stays fixed while probes/texels move.
struct PixelCtx {
  bool hit = false;
  Vec3 P = Vec3::Zero();
  Vec3 D = Vec3::Zero();
  double tau = 0.0;
  UnitDir dir;     // wr for hits, primary ray for misses
  int face = 0, ti = 0, tj = 0;
};

std::vector<PixelCtx> build_pixel_ctx(const GBuffer& g, const Camera& cam,
                                      const ProbeField& field, double tau_override) {
  std::vector<PixelCtx> ctx(size_t(g.width) * g.height);
  for (size_t i = 0; i < ctx.size(); ++i) {
    PixelCtx& px = ctx[i];
    px.hit = g.mask[i] != 0;
    if (px.hit) {
      px.P = Vec3(g.position[i * 3], g.position[i * 3 + 1], g.position[i * 3 + 2]);
      px.D = Vec3(g.diffuse[i * 3], g.diffuse[i * 3 + 1], g.diffuse[i * 3 + 2]);
      UnitDir n = UnitDir::from_unit(
          Vec3(g.normal[i * 3], g.normal[i * 3 + 1], g.normal[i * 3 + 2]));
      UnitDir w(cam.position - px.P);
      px.dir = reflect(w, n);
      px.tau = tau_override >= 0.0
                   ? tau_override
                   : roughness_to_tau(g.roughness[i], field.tau_min, field.tau_max);
    } else {
      px.dir = UnitDir::from_unit(
          Vec3(g.ray_dir[i * 3], g.ray_dir[i * 3 + 1], g.ray_dir[i * 3 + 2]));
    }
    if (field.far_field.face_res > 0)
      cubemap_dir_to_texel(px.dir, field.far_field.face_res, px.face, px.ti, px.tj);
  }
  return ctx;
}

// Shared forward pass; out_pre receives the pre-clamp color so gradients can
// honor the clamp indicator.
void shade_pixel(const PixelCtx& px, const ProbeField& field, double* out_pre,
                 NearFieldResult* nf_out = nullptr, const double* far_texel = nullptr) {
  double cf[3] = {0, 0, 0};
  if (far_texel) {
    cf[0] = far_texel[0];
    cf[1] = far_texel[1];
    cf[2] = far_texel[2];
  } else if (field.far_field.face_res > 0) {
    cubemap_sample_nearest_into(field.far_field, px.dir, cf);
  }
  if (!px.hit) {
    for (int c = 0; c < 3; ++c) out_pre[c] = cf[c];
    return;
  }
  NearFieldResult nf = near_field(field, px.P, px.dir, px.tau);
  for (int c = 0; c < 3; ++c)
    out_pre[c] = px.D[c] + nf.alpha * nf.color[c] + (1.0 - nf.alpha) * cf[c];
  if (nf_out) *nf_out = nf;
}

}  // namespace

ImageBuffer shade(const GBuffer& gbuf, const Camera& cam, const ProbeField& field,
                  double tau_override) {
  auto ctx = build_pixel_ctx(gbuf, cam, field, tau_override);
  ImageBuffer out(gbuf.width, gbuf.height, 3);
  for (size_t i = 0; i < ctx.size(); ++i) {
    double pre[3];
    shade_pixel(ctx[i], field, pre);
    for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = std::max(0.0, pre[c]);
  }
  return out;
}

std::vector<ImageBuffer> render_views(const AnalyticScene& scene, const ProbeField& field,
                                      double tau_override) {
  if (scene.cameras.empty())
    throw std::invalid_argument("render_views: scene has no cameras");
  std::vector<ImageBuffer> out;
  for (const auto& cam : scene.cameras)
    out.push_back(shade(raytrace_gbuffer(scene, cam), cam, field, tau_override));
  return out;
}

// ---- scene files ----

namespace {

double parse_num(std::istringstream& ls, int line_no, const char* what) {
  std::string t;
  if (!(ls >> t))
    throw FormatError("scene line " + std::to_string(line_no) + ": missing " + what);
  try {
    size_t pos = 0;
    double v = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw FormatError("scene line " + std::to_string(line_no) + ": bad number '" + t +
                      "' for " + what);
  }
}

void expect_end(std::istringstream& ls, int line_no) {
  std::string extra;
  if (ls >> extra)
    throw FormatError("scene line " + std::to_string(line_no) + ": trailing token '" +
                      extra + "'");
}

}  // namespace

AnalyticScene parse_scene(std::istream& is) {
  AnalyticScene scene;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind) || kind[0] == '#') continue;
    if (kind == "sphere") {
      Sphere s;
      for (int c = 0; c < 3; ++c) s.center[c] = parse_num(ls, line_no, "center");
      s.radius = parse_num(ls, line_no, "radius");
      if (!(s.radius > 0))
        throw FormatError("scene line " + std::to_string(line_no) +
                          ": radius must be positive");
      for (int c = 0; c < 3; ++c) s.mat.diffuse[c] = parse_num(ls, line_no, "diffuse");
      s.mat.roughness = parse_num(ls, line_no, "roughness");
      expect_end(ls, line_no);
      scene.spheres.push_back(s);
    } else if (kind == "plane") {
      Plane p;
      for (int c = 0; c < 3; ++c) p.point[c] = parse_num(ls, line_no, "point");
      Vec3 n;
      for (int c = 0; c < 3; ++c) n[c] = parse_num(ls, line_no, "normal");
      if (n.norm() < 1e-12)
        throw FormatError("scene line " + std::to_string(line_no) + ": zero normal");
      p.normal = UnitDir(n);
      for (int c = 0; c < 3; ++c) p.mat.diffuse[c] = parse_num(ls, line_no, "diffuse");
      p.mat.roughness = parse_num(ls, line_no, "roughness");
      expect_end(ls, line_no);
      scene.planes.push_back(p);
    } else if (kind == "camera") {
      Vec3 pos, look, up;
      for (int c = 0; c < 3; ++c) pos[c] = parse_num(ls, line_no, "position");
      for (int c = 0; c < 3; ++c) look[c] = parse_num(ls, line_no, "look");
      for (int c = 0; c < 3; ++c) up[c] = parse_num(ls, line_no, "up");
      double fov = parse_num(ls, line_no, "fov_deg");
      int w = (int)parse_num(ls, line_no, "width");
      int h = (int)parse_num(ls, line_no, "height");
      expect_end(ls, line_no);
      try {
        scene.cameras.push_back(make_lookat_camera(pos, look, up, fov, w, h));
      } catch (const std::invalid_argument& e) {
        throw FormatError("scene line " + std::to_string(line_no) + ": " + e.what());
      }
    } else {
      throw FormatError("scene line " + std::to_string(line_no) +
                        ": unknown entity '" + kind + "'");
    }
  }
  return scene;
}

AnalyticScene load_scene(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open scene " + path);
  return parse_scene(is);
}

void write_scene(std::ostream& os, const AnalyticScene& scene) {
  os << std::setprecision(17);
  for (const auto& s : scene.spheres)
    os << "sphere " << s.center[0] << " " << s.center[1] << " " << s.center[2] << " "
       << s.radius << " " << s.mat.diffuse[0] << " " << s.mat.diffuse[1] << " "
       << s.mat.diffuse[2] << " " << s.mat.roughness << "\n";
  for (const auto& p : scene.planes)
    os << "plane " << p.point[0] << " " << p.point[1] << " " << p.point[2] << " "
       << p.normal.x() << " " << p.normal.y() << " " << p.normal.z() << " "
       << p.mat.diffuse[0] << " " << p.mat.diffuse[1] << " " << p.mat.diffuse[2] << " "
       << p.mat.roughness << "\n";
  for (const auto& cam : scene.cameras) {
    Vec3 look = cam.position + cam.forward;
    os << "camera " << cam.position[0] << " " << cam.position[1] << " "
       << cam.position[2] << " " << look[0] << " " << look[1] << " " << look[2] << " "
       << cam.up[0] << " " << cam.up[1] << " " << cam.up[2] << " "
       << cam.fov_y * 180.0 / EIGEN_PI << " " << cam.width << " " << cam.height << "\n";
  }
}

AnalyticScene builtin_scene(const std::string& name) {
  AnalyticScene scene;
  if (name == "mirrorsphere") {
    Sphere s;
    s.center = Vec3::Zero();
    s.radius = 1.0;
    s.mat.diffuse = Vec3::Zero();
    s.mat.roughness = 0.0;
    scene.spheres.push_back(s);
    scene.cameras.push_back(
        make_lookat_camera(Vec3(0, 0, 3.2), Vec3::Zero(), Vec3(0, 1, 0), 45, 256, 256));
  } else if (name == "proberoom") {
    Sphere s;
    s.center = Vec3::Zero();
    s.radius = 1.0;
    s.mat.diffuse = Vec3(0.05, 0.05, 0.08);
    s.mat.roughness = 0.85;
    scene.spheres.push_back(s);
    Plane p;
    p.point = Vec3(0, -1.2, 0);
    p.normal = UnitDir(0.0, 1.0, 0.0);
    p.mat.diffuse = Vec3(0.1, 0.1, 0.1);
    p.mat.roughness = 0.9;
    scene.planes.push_back(p);
    scene.cameras.push_back(
        make_lookat_camera(Vec3(0, 0.5, 3.0), Vec3::Zero(), Vec3(0, 1, 0), 50, 64, 64));
    scene.cameras.push_back(make_lookat_camera(Vec3(2.2, 0.8, 1.6), Vec3::Zero(),
                                               Vec3(0, 1, 0), 50, 64, 64));
  } else {
    throw std::invalid_argument("unknown builtin scene: " + name);
  }
  return scene;
}

void write_gbuffer(const GBuffer& g, const std::string& prefix) {
  auto dump = [&](const std::vector<double>& src, int ch, const char* suffix) {
    ImageBuffer img(g.width, g.height, ch);
    img.data = src;
    write_pfm(prefix + suffix, img);
  };
  dump(g.position, 3, "_pos.pfm");
  dump(g.normal, 3, "_nrm.pfm");
  dump(g.roughness, 1, "_rough.pfm");
  dump(g.diffuse, 3, "_diff.pfm");
}

// ---- probe-scene fitting ----

Eigen::VectorXd pack_probe_scene(const ProbeField& field) {
  Eigen::VectorXd probes = pack_probes(field);
  const CubeMap& cm = field.far_field;
  size_t n_tex = size_t(cm.face_res) * cm.face_res * cm.channels;
  Eigen::VectorXd theta(probes.size() + (Eigen::Index)(6 * n_tex));
  theta.head(probes.size()) = probes;
  Eigen::Index o = probes.size();
  for (int f = 0; f < 6; ++f)
    for (size_t i = 0; i < n_tex; ++i) theta[o++] = cm.faces[f][i];
  return theta;
}

void unpack_probe_scene(const Eigen::VectorXd& theta, ProbeField& field) {
  Eigen::Index np = probe_param_count(field);
  const CubeMap& cm = field.far_field;
  size_t n_tex = size_t(cm.face_res) * cm.face_res * cm.channels;
  if (theta.size() != np + (Eigen::Index)(6 * n_tex))
    throw std::invalid_argument("unpack_probe_scene: size mismatch");
  unpack_probes(theta.head(np), field);
  Eigen::Index o = np;
  for (int f = 0; f < 6; ++f)
    for (size_t i = 0; i < n_tex; ++i) field.far_field.faces[f][i] = theta[o++];
}

namespace {

struct FitPixels {
  std::vector<PixelCtx> ctx;
  std::vector<const double*> ref;  // per-pixel pointer into the reference image
  size_t masked = 0;
};

FitPixels collect_pixels(const std::vector<GBuffer>& gbufs,
                         const std::vector<Camera>& cams,
                         const std::vector<ImageBuffer>& refs, const ProbeField& field) {
  if (gbufs.size() != cams.size() || refs.size() != cams.size() || cams.empty())
    throw std::invalid_argument("probe fit: need matching cameras/gbuffers/references");
  FitPixels fp;
  for (size_t v = 0; v < cams.size(); ++v) {
    const GBuffer& g = gbufs[v];
    const ImageBuffer& r = refs[v];
    if (r.width != g.width || r.height != g.height || r.channels != 3)
      throw std::invalid_argument("probe fit: reference size mismatch on view " +
                                  std::to_string(v));
    auto ctx = build_pixel_ctx(g, cams[v], field, -1.0);
    for (size_t i = 0; i < ctx.size(); ++i) {
      if (ctx[i].hit) ++fp.masked;
      fp.ctx.push_back(ctx[i]);
      fp.ref.push_back(r.data.data() + i * 3);
    }
  }
  return fp;
}

size_t texel_flat(const ProbeField& field, const PixelCtx& px) {
  int res = field.far_field.face_res;
  return (size_t(px.face) * res * res + size_t(px.tj) * res + px.ti) * 3;
}

// loss, and optionally the gradient and the mean blend factor over hits.
double probe_scene_pass(const FitPixels& fp, const ProbeField& field, double* grad,
                        Eigen::Index n_probe_params, double* mean_alpha) {
  double loss = 0.0;
  double alpha_sum = 0.0;
  const double inv = 1.0 / (double(fp.ctx.size()) * 3.0);
  const bool far = field.far_field.face_res > 0;
  for (size_t i = 0; i < fp.ctx.size(); ++i) {
    const PixelCtx& px = fp.ctx[i];
    const double* far_texel =
        far ? field.far_field.faces[px.face].data() +
                  (size_t(px.tj) * field.far_field.face_res + px.ti) * 3
            : nullptr;
    double pre[3];
    NearFieldResult nf;
    shade_pixel(px, field, pre, &nf, far_texel);
    double dC[3];
    for (int c = 0; c < 3; ++c) {
      double clamped = std::max(0.0, pre[c]);
      double r = clamped - fp.ref[i][c];
      loss += r * r * inv;
      dC[c] = (pre[c] >= 0.0) ? 2.0 * r * inv : 0.0;
    }
    if (px.hit) alpha_sum += nf.alpha;
    if (!grad) continue;
    if (!px.hit) {
      if (far) {
        double* gt = grad + n_probe_params + texel_flat(field, px);
        for (int c = 0; c < 3; ++c) gt[c] += dC[c];
      }
      continue;
    }
    double cf[3] = {0, 0, 0};
    if (far_texel)
      for (int c = 0; c < 3; ++c) cf[c] = far_texel[c];
    double up[4];
    up[3] = 0.0;
    for (int c = 0; c < 3; ++c) {
      up[c] = nf.alpha * dC[c];
      up[3] += dC[c] * (nf.color[c] - cf[c]);
    }
    probe_grad_accum(field, px.P, px.dir, px.tau, up, grad);
    if (far) {
      double* gt = grad + n_probe_params + texel_flat(field, px);
      for (int c = 0; c < 3; ++c) gt[c] += (1.0 - nf.alpha) * dC[c];
    }
  }
  if (mean_alpha) *mean_alpha = fp.masked ? alpha_sum / double(fp.masked) : 0.0;
  return loss;
}

}  // namespace

double probe_scene_loss(const std::vector<GBuffer>& gbufs, const std::vector<Camera>& cams,
                        const std::vector<ImageBuffer>& refs, const ProbeField& field) {
  FitPixels fp = collect_pixels(gbufs, cams, refs, field);
  return probe_scene_pass(fp, field, nullptr, 0, nullptr);
}

double probe_scene_loss_grad(const std::vector<GBuffer>& gbufs,
                             const std::vector<Camera>& cams,
                             const std::vector<ImageBuffer>& refs, const ProbeField& field,
                             Eigen::VectorXd& grad_out) {
  FitPixels fp = collect_pixels(gbufs, cams, refs, field);
  const Eigen::Index np = probe_param_count(field);
  grad_out = Eigen::VectorXd::Zero(pack_probe_scene(field).size());
  return probe_scene_pass(fp, field, grad_out.data(), np, nullptr);
}

ProbeFitReport fit_probe_scene(const AnalyticScene& scene, const std::vector<Camera>& cams,
                               const std::vector<ImageBuffer>& refs, const ProbeField& init,
                               const FitConfig& cfg,
                               const ProbeCheckpointFn& checkpoint) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<GBuffer> gbufs;
  for (const auto& cam : cams) gbufs.push_back(raytrace_gbuffer(scene, cam));
  FitPixels fp = collect_pixels(gbufs, cams, refs, init);

  ProbeField field = init;
  const Eigen::Index np = probe_param_count(field);
  Eigen::VectorXd theta = pack_probe_scene(field);
  Eigen::VectorXd g(theta.size());
  Adam opt((int)theta.size(), cfg.beta1, cfg.beta2, cfg.epsilon);

  ProbeFitReport rep;
  Eigen::VectorXd last_finite = theta;
  double last_loss = std::numeric_limits<double>::infinity(), last_alpha = 0.0;
  auto finish = [&](double loss, double alpha, int iters) {
    rep.field = field;
    rep.final_loss = loss;
    rep.final_psnr = std::isfinite(loss) ? psnr(loss, cfg.peak)
                                         : -std::numeric_limits<double>::infinity();
    rep.mean_alpha_trace.push_back(alpha);
    rep.iterations = iters;
    rep.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    g.setZero();
    double alpha = 0.0;
    double loss = probe_scene_pass(fp, field, g.data(), np, &alpha);
    if (!std::isfinite(loss)) {
      theta = last_finite;
      unpack_probe_scene(theta, field);
      finish(last_loss, last_alpha, it);
      throw ProbeDivergedError(std::move(rep));
    }
    rep.loss_trace.push_back(loss);
    if (cfg.log_every > 0 && it % cfg.log_every == 0) {
      rep.mean_alpha_trace.push_back(alpha);
      if (checkpoint) checkpoint(it, field, loss);
    }
    last_finite = theta;
    last_loss = loss;
    last_alpha = alpha;
    opt.step(theta, g, cfg.step_size);
    unpack_probe_scene(theta, field);
  }
  double alpha = 0.0;
  double loss = probe_scene_pass(fp, field, nullptr, np, &alpha);
  if (!std::isfinite(loss)) {
    theta = last_finite;
    unpack_probe_scene(theta, field);
    finish(last_loss, last_alpha, cfg.iterations);
    throw ProbeDivergedError(std::move(rep));
  }
  finish(loss, alpha, cfg.iterations);
  if (checkpoint) checkpoint(cfg.iterations, field, loss);
  return rep;
}

ProbeField init_probe_field(int probes, int sites_per_probe, int knn_k, const Vec3& lo,
                            const Vec3& hi, int face_res, uint64_t seed,
                            double far_init) {
  if (probes < 0 || sites_per_probe < 1 || knn_k < 1 || face_res < 1)
    throw std::invalid_argument("init_probe_field: bad arguments");
  ProbeField field;
  field.knn_k = knn_k;
  field.far_field = CubeMap(face_res, 3, far_init);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto dirs = fibonacci_sphere(sites_per_probe);
  for (int i = 0; i < probes; ++i) {
    LightProbe pr;
    for (int c = 0; c < 3; ++c) pr.position[c] = lo[c] + (hi[c] - lo[c]) * unit(rng);
    pr.sv.mode = SvTauMode::Explicit;
    pr.sv.sites.resize(3, sites_per_probe);
    for (int k = 0; k < sites_per_probe; ++k) pr.sv.sites.col(k) = dirs[k].vec();
    pr.sv.log_tau = Eigen::VectorXd::Zero(sites_per_probe);
    pr.sv.values = Eigen::MatrixXd::Zero(sites_per_probe, 3);
    field.probes.push_back(std::move(pr));
  }
  return field;
}

}  // namespace sphervor
