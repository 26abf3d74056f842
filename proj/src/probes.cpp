#include "sphervor/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "sphervor/errors.hpp"
#include "sphervor/image_io.hpp"

namespace sphervor {


std::vector<int> knn(const ProbeField& field, const Vec3& p, int k) {
  const int n = (int)field.probes.size();
  if (k < 1 || k > n)
    throw InvalidStateError("knn: need 1 <= k <= probe count, got k=" +
                            std::to_string(k) + " with " + std::to_string(n) +
                            " probes");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> d2(n);
  for (int i = 0; i < n; ++i) d2[i] = (field.probes[i].position - p).squaredNorm();
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    return d2[a] < d2[b] || (d2[a] == d2[b] && a < b);
  });
  idx.resize(k);
  return idx;
}

Eigen::VectorXd interp_weights(const std::vector<double>& dists, double epsilon) {
  if (dists.empty()) throw std::invalid_argument("interp_weights: empty input");
  Eigen::VectorXd w(dists.size());
  double sum = 0.0;
  for (size_t i = 0; i < dists.size(); ++i) {
    if (!(dists[i] >= 0)) throw std::invalid_argument("interp_weights: negative distance");
    w[(Eigen::Index)i] = 1.0 / (dists[i] + epsilon);
    sum += w[(Eigen::Index)i];
  }
  w /= sum;
  return w;
}

double roughness_to_tau(double roughness, double tau_min, double tau_max) {
  if (roughness < 0.0 || roughness > 1.0) {
    static bool warned = false;
    if (!warned) {
      std::fprintf(stderr, "roughness_to_tau: clamping roughness %g to [0,1]\n",
                   roughness);
      warned = true;
    }
    roughness = std::clamp(roughness, 0.0, 1.0);
  }
  return (1.0 - roughness) * tau_max + roughness * tau_min;
}

NearFieldResult near_field(const ProbeField& field, const Vec3& p, const UnitDir& wr,
                           double tau) {
  NearFieldResult out;
  if (field.probes.empty()) return out;  // alpha 0: far field only
  const int k = std::min(field.knn_k, (int)field.probes.size());
  auto ids = knn(field, p, k);
  std::vector<double> dists(k);
  for (int i = 0; i < k; ++i) dists[i] = (field.probes[ids[i]].position - p).norm();
  Eigen::VectorXd w = interp_weights(dists, field.epsilon);
  double col[3];
  for (int i = 0; i < k; ++i) {
    const LightProbe& pr = field.probes[ids[i]];
    sv_eval_tau_into(pr.sv, wr, tau, col);
    for (int c = 0; c < 3; ++c) out.color[c] += w[i] * col[c];
    out.alpha += w[i] * sigmoid(pr.alpha_logit);  // convex combination, stays in [0,1]
  }
  return out;
}

namespace {

int probe_block_size(const LightProbe& pr) {
  return 4 + (int)pr.sv.sites.cols() * (3 + (int)pr.sv.values.cols());
}

}  // namespace

int probe_param_count(const ProbeField& field) {
  int n = 0;
  for (const auto& pr : field.probes) n += probe_block_size(pr);
  return n;
}

Eigen::VectorXd pack_probes(const ProbeField& field) {
  Eigen::VectorXd theta(probe_param_count(field));
  int o = 0;
  for (const auto& pr : field.probes) {
    theta.segment<3>(o) = pr.position;
    theta[o + 3] = pr.alpha_logit;
    o += 4;
    const int K = (int)pr.sv.sites.cols(), C = (int)pr.sv.values.cols();
    for (int k = 0; k < K; ++k) {
      theta.segment<3>(o) = pr.sv.sites.col(k);
      for (int c = 0; c < C; ++c) theta[o + 3 + c] = pr.sv.values(k, c);
      o += 3 + C;
    }
  }
  return theta;
}

void unpack_probes(const Eigen::VectorXd& theta, ProbeField& field) {
  if (theta.size() != probe_param_count(field))
    throw std::invalid_argument("unpack_probes: size mismatch");
  int o = 0;
  for (auto& pr : field.probes) {
    pr.position = theta.segment<3>(o);
    pr.alpha_logit = theta[o + 3];
    o += 4;
    const int K = (int)pr.sv.sites.cols(), C = (int)pr.sv.values.cols();
    for (int k = 0; k < K; ++k) {
      pr.sv.sites.col(k) = theta.segment<3>(o);
      for (int c = 0; c < C; ++c) pr.sv.values(k, c) = theta[o + 3 + c];
      o += 3 + C;
    }
  }
}

void probe_grad_accum(const ProbeField& field, const Vec3& p, const UnitDir& wr,
                      double tau, const double* up, double* grad_out) {
  if (field.probes.empty()) return;
  const int k = std::min(field.knn_k, (int)field.probes.size());
  auto ids = knn(field, p, k);
  std::vector<double> dists(k);
  for (int i = 0; i < k; ++i) dists[i] = (field.probes[ids[i]].position - p).norm();

  double S = 0.0;
  std::vector<double> q(k);
  for (int i = 0; i < k; ++i) {
    q[i] = 1.0 / (dists[i] + field.epsilon);
    S += q[i];
  }

  // Forward pass pieces needed by the weight gradient: per-probe scalar
  // a_i = <u_c, color_i> + u_alpha * sigmoid(logit_i), since both the color
  // and the alpha blend are weighted sums.
  std::vector<Eigen::Vector3d> colors(k);
  std::vector<double> alphas(k), a(k);
  double h = 0.0;
  for (int i = 0; i < k; ++i) {
    double col[3];
    sv_eval_tau_into(field.probes[ids[i]].sv, wr, tau, col);
    colors[i] = Eigen::Map<Eigen::Vector3d>(col);
    alphas[i] = sigmoid(field.probes[ids[i]].alpha_logit);
    a[i] = colors[i][0] * up[0] + colors[i][1] * up[1] + colors[i][2] * up[2] +
           up[3] * alphas[i];
    h += (q[i] / S) * a[i];
  }

  // Block offsets per probe in the flat layout.
  std::vector<int> offs(field.probes.size());
  int o = 0;
  for (size_t i = 0; i < field.probes.size(); ++i) {
    offs[i] = o;
    o += probe_block_size(field.probes[i]);
  }

  for (int i = 0; i < k; ++i) {
    const LightProbe& pr = field.probes[ids[i]];
    double* g = grad_out + offs[ids[i]];
    double w = q[i] / S;
    // Position enters only through d_i: dw_i/dq_i chain with dq/dd = -q^2
    // and dd/dpos = (pos - p)/d (zero at coincident points).
    double dh_dq = (a[i] - h) / S;
    if (dists[i] > 1e-12) {
      Vec3 dd = (pr.position - p) / dists[i];
      Vec3 dpos = dh_dq * (-q[i] * q[i]) * dd;
      for (int c = 0; c < 3; ++c) g[c] += dpos[c];
    }
    g[3] += w * up[3] * alphas[i] * (1.0 - alphas[i]);
    double svu[3] = {w * up[0], w * up[1], w * up[2]};
    sv_grad_tau_accum(pr.sv, wr, tau, svu, g + 4);
  }
}

void save_probe_field(const ProbeField& field, const std::string& probes_path,
                      const std::string& farfield_pfm_path) {
  std::ofstream os(probes_path);
  if (!os) throw FormatError("cannot open " + probes_path + " for writing");
  os << std::setprecision(17);
  os << "PROBES 1\n";
  os << "count " << field.probes.size() << "\n";
  os << "knn " << field.knn_k << "\n";
  os << "tau " << field.tau_min << " " << field.tau_max << "\n";
  os << "epsilon " << field.epsilon << "\n";
  for (const auto& pr : field.probes) {
    os << "probe " << pr.position[0] << " " << pr.position[1] << " "
       << pr.position[2] << " " << pr.alpha_logit << "\n";
    write_model(os, SphericalModel{pr.sv});
  }
  if (!os) throw FormatError("write failed: " + probes_path);
  if (!farfield_pfm_path.empty() && field.far_field.face_res > 0)
    write_cubemap_pfm(farfield_pfm_path, field.far_field);
}

namespace {

std::string next_token(std::istream& is, const char* what) {
  std::string t;
  if (!(is >> t)) throw FormatError(std::string("probe file truncated at ") + what);
  return t;
}

void expect_key(std::istream& is, const char* key) {
  std::string t = next_token(is, key);
  if (t != key)
    throw FormatError("probe file: expected '" + std::string(key) + "', got '" + t + "'");
}

double read_num(std::istream& is, const char* what) {
  std::string t = next_token(is, what);
  try {
    size_t pos = 0;
    double v = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw FormatError("probe file: bad number '" + t + "' for " + what);
  }
}

}  // namespace

ProbeField load_probe_field(const std::string& probes_path,
                            const std::string& farfield_pfm_path) {
  std::ifstream is(probes_path);
  if (!is) throw FormatError("cannot open " + probes_path);
  std::string magic = next_token(is, "magic");
  int version = (int)read_num(is, "version");
  if (magic != "PROBES" || version != 1)
    throw FormatError("not a PROBES 1 file: " + probes_path);
  ProbeField field;
  expect_key(is, "count");
  int count = (int)read_num(is, "count");
  if (count < 0) throw FormatError("probe file: negative count");
  expect_key(is, "knn");
  field.knn_k = (int)read_num(is, "knn");
  expect_key(is, "tau");
  field.tau_min = read_num(is, "tau_min");
  field.tau_max = read_num(is, "tau_max");
  expect_key(is, "epsilon");
  field.epsilon = read_num(is, "epsilon");
  field.probes.resize(count);
  for (int i = 0; i < count; ++i) {
    expect_key(is, "probe");
    LightProbe& pr = field.probes[i];
    pr.position[0] = read_num(is, "px");
    pr.position[1] = read_num(is, "py");
    pr.position[2] = read_num(is, "pz");
    pr.alpha_logit = read_num(is, "alpha_logit");
    SphericalModel m = read_model(is);
    if (m.kind() != BasisKind::Sv || m.channels() != 3)
      throw FormatError("probe file: embedded model must be 3-channel sv");
    pr.sv = std::get<SvParams>(m.params);
  }
  if (!farfield_pfm_path.empty()) field.far_field = read_cubemap_pfm(farfield_pfm_path);
  return field;
}

}  // namespace sphervor
