#pragma once

#include <string>
#include <vector>

#include "sphervor/bases.hpp"
#include "sphervor/image.hpp"

namespace sphervor {

// RGB radiance probe. The SV block is explicit-tau but its stored log_tau is
// bypassed: queries supply the temperature (from the roughness mapping), so
// sharpness is not a learned probe parameter. alpha = sigmoid(alpha_logit)
// blends the probe result against the far field.
struct LightProbe {
  Vec3 position = Vec3::Zero();
  double alpha_logit = 0.0;
  SvParams sv;
};

struct ProbeField {
  std::vector<LightProbe> probes;
  int knn_k = 8;
  CubeMap far_field;
  double tau_min = 0.2, tau_max = 1500.0;
  double epsilon = 1e-6;  // inverse-distance guard
};

// Exact k nearest probes by Euclidean distance, ties toward the lower index.
// Throws InvalidStateError when k exceeds the probe count.
std::vector<int> knn(const ProbeField& field, const Vec3& p, int k);

// w_i = (d_i + eps)^-1 / sum_j (d_j + eps)^-1
Eigen::VectorXd interp_weights(const std::vector<double>& dists, double epsilon);

// tau = (1 - R) tau_max + R tau_min, R clamped to [0,1] (warns once).
double roughness_to_tau(double roughness, double tau_min, double tau_max);

struct NearFieldResult {
  Vec3 color = Vec3::Zero();
  double alpha = 0.0;
};

NearFieldResult near_field(const ProbeField& field, const Vec3& p, const UnitDir& wr,
                           double tau);

// Learnable probe parameters, flat layout per probe:
//   px py pz alpha_logit  then per site: sx sy sz v0 v1 v2
// (log_tau is not learned). Cubemap texels are handled by the caller.
int probe_param_count(const ProbeField& field);
Eigen::VectorXd pack_probes(const ProbeField& field);
void unpack_probes(const Eigen::VectorXd& theta, ProbeField& field);

// Accumulates d<upstream, (color, alpha)>/dtheta for a single query into
// grad_out (size probe_param_count). upstream is (uc0, uc1, uc2, ualpha).
void probe_grad_accum(const ProbeField& field, const Vec3& p, const UnitDir& wr,
                      double tau, const double* upstream, double* grad_out);

// Text format "PROBES 1" with embedded SV model blocks; the far-field
// cubemap travels as a separate stacked PFM.
void save_probe_field(const ProbeField& field, const std::string& probes_path,
                      const std::string& farfield_pfm_path = "");
ProbeField load_probe_field(const std::string& probes_path,
                            const std::string& farfield_pfm_path = "");

}  // namespace sphervor
