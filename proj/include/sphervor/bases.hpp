#pragma once

#include <cmath>
#include <iosfwd>
#include <string>
#include <variant>

#include "sphervor/geometry.hpp"

namespace sphervor {

enum class BasisKind { Sh, Sg, Sb, Sv };
enum class SvTauMode { Explicit, Norm };

// f(w) = sum_lm c_lm Y_lm(w). coeffs is (degree+1)^2 x channels, row index
// l*(l+1)+m. Flat layout: per (l,m) row, the channel values.
struct ShParams {
  int degree = 0;
  Eigen::MatrixXd coeffs;
};

// f(w) = sum_k c_k exp(tau_k (s_k.w - 1)), s_k = dirs.col(k)/|dirs.col(k)|.
// Flat layout per lobe: sx sy sz log_tau c_0..c_{C-1}.
struct SgParams {
  Eigen::Matrix3Xd dirs;
  Eigen::VectorXd log_tau;
  Eigen::MatrixXd amps;  // K x C
};

// f(w) = sum_k c_k (1+s_k.w)^(a_k-1) (1-s_k.w)^(b_k-1), both bases clamped to
// >= 1e-12 before exponentiation; a_k = softplus(alpha_raw_k), same for b.
// Flat layout per lobe: sx sy sz alpha_raw beta_raw c_0..c_{C-1}.
struct SbParams {
  Eigen::Matrix3Xd dirs;
  Eigen::VectorXd alpha_raw, beta_raw;
  Eigen::MatrixXd amps;  // K x C
};

// f(w) = sum_k w_k(w) c_k with w_k the softmax of logits tau_k (s_k.w).
// Explicit mode: tau_k = exp(log_tau_k), s_k normalized at evaluation.
// Norm mode: tau_k = |sites.col(k)|, so the logit is just sites.col(k).w.
// Flat layout per site: sx sy sz [log_tau] c_0..c_{C-1}.
struct SvParams {
  SvTauMode mode = SvTauMode::Explicit;
  Eigen::Matrix3Xd sites;
  Eigen::VectorXd log_tau;  // used in Explicit mode only
  Eigen::MatrixXd values;   // K x C
};

struct SphericalModel {
  std::variant<ShParams, SgParams, SbParams, SvParams> params;

  BasisKind kind() const { return BasisKind(params.index()); }
  int channels() const;
  int size() const;  // degree for Sh, lobe/site count otherwise
};

int param_count(const SphericalModel& m);
Eigen::VectorXd pack(const SphericalModel& m);
void unpack(const Eigen::VectorXd& theta, SphericalModel& m);
// Throws NumericError with the flat parameter index of the first bad value.
void check_finite(const SphericalModel& m);

// Validating evaluation; eval_into skips the finiteness scan for inner loops.
Eigen::VectorXd eval(const SphericalModel& m, const UnitDir& d);
void eval_into(const SphericalModel& m, const UnitDir& d, double* out);

// d<upstream, f(d)>/dtheta in the flat layout. grad validates, grad_accum
// adds into grad_out without validating.
Eigen::VectorXd grad(const SphericalModel& m, const UnitDir& d,
                     const Eigen::VectorXd& upstream);
void grad_accum(const SphericalModel& m, const UnitDir& d, const double* upstream,
                double* grad_out);

// Softmax site weights at d; sums to 1.
Eigen::VectorXd sv_weights(const SvParams& p, const UnitDir& d);

// SV evaluation with one externally supplied temperature shared by all sites
// (logits tau * (s_k.w)); stored log_tau is ignored. Used by light probes.
void sv_eval_tau_into(const SvParams& p, const UnitDir& d, double tau, double* out);
// Gradients for sites and values only, in the same per-site layout as the
// model but with any log_tau slot skipped (stride 3 + channels).
void sv_grad_tau_accum(const SvParams& p, const UnitDir& d, double tau,
                       const double* upstream, double* grad_out);

SphericalModel make_sh(int degree, int channels);
SphericalModel make_sg(int lobes, int channels, double tau = 5.0);
SphericalModel make_sb(int lobes, int channels, double alpha = 2.0, double beta = 2.0);
SphericalModel make_sv(int sites, int channels, SvTauMode mode, double tau = 5.0);
// 8 Fibonacci sites, norm mode with unit site norms, zero values; 48
// parameters at 3 channels.
SphericalModel preset_sv8(int channels = 3);

// Largest size whose param_count fits the budget; throws if even size 1 does not.
int matched_size(BasisKind kind, SvTauMode mode, int channels, int budget);

double softplus(double x);
double softplus_inv(double y);

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Floor for the (1 +/- s.w) factors before exponentiation.
inline constexpr double kSbClamp = 1e-12;

// Versioned text format, values printed with enough digits to round-trip.
void save_model(const SphericalModel& m, const std::string& path);
SphericalModel load_model(const std::string& path);
void write_model(std::ostream& os, const SphericalModel& m);
SphericalModel read_model(std::istream& is);

}  // namespace sphervor
