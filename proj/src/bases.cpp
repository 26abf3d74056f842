#include "sphervor/bases.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "sphervor/errors.hpp"
#include "sphervor/sh.hpp"

namespace sphervor {

namespace {

thread_local std::vector<double> tls_basis;
thread_local std::vector<double> tls_logits;
thread_local std::vector<double> tls_weights;
thread_local std::vector<double> tls_dots;

}  // namespace

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inv(double y) {
  if (!(y > 0.0)) throw std::invalid_argument("softplus_inv: y must be positive");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

int SphericalModel::channels() const {
  return std::visit(
      [](const auto& p) -> int {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ShParams>) return (int)p.coeffs.cols();
        else if constexpr (std::is_same_v<T, SvParams>) return (int)p.values.cols();
        else return (int)p.amps.cols();
      },
      params);
}

int SphericalModel::size() const {
  return std::visit(
      [](const auto& p) -> int {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ShParams>) return p.degree;
        else if constexpr (std::is_same_v<T, SvParams>) return (int)p.sites.cols();
        else return (int)p.dirs.cols();
      },
      params);
}

int param_count(const SphericalModel& m) {
  const int C = m.channels();
  switch (m.kind()) {
    case BasisKind::Sh: return sh_count(m.size()) * C;
    case BasisKind::Sg: return m.size() * (4 + C);
    case BasisKind::Sb: return m.size() * (5 + C);
    case BasisKind::Sv: {
      const auto& p = std::get<SvParams>(m.params);
      return m.size() * ((p.mode == SvTauMode::Explicit ? 4 : 3) + C);
    }
  }
  return 0;
}

namespace {

// Walks every parameter in the flat layout order.
template <typename F>
void visit_params(const SphericalModel& m, F&& f) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ShParams>) {
          for (Eigen::Index i = 0; i < p.coeffs.rows(); ++i)
            for (Eigen::Index c = 0; c < p.coeffs.cols(); ++c) f(p.coeffs(i, c));
        } else if constexpr (std::is_same_v<T, SgParams>) {
          for (Eigen::Index k = 0; k < p.dirs.cols(); ++k) {
            for (int a = 0; a < 3; ++a) f(p.dirs(a, k));
            f(p.log_tau[k]);
            for (Eigen::Index c = 0; c < p.amps.cols(); ++c) f(p.amps(k, c));
          }
        } else if constexpr (std::is_same_v<T, SbParams>) {
          for (Eigen::Index k = 0; k < p.dirs.cols(); ++k) {
            for (int a = 0; a < 3; ++a) f(p.dirs(a, k));
            f(p.alpha_raw[k]);
            f(p.beta_raw[k]);
            for (Eigen::Index c = 0; c < p.amps.cols(); ++c) f(p.amps(k, c));
          }
        } else {
          for (Eigen::Index k = 0; k < p.sites.cols(); ++k) {
            for (int a = 0; a < 3; ++a) f(p.sites(a, k));
            if (p.mode == SvTauMode::Explicit) f(p.log_tau[k]);
            for (Eigen::Index c = 0; c < p.values.cols(); ++c) f(p.values(k, c));
          }
        }
      },
      m.params);
}

template <typename F>
void visit_params_mut(SphericalModel& m, F&& f) {
  std::visit(
      [&](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ShParams>) {
          for (Eigen::Index i = 0; i < p.coeffs.rows(); ++i)
            for (Eigen::Index c = 0; c < p.coeffs.cols(); ++c) f(p.coeffs(i, c));
        } else if constexpr (std::is_same_v<T, SgParams>) {
          for (Eigen::Index k = 0; k < p.dirs.cols(); ++k) {
            for (int a = 0; a < 3; ++a) f(p.dirs(a, k));
            f(p.log_tau[k]);
            for (Eigen::Index c = 0; c < p.amps.cols(); ++c) f(p.amps(k, c));
          }
        } else if constexpr (std::is_same_v<T, SbParams>) {
          for (Eigen::Index k = 0; k < p.dirs.cols(); ++k) {
            for (int a = 0; a < 3; ++a) f(p.dirs(a, k));
            f(p.alpha_raw[k]);
            f(p.beta_raw[k]);
            for (Eigen::Index c = 0; c < p.amps.cols(); ++c) f(p.amps(k, c));
          }
        } else {
          for (Eigen::Index k = 0; k < p.sites.cols(); ++k) {
            for (int a = 0; a < 3; ++a) f(p.sites(a, k));
            if (p.mode == SvTauMode::Explicit) f(p.log_tau[k]);
            for (Eigen::Index c = 0; c < p.values.cols(); ++c) f(p.values(k, c));
          }
        }
      },
      m.params);
}

}  // namespace

Eigen::VectorXd pack(const SphericalModel& m) {
  Eigen::VectorXd theta(param_count(m));
  Eigen::Index i = 0;
  visit_params(m, [&](double v) { theta[i++] = v; });
  return theta;
}

void unpack(const Eigen::VectorXd& theta, SphericalModel& m) {
  if (theta.size() != param_count(m))
    throw std::invalid_argument("unpack: size mismatch");
  Eigen::Index i = 0;
  visit_params_mut(m, [&](double& v) { v = theta[i++]; });
}

void check_finite(const SphericalModel& m) {
  int i = 0;
  int bad = -1;
  visit_params(m, [&](double v) {
    if (bad < 0 && !std::isfinite(v)) bad = i;
    ++i;
  });
  if (bad >= 0) throw NumericError("non-finite model parameter", bad);
}

// ---- SH ----

namespace {

void sh_eval_into(const ShParams& p, const UnitDir& d, double* out) {
  const int N = sh_count(p.degree), C = (int)p.coeffs.cols();
  tls_basis.resize(N);
  sh_basis(p.degree, d.vec(), tls_basis.data());
  for (int c = 0; c < C; ++c) out[c] = 0.0;
  for (int i = 0; i < N; ++i) {
    double y = tls_basis[i];
    for (int c = 0; c < C; ++c) out[c] += y * p.coeffs(i, c);
  }
}

void sh_grad_accum(const ShParams& p, const UnitDir& d, const double* up, double* g) {
  const int N = sh_count(p.degree), C = (int)p.coeffs.cols();
  tls_basis.resize(N);
  sh_basis(p.degree, d.vec(), tls_basis.data());
  for (int i = 0; i < N; ++i) {
    double y = tls_basis[i];
    for (int c = 0; c < C; ++c) g[i * C + c] += y * up[c];
  }
}

// ---- SG ----

void sg_eval_into(const SgParams& p, const UnitDir& d, double* out) {
  const int K = (int)p.dirs.cols(), C = (int)p.amps.cols();
  for (int c = 0; c < C; ++c) out[c] = 0.0;
  for (int k = 0; k < K; ++k) {
    double n = p.dirs.col(k).norm();
    double dw = p.dirs.col(k).dot(d.vec()) / n;
    double e = std::exp(std::exp(p.log_tau[k]) * (dw - 1.0));
    for (int c = 0; c < C; ++c) out[c] += e * p.amps(k, c);
  }
}

void sg_grad_accum(const SgParams& p, const UnitDir& d, const double* up, double* g) {
  const int K = (int)p.dirs.cols(), C = (int)p.amps.cols();
  const int stride = 4 + C;
  for (int k = 0; k < K; ++k) {
    double n = p.dirs.col(k).norm();
    Vec3 sh = p.dirs.col(k) / n;
    double dw = sh.dot(d.vec());
    double tau = std::exp(p.log_tau[k]);
    double e = std::exp(tau * (dw - 1.0));
    double a = 0.0;
    for (int c = 0; c < C; ++c) a += up[c] * p.amps(k, c);
    double* gk = g + k * stride;
    Vec3 dd = (d.vec() - dw * sh) / n;
    double common = a * e * tau;
    for (int i = 0; i < 3; ++i) gk[i] += common * dd[i];
    gk[3] += a * e * tau * (dw - 1.0);
    for (int c = 0; c < C; ++c) gk[4 + c] += e * up[c];
  }
}

// ---- SB ----

void sb_eval_into(const SbParams& p, const UnitDir& d, double* out) {
  const int K = (int)p.dirs.cols(), C = (int)p.amps.cols();
  for (int c = 0; c < C; ++c) out[c] = 0.0;
  for (int k = 0; k < K; ++k) {
    double n = p.dirs.col(k).norm();
    double dw = p.dirs.col(k).dot(d.vec()) / n;
    double bp = std::max(1.0 + dw, kSbClamp);
    double bm = std::max(1.0 - dw, kSbClamp);
    double alpha = softplus(p.alpha_raw[k]);
    double beta = softplus(p.beta_raw[k]);
    double f = std::pow(bp, alpha - 1.0) * std::pow(bm, beta - 1.0);
    for (int c = 0; c < C; ++c) out[c] += f * p.amps(k, c);
  }
}

void sb_grad_accum(const SbParams& p, const UnitDir& d, const double* up, double* g) {
  const int K = (int)p.dirs.cols(), C = (int)p.amps.cols();
  const int stride = 5 + C;
  for (int k = 0; k < K; ++k) {
    double n = p.dirs.col(k).norm();
    Vec3 sh = p.dirs.col(k) / n;
    double dw = sh.dot(d.vec());
    double bp = std::max(1.0 + dw, kSbClamp);
    double bm = std::max(1.0 - dw, kSbClamp);
    double alpha = softplus(p.alpha_raw[k]);
    double beta = softplus(p.beta_raw[k]);
    double f = std::pow(bp, alpha - 1.0) * std::pow(bm, beta - 1.0);
    double a = 0.0;
    for (int c = 0; c < C; ++c) a += up[c] * p.amps(k, c);
    double* gk = g + k * stride;
    double dfdd = f * ((1.0 + dw > kSbClamp ? (alpha - 1.0) / bp : 0.0) -
                       (1.0 - dw > kSbClamp ? (beta - 1.0) / bm : 0.0));
    Vec3 dd = (d.vec() - dw * sh) / n;
    for (int i = 0; i < 3; ++i) gk[i] += a * dfdd * dd[i];
    gk[3] += a * f * std::log(bp) * sigmoid(p.alpha_raw[k]);
    gk[4] += a * f * std::log(bm) * sigmoid(p.beta_raw[k]);
    for (int c = 0; c < C; ++c) gk[5 + c] += f * up[c];
  }
}

// ---- SV ----

// Fills tls_weights with the softmax weights; tls_dots holds s_hat.w and
// tls_logits the raw logits (explicit mode only fills dots).
void sv_weights_impl(const SvParams& p, const UnitDir& d) {
  const int K = (int)p.sites.cols();
  tls_logits.resize(K);
  tls_weights.resize(K);
  tls_dots.resize(K);
  if (p.mode == SvTauMode::Norm) {
    for (int k = 0; k < K; ++k) tls_logits[k] = p.sites.col(k).dot(d.vec());
  } else {
    for (int k = 0; k < K; ++k) {
      double n = p.sites.col(k).norm();
      double dw = p.sites.col(k).dot(d.vec()) / n;
      tls_dots[k] = dw;
      tls_logits[k] = std::exp(p.log_tau[k]) * dw;
    }
  }
  double mx = tls_logits[0];
  for (int k = 1; k < K; ++k) mx = std::max(mx, tls_logits[k]);
  double sum = 0.0;
  for (int k = 0; k < K; ++k) {
    tls_weights[k] = std::exp(tls_logits[k] - mx);
    sum += tls_weights[k];
  }
  for (int k = 0; k < K; ++k) tls_weights[k] /= sum;
}

void sv_eval_into_impl(const SvParams& p, const UnitDir& d, double* out) {
  const int K = (int)p.sites.cols(), C = (int)p.values.cols();
  sv_weights_impl(p, d);
  for (int c = 0; c < C; ++c) out[c] = 0.0;
  for (int k = 0; k < K; ++k) {
    double w = tls_weights[k];
    for (int c = 0; c < C; ++c) out[c] += w * p.values(k, c);
  }
}

void sv_grad_accum_impl(const SvParams& p, const UnitDir& d, const double* up,
                        double* g) {
  const int K = (int)p.sites.cols(), C = (int)p.values.cols();
  const bool expl = p.mode == SvTauMode::Explicit;
  const int stride = (expl ? 4 : 3) + C;
  sv_weights_impl(p, d);
  tls_dots.resize(K * 2);  // tail stashes per-site upstream.values dot
  double abar = 0.0;
  for (int k = 0; k < K; ++k) {
    double a = 0.0;
    for (int c = 0; c < C; ++c) a += up[c] * p.values(k, c);
    tls_dots[K + k] = a;
    abar += tls_weights[k] * a;
  }
  for (int k = 0; k < K; ++k) {
    double w = tls_weights[k];
    double gl = w * (tls_dots[K + k] - abar);
    double* gk = g + k * stride;
    if (expl) {
      double n = p.sites.col(k).norm();
      Vec3 sh = p.sites.col(k) / n;
      double dw = sh.dot(d.vec());
      double tau = std::exp(p.log_tau[k]);
      Vec3 ds = gl * tau * (d.vec() - dw * sh) / n;
      for (int i = 0; i < 3; ++i) gk[i] += ds[i];
      gk[3] += gl * tau * dw;
      for (int c = 0; c < C; ++c) gk[4 + c] += w * up[c];
    } else {
      for (int i = 0; i < 3; ++i) gk[i] += gl * d.vec()[i];
      for (int c = 0; c < C; ++c) gk[3 + c] += w * up[c];
    }
  }
}

}  // namespace

Eigen::VectorXd sv_weights(const SvParams& p, const UnitDir& d) {
  if (p.sites.cols() < 1) throw std::invalid_argument("sv_weights: no sites");
  sv_weights_impl(p, d);
  return Eigen::Map<Eigen::VectorXd>(tls_weights.data(), p.sites.cols());
}

void sv_eval_tau_into(const SvParams& p, const UnitDir& d, double tau, double* out) {
  const int K = (int)p.sites.cols(), C = (int)p.values.cols();
  tls_logits.resize(K);
  tls_weights.resize(K);
  for (int k = 0; k < K; ++k) {
    double n = p.sites.col(k).norm();
    tls_logits[k] = tau * (p.sites.col(k).dot(d.vec()) / n);
  }
  double mx = tls_logits[0];
  for (int k = 1; k < K; ++k) mx = std::max(mx, tls_logits[k]);
  double sum = 0.0;
  for (int k = 0; k < K; ++k) {
    tls_weights[k] = std::exp(tls_logits[k] - mx);
    sum += tls_weights[k];
  }
  for (int c = 0; c < C; ++c) out[c] = 0.0;
  for (int k = 0; k < K; ++k) {
    double w = tls_weights[k] / sum;
    for (int c = 0; c < C; ++c) out[c] += w * p.values(k, c);
  }
}

void sv_grad_tau_accum(const SvParams& p, const UnitDir& d, double tau,
                       const double* up, double* g) {
  const int K = (int)p.sites.cols(), C = (int)p.values.cols();
  const int stride = 3 + C;
  tls_logits.resize(K);
  tls_weights.resize(K);
  tls_dots.resize(2 * K);
  for (int k = 0; k < K; ++k) {
    double n = p.sites.col(k).norm();
    double dw = p.sites.col(k).dot(d.vec()) / n;
    tls_dots[k] = dw;
    tls_logits[k] = tau * dw;
  }
  double mx = tls_logits[0];
  for (int k = 1; k < K; ++k) mx = std::max(mx, tls_logits[k]);
  double sum = 0.0;
  for (int k = 0; k < K; ++k) {
    tls_weights[k] = std::exp(tls_logits[k] - mx);
    sum += tls_weights[k];
  }
  double abar = 0.0;
  for (int k = 0; k < K; ++k) {
    tls_weights[k] /= sum;
    double a = 0.0;
    for (int c = 0; c < C; ++c) a += up[c] * p.values(k, c);
    tls_dots[K + k] = a;
    abar += tls_weights[k] * a;
  }
  for (int k = 0; k < K; ++k) {
    double w = tls_weights[k];
    double gl = w * (tls_dots[K + k] - abar);
    double n = p.sites.col(k).norm();
    Vec3 sh = p.sites.col(k) / n;
    Vec3 ds = gl * tau * (d.vec() - tls_dots[k] * sh) / n;
    double* gk = g + k * stride;
    for (int i = 0; i < 3; ++i) gk[i] += ds[i];
    for (int c = 0; c < C; ++c) gk[3 + c] += w * up[c];
  }
}

void eval_into(const SphericalModel& m, const UnitDir& d, double* out) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ShParams>) sh_eval_into(p, d, out);
        else if constexpr (std::is_same_v<T, SgParams>) sg_eval_into(p, d, out);
        else if constexpr (std::is_same_v<T, SbParams>) sb_eval_into(p, d, out);
        else sv_eval_into_impl(p, d, out);
      },
      m.params);
}

Eigen::VectorXd eval(const SphericalModel& m, const UnitDir& d) {
  check_finite(m);
  Eigen::VectorXd out(m.channels());
  eval_into(m, d, out.data());
  return out;
}

void grad_accum(const SphericalModel& m, const UnitDir& d, const double* upstream,
                double* grad_out) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ShParams>) sh_grad_accum(p, d, upstream, grad_out);
        else if constexpr (std::is_same_v<T, SgParams>) sg_grad_accum(p, d, upstream, grad_out);
        else if constexpr (std::is_same_v<T, SbParams>) sb_grad_accum(p, d, upstream, grad_out);
        else sv_grad_accum_impl(p, d, upstream, grad_out);
      },
      m.params);
}

Eigen::VectorXd grad(const SphericalModel& m, const UnitDir& d,
                     const Eigen::VectorXd& upstream) {
  check_finite(m);
  if (upstream.size() != m.channels())
    throw std::invalid_argument("grad: upstream size must match channels");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(param_count(m));
  grad_accum(m, d, upstream.data(), g.data());
  return g;
}

// ---- constructors ----

SphericalModel make_sh(int degree, int channels) {
  if (degree < 0 || channels < 1) throw std::invalid_argument("make_sh: bad arguments");
  ShParams p;
  p.degree = degree;
  p.coeffs = Eigen::MatrixXd::Zero(sh_count(degree), channels);
  return SphericalModel{p};
}

namespace {

Eigen::Matrix3Xd fib_dirs(int n) {
  auto dirs = fibonacci_sphere(n);
  Eigen::Matrix3Xd m(3, n);
  for (int i = 0; i < n; ++i) m.col(i) = dirs[i].vec();
  return m;
}

}  // namespace

SphericalModel make_sg(int lobes, int channels, double tau) {
  if (lobes < 1 || channels < 1 || !(tau > 0))
    throw std::invalid_argument("make_sg: bad arguments");
  SgParams p;
  p.dirs = fib_dirs(lobes);
  p.log_tau = Eigen::VectorXd::Constant(lobes, std::log(tau));
  p.amps = Eigen::MatrixXd::Zero(lobes, channels);
  return SphericalModel{p};
}

SphericalModel make_sb(int lobes, int channels, double alpha, double beta) {
  if (lobes < 1 || channels < 1 || !(alpha > 0) || !(beta > 0))
    throw std::invalid_argument("make_sb: bad arguments");
  SbParams p;
  p.dirs = fib_dirs(lobes);
  p.alpha_raw = Eigen::VectorXd::Constant(lobes, softplus_inv(alpha));
  p.beta_raw = Eigen::VectorXd::Constant(lobes, softplus_inv(beta));
  p.amps = Eigen::MatrixXd::Zero(lobes, channels);
  return SphericalModel{p};
}

SphericalModel make_sv(int sites, int channels, SvTauMode mode, double tau) {
  if (sites < 1 || channels < 1 || !(tau > 0))
    throw std::invalid_argument("make_sv: bad arguments");
  SvParams p;
  p.mode = mode;
  p.sites = fib_dirs(sites);
  if (mode == SvTauMode::Explicit)
    p.log_tau = Eigen::VectorXd::Constant(sites, std::log(tau));
  else
    p.sites *= tau;
  p.values = Eigen::MatrixXd::Zero(sites, channels);
  return SphericalModel{p};
}

SphericalModel preset_sv8(int channels) {
  return make_sv(8, channels, SvTauMode::Norm, 1.0);
}

int matched_size(BasisKind kind, SvTauMode mode, int channels, int budget) {
  if (channels < 1 || budget < 1) throw std::invalid_argument("matched_size: bad arguments");
  if (kind == BasisKind::Sh) {
    int L = (int)std::floor(std::sqrt((double)budget / channels)) - 1;
    while (L >= 0 && sh_count(L) * channels > budget) --L;
    if (L < 0) throw std::invalid_argument("matched_size: budget too small for sh");
    while (sh_count(L + 1) * channels <= budget) ++L;
    return L;
  }
  int unit = 0;
  switch (kind) {
    case BasisKind::Sg: unit = 4 + channels; break;
    case BasisKind::Sb: unit = 5 + channels; break;
    case BasisKind::Sv: unit = (mode == SvTauMode::Explicit ? 4 : 3) + channels; break;
    default: break;
  }
  int n = budget / unit;
  if (n < 1) throw std::invalid_argument("matched_size: budget too small");
  return n;
}

// ---- model file I/O ----

void write_model(std::ostream& os, const SphericalModel& m) {
  os << std::setprecision(17);
  os << "SVMODEL 1\n";
  const int C = m.channels();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ShParams>) {
          os << "kind sh\nchannels " << C << "\ndegree " << p.degree << "\n";
          for (Eigen::Index i = 0; i < p.coeffs.rows(); ++i) {
            for (int c = 0; c < C; ++c) os << (c ? " " : "") << p.coeffs(i, c);
            os << "\n";
          }
        } else if constexpr (std::is_same_v<T, SgParams>) {
          os << "kind sg\nchannels " << C << "\ncount " << p.dirs.cols() << "\n";
          for (Eigen::Index k = 0; k < p.dirs.cols(); ++k) {
            os << p.dirs(0, k) << " " << p.dirs(1, k) << " " << p.dirs(2, k) << " "
               << p.log_tau[k];
            for (int c = 0; c < C; ++c) os << " " << p.amps(k, c);
            os << "\n";
          }
        } else if constexpr (std::is_same_v<T, SbParams>) {
          os << "kind sb\nchannels " << C << "\ncount " << p.dirs.cols() << "\n";
          for (Eigen::Index k = 0; k < p.dirs.cols(); ++k) {
            os << p.dirs(0, k) << " " << p.dirs(1, k) << " " << p.dirs(2, k) << " "
               << p.alpha_raw[k] << " " << p.beta_raw[k];
            for (int c = 0; c < C; ++c) os << " " << p.amps(k, c);
            os << "\n";
          }
        } else {
          const bool expl = p.mode == SvTauMode::Explicit;
          os << "kind sv\nchannels " << C << "\nmode " << (expl ? "explicit" : "norm")
             << "\ncount " << p.sites.cols() << "\n";
          for (Eigen::Index k = 0; k < p.sites.cols(); ++k) {
            os << p.sites(0, k) << " " << p.sites(1, k) << " " << p.sites(2, k);
            if (expl) os << " " << p.log_tau[k];
            for (int c = 0; c < C; ++c) os << " " << p.values(k, c);
            os << "\n";
          }
        }
      },
      m.params);
}

SphericalModel read_model(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (!is || magic != "SVMODEL" || version != 1)
    throw FormatError("model file: unknown magic or version");
  auto expect = [&](const char* key) {
    std::string s;
    is >> s;
    if (!is || s != key) throw FormatError(std::string("model file: expected ") + key);
  };
  expect("kind");
  std::string kind;
  is >> kind;
  expect("channels");
  int C = 0;
  is >> C;
  if (!is || C < 1) throw FormatError("model file: bad channels");
  auto read_vals = [&](int count, auto&& fill) {
    for (int k = 0; k < count; ++k) fill(k);
    if (!is) throw FormatError("model file: truncated values");
  };
  if (kind == "sh") {
    expect("degree");
    int L = 0;
    is >> L;
    if (!is || L < 0) throw FormatError("model file: bad degree");
    SphericalModel m = make_sh(L, C);
    auto& p = std::get<ShParams>(m.params);
    read_vals(sh_count(L), [&](int i) {
      for (int c = 0; c < C; ++c) is >> p.coeffs(i, c);
    });
    return m;
  }
  if (kind == "sg" || kind == "sb") {
    expect("count");
    int K = 0;
    is >> K;
    if (!is || K < 1) throw FormatError("model file: bad count");
    if (kind == "sg") {
      SphericalModel m = make_sg(K, C);
      auto& p = std::get<SgParams>(m.params);
      read_vals(K, [&](int k) {
        is >> p.dirs(0, k) >> p.dirs(1, k) >> p.dirs(2, k) >> p.log_tau[k];
        for (int c = 0; c < C; ++c) is >> p.amps(k, c);
      });
      return m;
    }
    SphericalModel m = make_sb(K, C);
    auto& p = std::get<SbParams>(m.params);
    read_vals(K, [&](int k) {
      is >> p.dirs(0, k) >> p.dirs(1, k) >> p.dirs(2, k) >> p.alpha_raw[k] >>
          p.beta_raw[k];
      for (int c = 0; c < C; ++c) is >> p.amps(k, c);
    });
    return m;
  }
  if (kind == "sv") {
    expect("mode");
    std::string mode;
    is >> mode;
    if (mode != "explicit" && mode != "norm") throw FormatError("model file: bad mode");
    expect("count");
    int K = 0;
    is >> K;
    if (!is || K < 1) throw FormatError("model file: bad count");
    const bool expl = mode == "explicit";
    SphericalModel m = make_sv(K, C, expl ? SvTauMode::Explicit : SvTauMode::Norm);
    auto& p = std::get<SvParams>(m.params);
    read_vals(K, [&](int k) {
      is >> p.sites(0, k) >> p.sites(1, k) >> p.sites(2, k);
      if (expl) is >> p.log_tau[k];
      for (int c = 0; c < C; ++c) is >> p.values(k, c);
    });
    return m;
  }
  throw FormatError("model file: unknown kind " + kind);
}

void save_model(const SphericalModel& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_model: cannot open " + path);
  write_model(f, m);
  if (!f) throw std::runtime_error("save_model: write failed for " + path);
}

SphericalModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("load_model: cannot open " + path);
  return read_model(f);
}

}  // namespace sphervor
