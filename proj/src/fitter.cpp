#include "sphervor/fitter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sphervor/errors.hpp"
#include "sphervor/parallel.hpp"
#include "sphervor/sh.hpp"

namespace sphervor {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                             Eigen::RowMajor>>;
using CRowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                    Eigen::Dynamic, Eigen::RowMajor>>;

void check_data(const SphericalModel& m, const SampleSet& data) {
  if (data.size() < 1) throw std::invalid_argument("fit: empty sample set");
  if (data.channels() != m.channels())
    throw std::invalid_argument("fit: sample channels do not match model");
  if ((size_t)data.values.rows() != data.dirs.size())
    throw std::invalid_argument("fit: values rows do not match dirs");
  if (!data.values.allFinite()) throw std::invalid_argument("fit: non-finite data");
}

// Dense SH design matrix, worth it whenever it fits in memory.
constexpr long kShCacheLimit = 40'000'000;

Eigen::MatrixXd sh_design(const SampleSet& data, int degree) {
  const int n = data.size(), N = sh_count(degree);
  Eigen::MatrixXd B(n, N);
  std::vector<double> row(N);
  for (int i = 0; i < n; ++i) {
    sh_basis(degree, data.dirs[i].vec(), row.data());
    for (int j = 0; j < N; ++j) B(i, j) = row[j];
  }
  return B;
}

double sh_loss_grad_cached(const Eigen::MatrixXd& B, const SampleSet& data,
                           const Eigen::VectorXd& theta, Eigen::VectorXd* grad_out) {
  const int N = (int)B.cols(), C = data.channels(), n = data.size();
  CRowMajorMap coeffs(theta.data(), N, C);
  Eigen::MatrixXd R = B * coeffs - data.values;
  const double scale = 1.0 / ((double)n * C);
  if (grad_out) {
    RowMajorMap g(grad_out->data(), N, C);
    g = 2.0 * scale * (B.transpose() * R);
  }
  return R.squaredNorm() * scale;
}

Eigen::MatrixXd dir_matrix(const SampleSet& data) {
  Eigen::MatrixXd D(data.size(), 3);
  for (int i = 0; i < data.size(); ++i) D.row(i) = data.dirs[i].vec().transpose();
  return D;
}

// The batched paths below process all samples as n x K arrays. Same math as
// the per-direction accumulators in bases.cpp (which the finite-difference
// tests pin); only the summation order differs.

double sg_loss_grad_batch(const SgParams& p, const SampleSet& data,
                          Eigen::VectorXd* g) {
  const int n = data.size(), C = (int)p.amps.cols(), K = (int)p.dirs.cols();
  const double scale = 1.0 / ((double)n * C);
  Eigen::MatrixXd D = dir_matrix(data);
  Eigen::VectorXd norms = p.dirs.colwise().norm();
  Eigen::MatrixXd Shat = p.dirs.array().rowwise() / norms.transpose().array();
  Eigen::MatrixXd M = D * Shat;
  Eigen::ArrayXd tau = p.log_tau.array().exp();
  Eigen::ArrayXXd E = ((M.array() - 1.0).rowwise() * tau.transpose()).exp();
  Eigen::MatrixXd R = E.matrix() * p.amps - data.values;
  double loss = scale * R.squaredNorm();
  if (!g) return loss;
  Eigen::MatrixXd U = (2.0 * scale) * R;
  Eigen::MatrixXd gA = E.matrix().transpose() * U;
  Eigen::ArrayXXd W = (U * p.amps.transpose()).array() * E;
  Eigen::ArrayXd glt = (W * (M.array() - 1.0)).colwise().sum().transpose() * tau;
  Eigen::MatrixXd DtW = D.transpose() * W.matrix();
  Eigen::ArrayXd wm = (W * M.array()).colwise().sum();
  for (int k = 0; k < K; ++k) {
    double* gk = g->data() + k * (4 + C);
    Vec3 ds = (tau[k] / norms[k]) * (DtW.col(k) - wm[k] * Shat.col(k));
    for (int i = 0; i < 3; ++i) gk[i] += ds[i];
    gk[3] += glt[k];
    for (int c = 0; c < C; ++c) gk[4 + c] += gA(k, c);
  }
  return loss;
}

double sb_loss_grad_batch(const SbParams& p, const SampleSet& data,
                          Eigen::VectorXd* g) {
  const int n = data.size(), C = (int)p.amps.cols(), K = (int)p.dirs.cols();
  const double scale = 1.0 / ((double)n * C);
  Eigen::MatrixXd D = dir_matrix(data);
  Eigen::VectorXd norms = p.dirs.colwise().norm();
  Eigen::MatrixXd Shat = p.dirs.array().rowwise() / norms.transpose().array();
  Eigen::MatrixXd M = D * Shat;
  Eigen::ArrayXd alpha(K), beta(K), siga(K), sigb(K);
  for (int k = 0; k < K; ++k) {
    alpha[k] = softplus(p.alpha_raw[k]);
    beta[k] = softplus(p.beta_raw[k]);
    siga[k] = sigmoid(p.alpha_raw[k]);
    sigb[k] = sigmoid(p.beta_raw[k]);
  }
  Eigen::ArrayXXd BP = (1.0 + M.array()).max(kSbClamp);
  Eigen::ArrayXXd BM = (1.0 - M.array()).max(kSbClamp);
  Eigen::ArrayXXd LP = BP.log(), LM = BM.log();
  Eigen::ArrayXXd F = (LP.rowwise() * (alpha - 1.0).transpose() +
                       LM.rowwise() * (beta - 1.0).transpose())
                          .exp();
  Eigen::MatrixXd R = F.matrix() * p.amps - data.values;
  double loss = scale * R.squaredNorm();
  if (!g) return loss;
  Eigen::MatrixXd U = (2.0 * scale) * R;
  Eigen::MatrixXd gA = F.matrix().transpose() * U;
  Eigen::ArrayXXd A = (U * p.amps.transpose()).array();
  Eigen::ArrayXXd indP = (1.0 + M.array() > kSbClamp).cast<double>();
  Eigen::ArrayXXd indM = (1.0 - M.array() > kSbClamp).cast<double>();
  Eigen::ArrayXXd dF =
      F * ((indP / BP).rowwise() * (alpha - 1.0).transpose() -
           (indM / BM).rowwise() * (beta - 1.0).transpose());
  Eigen::ArrayXXd WD = A * dF;
  Eigen::MatrixXd DtWD = D.transpose() * WD.matrix();
  Eigen::ArrayXd wm = (WD * M.array()).colwise().sum();
  Eigen::ArrayXd galpha = (A * F * LP).colwise().sum().transpose() * siga;
  Eigen::ArrayXd gbeta = (A * F * LM).colwise().sum().transpose() * sigb;
  for (int k = 0; k < K; ++k) {
    double* gk = g->data() + k * (5 + C);
    Vec3 ds = (DtWD.col(k) - wm[k] * Shat.col(k)) / norms[k];
    for (int i = 0; i < 3; ++i) gk[i] += ds[i];
    gk[3] += galpha[k];
    gk[4] += gbeta[k];
    for (int c = 0; c < C; ++c) gk[5 + c] += gA(k, c);
  }
  return loss;
}

double sv_loss_grad_batch(const SvParams& p, const SampleSet& data,
                          Eigen::VectorXd* g) {
  const int n = data.size(), C = (int)p.values.cols(), K = (int)p.sites.cols();
  const double scale = 1.0 / ((double)n * C);
  const bool expl = p.mode == SvTauMode::Explicit;
  Eigen::MatrixXd D = dir_matrix(data);
  Eigen::MatrixXd L, M, Shat;
  Eigen::VectorXd norms;
  Eigen::ArrayXd tau;
  if (expl) {
    norms = p.sites.colwise().norm();
    Shat = p.sites.array().rowwise() / norms.transpose().array();
    M = D * Shat;
    tau = p.log_tau.array().exp();
    L = M.array().rowwise() * tau.transpose();
  } else {
    L = D * p.sites;
  }
  Eigen::ArrayXd mx = L.rowwise().maxCoeff();
  Eigen::ArrayXXd W = (L.array().colwise() - mx).exp();
  W.colwise() /= W.rowwise().sum();
  Eigen::MatrixXd R = W.matrix() * p.values - data.values;
  double loss = scale * R.squaredNorm();
  if (!g) return loss;
  Eigen::MatrixXd U = (2.0 * scale) * R;
  Eigen::MatrixXd gV = W.matrix().transpose() * U;
  Eigen::ArrayXXd A = (U * p.values.transpose()).array();
  Eigen::ArrayXd abar = (W * A).rowwise().sum();
  Eigen::ArrayXXd GL = W * (A.colwise() - abar);
  Eigen::MatrixXd DtGL = D.transpose() * GL.matrix();
  const int stride = (expl ? 4 : 3) + C;
  if (expl) {
    Eigen::ArrayXd wm = (GL * M.array()).colwise().sum();
    for (int k = 0; k < K; ++k) {
      double* gk = g->data() + k * stride;
      Vec3 ds = (tau[k] / norms[k]) * (DtGL.col(k) - wm[k] * Shat.col(k));
      for (int i = 0; i < 3; ++i) gk[i] += ds[i];
      gk[3] += tau[k] * wm[k];
      for (int c = 0; c < C; ++c) gk[4 + c] += gV(k, c);
    }
  } else {
    for (int k = 0; k < K; ++k) {
      double* gk = g->data() + k * stride;
      for (int i = 0; i < 3; ++i) gk[i] += DtGL(i, k);
      for (int c = 0; c < C; ++c) gk[3 + c] += gV(k, c);
    }
  }
  return loss;
}

double generic_loss_grad(const SphericalModel& m, const SampleSet& data,
                         Eigen::VectorXd* grad_out) {
  if (grad_out) grad_out->setZero();
  if (const auto* sg = std::get_if<SgParams>(&m.params))
    return sg_loss_grad_batch(*sg, data, grad_out);
  if (const auto* sb = std::get_if<SbParams>(&m.params))
    return sb_loss_grad_batch(*sb, data, grad_out);
  if (const auto* sv = std::get_if<SvParams>(&m.params))
    return sv_loss_grad_batch(*sv, data, grad_out);
  const int n = data.size(), C = data.channels();
  const double scale = 1.0 / ((double)n * C);
  std::vector<double> pred(C), up(C);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    eval_into(m, data.dirs[i], pred.data());
    double se = 0.0;
    for (int c = 0; c < C; ++c) {
      double r = pred[c] - data.values(i, c);
      se += r * r;
      up[c] = 2.0 * scale * r;
    }
    loss += se;
    if (grad_out) grad_accum(m, data.dirs[i], up.data(), grad_out->data());
  }
  return loss * scale;
}

}  // namespace

double psnr(double mse_value, double peak) {
  if (mse_value < 0.0 || !(peak > 0.0))
    throw std::invalid_argument("psnr: mse must be >= 0 and peak > 0");
  if (mse_value == 0.0) return 300.0;
  return 10.0 * std::log10(peak * peak / mse_value);
}

double mse(const SphericalModel& m, const SampleSet& data) {
  check_data(m, data);
  check_finite(m);
  return generic_loss_grad(m, data, nullptr);
}

double loss_and_grad(const SphericalModel& m, const SampleSet& data,
                     Eigen::VectorXd& grad_out) {
  check_data(m, data);
  check_finite(m);
  grad_out.resize(param_count(m));
  return generic_loss_grad(m, data, &grad_out);
}

void Adam::step(Eigen::VectorXd& theta, const Eigen::VectorXd& g, double lr) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * g;
  v_.array() = beta2_ * v_.array() + (1.0 - beta2_) * g.array().square();
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  theta.array() -=
      lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + eps_);
}

FitReport fit(SphericalModel init, const SampleSet& data, const FitConfig& cfg) {
  check_data(init, data);
  check_finite(init);
  if (cfg.iterations < 0 || !(cfg.step_size > 0.0))
    throw std::invalid_argument("fit: bad config");

  const auto t0 = Clock::now();
  const int P = param_count(init);
  Eigen::VectorXd theta = pack(init);
  Eigen::VectorXd g(P);
  Adam opt(P, cfg.beta1, cfg.beta2, cfg.epsilon);

  const bool cached_sh = init.kind() == BasisKind::Sh &&
                         (long)data.size() * sh_count(init.size()) <= kShCacheLimit;
  Eigen::MatrixXd B;
  if (cached_sh) B = sh_design(data, init.size());

  auto compute = [&](const Eigen::VectorXd& th, Eigen::VectorXd* gout) {
    if (cached_sh) return sh_loss_grad_cached(B, data, th, gout);
    unpack(th, init);
    return generic_loss_grad(init, data, gout);
  };

  FitReport rep;
  rep.loss_trace.reserve(cfg.iterations);
  Eigen::VectorXd last_finite = theta;
  // Divergence before any finite loss reports inf/-inf rather than pretending
  // the untouched init scored anything.
  double last_loss = std::numeric_limits<double>::infinity();
  auto safe_psnr = [&](double loss) {
    return std::isfinite(loss) ? psnr(loss, cfg.peak)
                               : -std::numeric_limits<double>::infinity();
  };
  for (int it = 0; it < cfg.iterations; ++it) {
    double loss = compute(theta, &g);
    if (!std::isfinite(loss)) {
      unpack(last_finite, init);
      rep.model = init;
      rep.final_loss = last_loss;
      rep.final_psnr = safe_psnr(last_loss);
      rep.iterations = it;
      rep.wall_ms = ms_since(t0);
      throw DivergedError(std::move(rep));
    }
    last_finite = theta;
    last_loss = loss;
    rep.loss_trace.push_back(loss);
    opt.step(theta, g, cfg.step_size);
  }
  double final_loss = compute(theta, nullptr);
  if (!std::isfinite(final_loss)) {
    unpack(last_finite, init);
    rep.model = init;
    rep.final_loss = last_loss;
    rep.final_psnr = safe_psnr(last_loss);
    rep.iterations = cfg.iterations;
    rep.wall_ms = ms_since(t0);
    throw DivergedError(std::move(rep));
  }
  unpack(theta, init);
  rep.model = std::move(init);
  rep.final_loss = final_loss;
  rep.final_psnr = psnr(final_loss, cfg.peak);
  rep.iterations = cfg.iterations;
  rep.wall_ms = ms_since(t0);
  return rep;
}

void randomize_model(SphericalModel& m, std::mt19937_64& rng) {
  std::normal_distribution<double> val(0.0, 0.5);
  std::uniform_real_distribution<double> logtau(std::log(0.5), std::log(20.0));
  std::visit(
      [&](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ShParams>) {
          for (Eigen::Index i = 0; i < p.coeffs.rows(); ++i)
            for (Eigen::Index c = 0; c < p.coeffs.cols(); ++c) p.coeffs(i, c) = val(rng);
        } else if constexpr (std::is_same_v<T, SgParams>) {
          for (Eigen::Index k = 0; k < p.dirs.cols(); ++k) {
            p.dirs.col(k) = uniform_dir(rng).vec();
            p.log_tau[k] = logtau(rng);
            for (Eigen::Index c = 0; c < p.amps.cols(); ++c) p.amps(k, c) = val(rng);
          }
        } else if constexpr (std::is_same_v<T, SbParams>) {
          for (Eigen::Index k = 0; k < p.dirs.cols(); ++k) {
            p.dirs.col(k) = uniform_dir(rng).vec();
            p.alpha_raw[k] = softplus_inv(std::exp(logtau(rng)));
            p.beta_raw[k] = softplus_inv(std::exp(logtau(rng)));
            for (Eigen::Index c = 0; c < p.amps.cols(); ++c) p.amps(k, c) = val(rng);
          }
        } else {
          for (Eigen::Index k = 0; k < p.sites.cols(); ++k) {
            Vec3 dir = uniform_dir(rng).vec();
            double tau = std::exp(logtau(rng));
            if (p.mode == SvTauMode::Explicit) {
              p.sites.col(k) = dir;
              p.log_tau[k] = std::log(tau);
            } else {
              p.sites.col(k) = tau * dir;
            }
            for (Eigen::Index c = 0; c < p.values.cols(); ++c) p.values(k, c) = val(rng);
          }
        }
      },
      m.params);
}

RestartSummary restart_experiment(const SphericalModel& shape, const SampleSet& data,
                                  const FitConfig& cfg, int restarts, int threads) {
  if (restarts < 1) throw std::invalid_argument("restart_experiment: restarts must be >= 1");
  check_data(shape, data);
  RestartSummary out;
  out.records.resize(restarts);
  parallel_for(restarts, threads, [&](int r) {
    RestartRecord rec;
    rec.restart = r;
    rec.seed = splitmix64(cfg.seed, (uint64_t)r);
    std::mt19937_64 rng(rec.seed);
    SphericalModel m = shape;
    randomize_model(m, rng);
    const auto t0 = Clock::now();
    try {
      FitReport rep = fit(std::move(m), data, cfg);
      rec.final_loss = rep.final_loss;
      rec.final_psnr = rep.final_psnr;
    } catch (const DivergedError& e) {
      rec.diverged = true;
      rec.final_loss = e.last.final_loss;
      rec.final_psnr = e.last.final_psnr;
    }
    rec.wall_ms = ms_since(t0);
    out.records[r] = rec;
  });

  std::vector<double> ps;
  ps.reserve(restarts);
  for (const auto& r : out.records) ps.push_back(r.final_psnr);
  std::sort(ps.begin(), ps.end());
  out.min_psnr = ps.front();
  out.max_psnr = ps.back();
  out.median_psnr = restarts % 2 ? ps[restarts / 2]
                                 : 0.5 * (ps[restarts / 2 - 1] + ps[restarts / 2]);
  out.mean_psnr = std::accumulate(ps.begin(), ps.end(), 0.0) / restarts;
  double var = 0.0;
  for (double p : ps) var += (p - out.mean_psnr) * (p - out.mean_psnr);
  out.stddev_psnr = std::sqrt(var / restarts);
  return out;
}

GibbsReport gibbs_demo(const SampleSet& data, int degree, const FitConfig& cfg,
                       int dense_grid) {
  GibbsReport rep;
  rep.fit = fit(make_sh(degree, data.channels()), data, cfg);
  rep.target_max = data.values.maxCoeff();
  const int C = data.channels();
  std::vector<double> out(C);
  double mx = -std::numeric_limits<double>::infinity();
  for (const UnitDir& d : fibonacci_sphere(dense_grid)) {
    eval_into(rep.fit.model, d, out.data());
    for (int c = 0; c < C; ++c) mx = std::max(mx, out[c]);
  }
  rep.overshoot = mx - rep.target_max;
  return rep;
}

}  // namespace sphervor
