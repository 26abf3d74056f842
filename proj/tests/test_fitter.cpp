#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "sphervor/errors.hpp"
#include "sphervor/fitter.hpp"
#include "sphervor/sh.hpp"
#include "sphervor/targets.hpp"

using namespace sphervor;

namespace {

SampleSet constant_set(int n, int channels, double value, uint64_t seed) {
  SampleSet s;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) s.dirs.push_back(uniform_dir(rng));
  s.values = Eigen::MatrixXd::Constant(n, channels, value);
  return s;
}

}  // namespace

TEST_CASE("psnr matches hand-computed values") {
  CHECK(psnr(0.01) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(1.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(psnr(0.0) == 300.0);
  CHECK(psnr(0.01, 2.0) == doctest::Approx(10.0 * std::log10(400.0)).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(psnr(0.01, 0.0), std::invalid_argument);
}

TEST_CASE("mse of the generating model is at numerical zero") {
  std::mt19937_64 rng(11);
  SphericalModel m = make_sv(6, 3, SvTauMode::Norm);
  randomize_model(m, rng);
  SampleSet data = sample_model(m, 500);
  // The batched predictor and the per-direction sampler differ only in
  // summation order, so the residual sits at rounding noise, not exact zero.
  double e = mse(m, data);
  CHECK(e < 1e-24);
  CHECK(psnr(e) > 240.0);
}

TEST_CASE("loss gradient matches finite differences for cached and generic paths") {
  SampleSet data = sample_target(builtin_target("cells2"), 60);
  std::mt19937_64 rng(21);
  for (SphericalModel m : {make_sh(2, 3), make_sg(3, 3)}) {
    randomize_model(m, rng);
    Eigen::VectorXd g;
    double loss = loss_and_grad(m, data, g);
    CHECK(loss == doctest::Approx(mse(m, data)).epsilon(1e-12));
    Eigen::VectorXd th = pack(m);
    SphericalModel probe = m;
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < th.size(); ++i) {
      Eigen::VectorXd tp = th, tm = th;
      tp[i] += h;
      tm[i] -= h;
      unpack(tp, probe);
      double fp = mse(probe, data);
      unpack(tm, probe);
      double fm = mse(probe, data);
      double num = (fp - fm) / (2.0 * h);
      CHECK(std::abs(g[i] - num) <= 1e-4 * std::max({std::abs(g[i]), std::abs(num), 1e-2}));
    }
  }
}

TEST_CASE("batched loss and gradient match the per-sample accumulators") {
  SampleSet data = sample_target(builtin_target("cells2"), 150);
  const int C = data.channels();
  std::mt19937_64 rng(31);
  for (SphericalModel m : {make_sg(4, C), make_sb(4, C), make_sv(5, C, SvTauMode::Explicit),
                           make_sv(5, C, SvTauMode::Norm)}) {
    randomize_model(m, rng);
    Eigen::VectorXd g;
    double loss = loss_and_grad(m, data, g);
    const double scale = 1.0 / ((double)data.size() * C);
    Eigen::VectorXd g_ref = Eigen::VectorXd::Zero(param_count(m));
    std::vector<double> pred(C), up(C);
    double loss_ref = 0.0;
    for (int i = 0; i < data.size(); ++i) {
      eval_into(m, data.dirs[i], pred.data());
      for (int c = 0; c < C; ++c) {
        double r = pred[c] - data.values(i, c);
        loss_ref += scale * r * r;
        up[c] = 2.0 * scale * r;
      }
      grad_accum(m, data.dirs[i], up.data(), g_ref.data());
    }
    CHECK(loss == doctest::Approx(loss_ref).epsilon(1e-12));
    for (Eigen::Index j = 0; j < g.size(); ++j)
      CHECK(g[j] == doctest::Approx(g_ref[j]).epsilon(1e-9));
  }
}

TEST_CASE("harmonic fit reaches the least-squares solution") {
  SampleSet data = sample_target(builtin_target("shmixL2"), 400);
  FitConfig cfg;
  cfg.iterations = 3000;
  cfg.step_size = 0.05;
  FitReport rep = fit(make_sh(2, data.channels()), data, cfg);
  CHECK(rep.final_loss <= 1e-6);
  CHECK(rep.iterations == 3000);
  CHECK(rep.loss_trace.size() == 3000);
  // Adam wobbles around the optimum at the scale of the step size; a short
  // fine-step pass settles it.
  cfg.iterations = 2000;
  cfg.step_size = 5e-4;
  rep = fit(rep.model, data, cfg);
  // Direct least squares on the same design as the oracle.
  const int N = sh_count(2);
  Eigen::MatrixXd B(data.size(), N);
  Eigen::VectorXd row(N);  // sh_basis writes contiguously; B's rows are strided
  for (int i = 0; i < data.size(); ++i) {
    sh_basis(2, data.dirs[i].vec(), row.data());
    B.row(i) = row;
  }
  Eigen::MatrixXd target = B.colPivHouseholderQr().solve(data.values);
  const auto& coeffs = std::get<ShParams>(rep.model.params).coeffs;
  CHECK((coeffs - target).lpNorm<Eigen::Infinity>() < 1e-3);
}

TEST_CASE("loss trace decreases overall and final loss matches a recompute") {
  SampleSet data = sample_target(builtin_target("cells2"), 300);
  SphericalModel init = make_sv(6, 3, SvTauMode::Norm);
  std::mt19937_64 rng(3);
  randomize_model(init, rng);
  FitConfig cfg;
  cfg.iterations = 200;
  cfg.step_size = 0.05;
  FitReport rep = fit(init, data, cfg);
  CHECK(rep.loss_trace.front() > rep.final_loss);
  CHECK(rep.final_loss == doctest::Approx(mse(rep.model, data)).epsilon(1e-12));
  CHECK(rep.final_psnr == doctest::Approx(psnr(rep.final_loss)).epsilon(1e-12));
}

TEST_CASE("zero-iteration fit reports the initial loss") {
  SampleSet data = sample_target(builtin_target("cells2"), 100);
  SphericalModel init = make_sg(2, 3);
  FitConfig cfg;
  cfg.iterations = 0;
  FitReport rep = fit(init, data, cfg);
  CHECK(rep.loss_trace.empty());
  CHECK(rep.iterations == 0);
  CHECK(rep.final_loss == doctest::Approx(mse(init, data)).epsilon(1e-12));
  CHECK(pack(rep.model) == pack(init));
}

TEST_CASE("immediate overflow reports an infinite last loss") {
  SampleSet data = constant_set(50, 1, 1e300, 5);
  FitConfig cfg;
  cfg.iterations = 10;
  try {
    fit(make_sg(2, 1), data, cfg);
    FAIL("expected DivergedError");
  } catch (const DivergedError& e) {
    CHECK(e.last.iterations == 0);
    CHECK(e.last.loss_trace.empty());
    CHECK(e.last.final_loss == std::numeric_limits<double>::infinity());
    CHECK(e.last.final_psnr == -std::numeric_limits<double>::infinity());
  }
}

TEST_CASE("runaway step size diverges and keeps the last finite iterate") {
  SampleSet data = constant_set(40, 1, 10.0, 6);
  FitConfig cfg;
  cfg.iterations = 50;
  // The optimizer's first move is about one step size per coordinate, so this
  // sends the coefficient far enough that the next squared residual overflows
  // while the recorded iterate itself stays finite.
  cfg.step_size = 1e155;
  try {
    fit(make_sh(0, 1), data, cfg);
    FAIL("expected DivergedError");
  } catch (const DivergedError& e) {
    CHECK(e.last.iterations == 1);
    CHECK(e.last.iterations < 50);
    CHECK(std::isfinite(e.last.final_loss));
    CHECK(e.last.final_loss == doctest::Approx(100.0).epsilon(1e-9));
    CHECK((size_t)e.last.iterations == e.last.loss_trace.size());
    CHECK_NOTHROW(check_finite(e.last.model));
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("randomize_model is a deterministic function of the stream") {
  SphericalModel a = make_sb(4, 2), b = make_sb(4, 2);
  std::mt19937_64 r1(99), r2(99);
  randomize_model(a, r1);
  randomize_model(b, r2);
  CHECK(pack(a) == pack(b));
  randomize_model(b, r2);
  CHECK(pack(a) != pack(b));
}

TEST_CASE("restarts are reproducible and independent of thread count") {
  SampleSet data = sample_target(builtin_target("cells2"), 200);
  SphericalModel shape = make_sv(4, 3, SvTauMode::Norm);
  FitConfig cfg;
  cfg.iterations = 60;
  cfg.step_size = 0.05;
  cfg.seed = 7;
  RestartSummary s1 = restart_experiment(shape, data, cfg, 6, 1);
  RestartSummary s3 = restart_experiment(shape, data, cfg, 6, 3);
  REQUIRE(s1.records.size() == 6);
  REQUIRE(s3.records.size() == 6);
  for (int r = 0; r < 6; ++r) {
    CHECK(s1.records[r].seed == splitmix64(7, r));
    CHECK(s1.records[r].final_psnr == s3.records[r].final_psnr);
    CHECK(s1.records[r].final_loss == s3.records[r].final_loss);
    CHECK(s1.records[r].diverged == s3.records[r].diverged);
  }
  RestartSummary again = restart_experiment(shape, data, cfg, 6, 1);
  for (int r = 0; r < 6; ++r)
    CHECK(s1.records[r].final_psnr == again.records[r].final_psnr);
}

TEST_CASE("restart summary statistics match a direct computation") {
  SampleSet data = sample_target(builtin_target("cells2"), 150);
  FitConfig cfg;
  cfg.iterations = 40;
  cfg.step_size = 0.05;
  cfg.seed = 13;
  RestartSummary s = restart_experiment(make_sg(3, 3), data, cfg, 5, 1);
  std::vector<double> ps;
  for (const auto& r : s.records) ps.push_back(r.final_psnr);
  std::sort(ps.begin(), ps.end());
  CHECK(s.median_psnr == ps[2]);
  CHECK(s.min_psnr == ps.front());
  CHECK(s.max_psnr == ps.back());
  double mean = 0.0;
  for (double p : ps) mean += p;
  mean /= ps.size();
  CHECK(s.mean_psnr == doctest::Approx(mean).epsilon(1e-12));
  double var = 0.0;
  for (double p : ps) var += (p - mean) * (p - mean);
  CHECK(s.stddev_psnr == doctest::Approx(std::sqrt(var / ps.size())).epsilon(1e-12));
}

TEST_CASE("even restart counts use the average of the middle pair") {
  SampleSet data = sample_target(builtin_target("cells2"), 150);
  FitConfig cfg;
  cfg.iterations = 30;
  cfg.step_size = 0.05;
  RestartSummary s = restart_experiment(make_sg(3, 3), data, cfg, 4, 1);
  std::vector<double> ps;
  for (const auto& r : s.records) ps.push_back(r.final_psnr);
  std::sort(ps.begin(), ps.end());
  CHECK(s.median_psnr == doctest::Approx(0.5 * (ps[1] + ps[2])).epsilon(1e-12));
}

TEST_CASE("smooth targets fit with negligible overshoot") {
  SampleSet data = sample_target(builtin_target("const0.5"), 400);
  FitConfig cfg;
  cfg.iterations = 10000;
  cfg.step_size = 0.001;  // small enough that the terminal wobble stays tiny
  GibbsReport rep = gibbs_demo(data, 4, cfg, 20000);
  CHECK(rep.target_max == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep.fit.final_loss < 1e-8);
  CHECK(rep.overshoot < 1e-3);
}

TEST_CASE("sample sets are deterministic for fixed seeds") {
  SampleSet a = sample_target(builtin_target("cells4"), 100, false, 42);
  SampleSet b = sample_target(builtin_target("cells4"), 100, false, 42);
  REQUIRE(a.size() == b.size());
  CHECK(a.values == b.values);
  for (int i = 0; i < a.size(); ++i) CHECK(a.dirs[i].vec() == b.dirs[i].vec());
  SampleSet c = sample_target(builtin_target("cells4"), 100, false, 43);
  CHECK(a.values != c.values);
}

TEST_CASE("fit rejects mismatched data and bad configs") {
  SampleSet data = sample_target(builtin_target("cells2"), 20);  // 3 channels
  CHECK_THROWS_AS(fit(make_sg(2, 1), data, FitConfig{}), std::invalid_argument);
  FitConfig bad;
  bad.iterations = -1;
  CHECK_THROWS_AS(fit(make_sg(2, 3), data, bad), std::invalid_argument);
  SampleSet empty;
  empty.values.resize(0, 3);
  CHECK_THROWS_AS(fit(make_sg(2, 3), empty, FitConfig{}), std::invalid_argument);
}
