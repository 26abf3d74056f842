#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sphervor/bases.hpp"
#include "sphervor/geometry.hpp"

namespace sphervor {

// Directions with per-direction target values (n x channels).
struct SampleSet {
  std::vector<UnitDir> dirs;
  Eigen::MatrixXd values;
  std::string source;

  int channels() const { return (int)values.cols(); }
  int size() const { return (int)dirs.size(); }
};

struct FitConfig {
  int iterations = 2000;
  double step_size = 1e-2;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  double peak = 1.0;   // PSNR reference
  uint64_t seed = 0;   // echoed into reports; fit itself is deterministic
  int log_every = 50;
};

struct FitReport {
  SphericalModel model;
  double final_loss = 0.0, final_psnr = 0.0;
  std::vector<double> loss_trace;  // loss before each step
  double wall_ms = 0.0;
  int iterations = 0;
};

// Loss went non-finite; last holds the last finite iterate.
struct DivergedError : std::runtime_error {
  explicit DivergedError(FitReport r)
      : std::runtime_error("fit diverged at iteration " +
                           std::to_string(r.iterations)),
        last(std::move(r)) {}
  FitReport last;
};

// 10*log10(peak^2/mse); mse == 0 reports the 300 dB sentinel.
double psnr(double mse, double peak = 1.0);

double mse(const SphericalModel& m, const SampleSet& data);
// Mean squared error over samples and channels plus d(loss)/dtheta.
double loss_and_grad(const SphericalModel& m, const SampleSet& data,
                     Eigen::VectorXd& grad_out);

// Full-batch adaptive-moment descent on MSE. Deterministic.
FitReport fit(SphericalModel init, const SampleSet& data, const FitConfig& cfg);

class Adam {
 public:
  Adam(int n, double beta1, double beta2, double epsilon)
      : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)),
        beta1_(beta1), beta2_(beta2), eps_(epsilon) {}
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& g, double lr);

 private:
  Eigen::VectorXd m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

// Draws a fresh initialization in place: directions/sites uniform on the
// sphere, values from N(0, 0.25) (sigma 0.5), temperatures log-uniform in
// [0.5, 20] (SB shapes use the same range through the softplus).
void randomize_model(SphericalModel& m, std::mt19937_64& rng);

struct RestartRecord {
  int restart = 0;
  uint64_t seed = 0;
  double final_psnr = 0.0, final_loss = 0.0, wall_ms = 0.0;
  bool diverged = false;
};

struct RestartSummary {
  std::vector<RestartRecord> records;
  double median_psnr = 0.0, mean_psnr = 0.0, stddev_psnr = 0.0;
  double min_psnr = 0.0, max_psnr = 0.0;
};

// Repeated fits from independently seeded inits; restart r uses
// splitmix64(cfg.seed, r) so results do not depend on the thread count.
RestartSummary restart_experiment(const SphericalModel& shape, const SampleSet& data,
                                  const FitConfig& cfg, int restarts, int threads = 1);

struct GibbsReport {
  FitReport fit;
  double overshoot = 0.0;   // max model value on a dense grid minus max target
  double target_max = 0.0;
};

// Fits an SH model of the given degree and measures peak overshoot on a
// dense Fibonacci grid.
GibbsReport gibbs_demo(const SampleSet& data, int degree, const FitConfig& cfg,
                       int dense_grid = 200000);

}  // namespace sphervor
