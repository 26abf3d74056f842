#include "sphervor/fastsv.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sphervor/errors.hpp"
#include "sphervor/image.hpp"

namespace sphervor {

namespace {

uint64_t fnv1a(uint64_t h, int64_t v) {
  for (int b = 0; b < 8; ++b) {
    h ^= (uint64_t)(v >> (8 * b)) & 0xFF;
    h *= 0x100000001B3ull;
  }
  return h;
}

struct TruncScratch {
  std::vector<double> logits, weights;
};
thread_local TruncScratch tts;

void eval_truncated_unchecked(const SvParams& p, const CandidateIndex& idx,
                              const UnitDir& d, double* out) {
  int face, i, j;
  cubemap_dir_to_texel(d, idx.face_res, face, i, j);
  const int32_t* cand = idx.candidates(face, i, j);
  const int m = idx.m, C = (int)p.values.cols();
  tts.logits.resize(m);
  const bool expl = p.mode == SvTauMode::Explicit;
  for (int q = 0; q < m; ++q) {
    int k = cand[q];
    if (expl) {
      double n = p.sites.col(k).norm();
      tts.logits[q] = std::exp(p.log_tau[k]) * (p.sites.col(k).dot(d.vec()) / n);
    } else {
      tts.logits[q] = p.sites.col(k).dot(d.vec());
    }
  }
  double mx = tts.logits[0];
  for (int q = 1; q < m; ++q) mx = std::max(mx, tts.logits[q]);
  double sum = 0.0;
  tts.weights.resize(m);
  for (int q = 0; q < m; ++q) {
    tts.weights[q] = std::exp(tts.logits[q] - mx);
    sum += tts.weights[q];
  }
  for (int c = 0; c < C; ++c) out[c] = 0.0;
  for (int q = 0; q < m; ++q) {
    double w = tts.weights[q] / sum;
    const int k = cand[q];
    for (int c = 0; c < C; ++c) out[c] += w * p.values(k, c);
  }
}

}  // namespace

uint64_t site_hash(const SvParams& p) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (Eigen::Index k = 0; k < p.sites.cols(); ++k)
    for (int a = 0; a < 3; ++a)
      h = fnv1a(h, (int64_t)std::llround(p.sites(a, k) * 1e7));
  return h;
}

CandidateIndex build_index(const SvParams& p, int face_res, int m) {
  const int K = (int)p.sites.cols();
  if (face_res < 1) throw std::invalid_argument("build_index: face_res must be >= 1");
  if (m < 1 || m > K) throw std::invalid_argument("build_index: need 1 <= m <= K");
  CandidateIndex idx;
  idx.face_res = face_res;
  idx.m = m;
  idx.table.resize(size_t(6) * face_res * face_res * m);

  // unit site directions once
  Eigen::Matrix3Xd shat(3, K);
  for (int k = 0; k < K; ++k) shat.col(k) = p.sites.col(k).normalized();

  std::vector<int> order(K);
  std::vector<double> dots(K);
  size_t w = 0;
  for (int face = 0; face < 6; ++face)
    for (int j = 0; j < face_res; ++j)
      for (int i = 0; i < face_res; ++i) {
        const Vec3 t = cubemap_texel_dir(face, i, j, face_res).vec();
        for (int k = 0; k < K; ++k) dots[k] = shat.col(k).dot(t);
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + m, order.end(),
                          [&](int a, int b) {
                            return dots[a] > dots[b] || (dots[a] == dots[b] && a < b);
                          });
        for (int q = 0; q < m; ++q) idx.table[w++] = order[q];
      }
  idx.built_for = site_hash(p);
  return idx;
}

Eigen::VectorXd eval_truncated(const SvParams& p, const CandidateIndex& idx,
                               const UnitDir& d) {
  if (site_hash(p) != idx.built_for)
    throw StaleIndexError("eval_truncated: index is stale for this site set");
  Eigen::VectorXd out(p.values.cols());
  eval_truncated_unchecked(p, idx, d, out.data());
  return out;
}

void eval_truncated_batch(const SvParams& p, const CandidateIndex& idx,
                          const std::vector<UnitDir>& dirs, double* out) {
  if (site_hash(p) != idx.built_for)
    throw StaleIndexError("eval_truncated_batch: index is stale for this site set");
  const int C = (int)p.values.cols();
  for (size_t i = 0; i < dirs.size(); ++i)
    eval_truncated_unchecked(p, idx, dirs[i], out + i * C);
}

void eval_full_batch(const SvParams& p, const std::vector<UnitDir>& dirs, double* out) {
  const int C = (int)p.values.cols();
  SphericalModel m{p};
  for (size_t i = 0; i < dirs.size(); ++i) eval_into(m, dirs[i], out + i * C);
}

bool maybe_rebuild(CandidateIndex& idx, const SvParams& p, int step) {
  const bool periodic = idx.rebuild_interval > 0 && step % idx.rebuild_interval == 0;
  if (!periodic && site_hash(p) == idx.built_for) return false;
  int interval = idx.rebuild_interval;
  idx = build_index(p, idx.face_res, idx.m);
  idx.rebuild_interval = interval;
  return true;
}

std::vector<BenchRow> bench_eval(const SvParams& p, const std::vector<BenchConfig>& cfgs,
                                 int n_dirs, uint64_t seed, double* full_evals_per_sec) {
  if (n_dirs < 1) throw std::invalid_argument("bench_eval: n_dirs must be >= 1");
  const int C = (int)p.values.cols();
  std::mt19937_64 rng(seed);
  std::vector<UnitDir> dirs;
  dirs.reserve(n_dirs);
  for (int i = 0; i < n_dirs; ++i) dirs.push_back(uniform_dir(rng));

  using Clock = std::chrono::steady_clock;
  std::vector<double> full(size_t(n_dirs) * C), trunc(size_t(n_dirs) * C);
  auto t0 = Clock::now();
  eval_full_batch(p, dirs, full.data());
  double full_s = std::chrono::duration<double>(Clock::now() - t0).count();
  if (full_evals_per_sec) *full_evals_per_sec = n_dirs / std::max(full_s, 1e-12);

  std::vector<BenchRow> rows;
  for (const auto& cfg : cfgs) {
    CandidateIndex idx = build_index(p, cfg.face_res, cfg.m);
    t0 = Clock::now();
    eval_truncated_batch(p, idx, dirs, trunc.data());
    double s = std::chrono::duration<double>(Clock::now() - t0).count();
    BenchRow row;
    row.face_res = cfg.face_res;
    row.m = cfg.m;
    row.evals_per_sec = n_dirs / std::max(s, 1e-12);
    double mx = 0.0, mean = 0.0;
    for (size_t i = 0; i < full.size(); ++i) {
      double e = std::fabs(full[i] - trunc[i]);
      mx = std::max(mx, e);
      mean += e;
    }
    row.max_err = mx;
    row.mean_err = mean / full.size();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sphervor
