#pragma once

#include <cstdint>
#include <vector>

#include "sphervor/bases.hpp"

namespace sphervor {

// Per-texel top-m candidate sites over a cubemap of directions. table holds
// site indices, m per texel, texels ordered face-major then row-major.
struct CandidateIndex {
  int face_res = 0, m = 0;
  std::vector<int32_t> table;
  uint64_t built_for = 0;   // site_hash at build time
  int rebuild_interval = 500;

  const int32_t* candidates(int face, int i, int j) const {
    return table.data() + ((size_t(face) * face_res + j) * face_res + i) * m;
  }
};

// Hash of the site vectors quantized at 1e-7, order sensitive.
uint64_t site_hash(const SvParams& p);

// True top-m of s_hat_k . dir(texel) per texel center; ties broken toward the
// lower site index.
CandidateIndex build_index(const SvParams& p, int face_res, int m);

// Softmax restricted to the texel's candidate set and renormalized over it.
// Throws StaleIndexError if the index does not match the sites.
Eigen::VectorXd eval_truncated(const SvParams& p, const CandidateIndex& idx,
                               const UnitDir& d);
// Batch variant, checks staleness once. out is n x channels row-major.
void eval_truncated_batch(const SvParams& p, const CandidateIndex& idx,
                          const std::vector<UnitDir>& dirs, double* out);
void eval_full_batch(const SvParams& p, const std::vector<UnitDir>& dirs, double* out);

// Rebuilds when step is a multiple of rebuild_interval or the sites moved
// (hash mismatch). Returns whether a rebuild happened.
bool maybe_rebuild(CandidateIndex& idx, const SvParams& p, int step);

struct BenchConfig {
  int face_res = 0, m = 0;
};

struct BenchRow {
  int face_res = 0, m = 0;
  double max_err = 0.0, mean_err = 0.0, evals_per_sec = 0.0;
};

// Error is the max-abs difference against full evaluation over the same
// seeded random directions; full_evals_per_sec reports the untruncated rate.
std::vector<BenchRow> bench_eval(const SvParams& p, const std::vector<BenchConfig>& cfgs,
                                 int n_dirs, uint64_t seed,
                                 double* full_evals_per_sec = nullptr);

}  // namespace sphervor
