#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "framediff/diffusion.hpp"
#include "framediff/params.hpp"

// Oracle harness: executable forms of the symmetry and numerical contracts
// (equivariance, invariance, gradients, schedule identities), runnable
// standalone and from the CLI. The harness is validated in both
// directions: negative controls are expected to fail.

namespace framediff::verify {

struct OracleReport {
  std::string name;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool pass = false;  // max_deviation <= tolerance
  int trials = 0;
  std::uint64_t seed = 0;
  bool expect_fail = false;  // negative control

  bool ok() const { return expect_fail ? !pass : pass; }
};

enum class Group { kRotation, kTranslation, kPermutation, kRotoTranslation };

// How the group acts on the checked function's output: kMatchInput applies
// the same transform (equivariant maps like the identity); kNoisePrediction
// rotates/permutes but ignores translations (denoiser outputs).
enum class OutputAction { kMatchInput, kNoisePrediction };

using StateFn = std::function<diffusion::State(const diffusion::State&)>;

OracleReport check_equivariance(const std::string& name, const StateFn& fn,
                                Group group, OutputAction action, int trials,
                                double tol, std::uint64_t seed,
                                int n_atoms = 5, int feat_dim = 6);

// Central finite differences at step h on a seeded random subset of
// sample_count flat parameter indices vs the analytic gradients produced by
// loss_fn(true). Relative-error metric |a-n| / (|a|+|n|+1e-8).
// corrupt >= 0 doubles that sampled analytic entry (negative control).
// flat_lo/flat_hi restrict sampling to a flat index range (hi = 0 means the
// whole store): losses that leave part of the store untouched are checked
// over the live range only.
OracleReport check_gradients(const std::string& name,
                             const std::function<double(bool)>& loss_fn,
                             ParamStore& params, int sample_count, double h,
                             double tol, std::uint64_t seed, int corrupt = -1,
                             std::size_t flat_lo = 0, std::size_t flat_hi = 0);

// which: equivariance | gradients | schedule | metrics | all
std::vector<OracleReport> run_suite(const std::string& which,
                                    std::uint64_t seed);

bool all_ok(const std::vector<OracleReport>& reports);
std::string format_table(const std::vector<OracleReport>& reports);
std::string format_csv(const std::vector<OracleReport>& reports);

}  // namespace framediff::verify
