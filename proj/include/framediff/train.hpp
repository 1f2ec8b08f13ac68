#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framediff/checkpoint.hpp"
#include "framediff/config.hpp"
#include "framediff/metrics.hpp"
#include "framediff/molkit.hpp"

// Training / sampling / evaluation drivers behind the CLI commands. All
// runs are deterministic: per-(step, batch-slot) randomness is derived
// statelessly from the master seed, so resumed training reproduces the
// uninterrupted loss sequence bit-for-bit.

namespace framediff::driver {

struct TrainResult {
  std::string metrics_path;
  std::string final_checkpoint;
  std::vector<double> loss;  // per step, batch-averaged total
  double smoothed(int first, int count) const;
};

TrainResult train(const RunConfig& cfg);

struct TrajectoryStats {
  int n_atoms = 0;
  int frame_calls = 0;
  int degenerate = 0;
  double wall_ms = 0.0;
};

struct SampleRun {
  std::vector<molkit::Molecule> molecules;
  std::vector<TrajectoryStats> stats;
};

// Samples n molecules from a checkpoint (atom counts drawn from the stored
// histogram), writes XYZ to out_xyz and, when non-empty, per-trajectory
// stats to stats_csv.
SampleRun sample_run(const std::string& ckpt_path, int n, std::uint64_t seed,
                     const std::string& out_xyz, const std::string& stats_csv);

// Evaluates an XYZ sample file; when ckpt_path is non-empty the VLB proxy
// is averaged over the batch with vlb_k Monte-Carlo draws per molecule.
metrics::GenerationReport eval_run(const std::string& samples_path,
                                   const std::string& report_path,
                                   const std::string& ckpt_path, int vlb_k,
                                   std::uint64_t seed,
                                   const metrics::BondTable& table);

}  // namespace framediff::driver
