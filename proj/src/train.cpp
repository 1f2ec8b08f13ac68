#include "framediff/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "framediff/diffusion.hpp"
#include "framediff/errors.hpp"

namespace framediff::driver {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                          std::uint64_t b) {
  return splitmix64(splitmix64(master ^ splitmix64(a)) ^ splitmix64(b));
}

}  // namespace

double TrainResult::smoothed(int first, int count) const {
  double s = 0.0;
  for (int i = first; i < first + count; ++i) s += loss[i];
  return s / count;
}

TrainResult train(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.data.empty()) throw ConfigError("train: data path required");

  const auto raw = molkit::read_xyz(cfg.data);
  if (raw.empty()) throw ConfigError("train: dataset is empty");

  molkit::FeatureCodec codec{cfg.scale_onehot, cfg.scale_charge};
  std::vector<diffusion::State> data;
  for (auto mol : raw) {
    mol.coords = geom::remove_com(mol.coords, mol.mask);
    data.push_back(molkit::encode_molecule(mol, codec));
  }
  const auto histogram = molkit::atom_count_histogram(raw);
  const diffusion::Paradigm paradigm =
      diffusion::paradigm_from_string(cfg.paradigm);

  std::filesystem::create_directories(cfg.out);

  ckpt::Checkpoint cp;
  cp.config = cfg;
  cp.histogram = histogram;
  cp.has_optimizer = true;
  cp.optimizer.lr = cfg.lr;
  cp.optimizer.weight_decay = cfg.weight_decay;

  Model model;
  int start_step = 0;
  if (!cfg.resume.empty()) {
    cp = ckpt::load(cfg.resume, model);
    start_step = static_cast<int>(cp.step);
    cp.config = cfg;  // training hyperparameters may be adjusted on resume
    cp.optimizer.lr = cfg.lr;
    cp.optimizer.weight_decay = cfg.weight_decay;
  } else {
    model = cp.make_model();
  }

  // If IFD, the dataset is canonicalized once up front; the frame
  // constructor never runs inside the training loop.
  if (paradigm == diffusion::Paradigm::kIfd)
    for (auto& mol : data) mol = diffusion::canonicalize(mol, model, nullptr);

  const diffusion::NoiseSchedule ns = diffusion::build_schedule(cfg.T);

  TrainResult res;
  res.metrics_path = cfg.out + "/metrics.csv";
  std::ofstream csv(res.metrics_path);
  if (!csv) throw IoError("cannot write " + res.metrics_path);
  csv << "step,loss,diff_loss,align_loss,grad_norm,wall_seconds,"
         "frames_degenerate_count\n";

  std::vector<ad::Tape> tapes(cfg.batch);
  char row[256];

  for (int step = start_step + 1; step <= cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    model.params.zero_grad();
    diffusion::StepStats stats;
    double loss_sum = 0.0, diff_sum = 0.0, align_sum = 0.0;

    for (int b = 0; b < cfg.batch; ++b) {
      const std::size_t idx =
          (static_cast<std::size_t>(step - 1) * cfg.batch + b) % data.size();
      const std::uint64_t s = derive_seed(cfg.seed, step, b);
      const auto lb = diffusion::training_loss(
          paradigm, tapes[b], data[idx], model, ns, cfg.lambda, s,
          /*grad=*/true, &stats);
      loss_sum += lb.total;
      diff_sum += lb.diff_loss;
      align_sum += lb.align_loss;
    }

    const double inv_batch = 1.0 / cfg.batch;
    for (auto& e : model.params.entries())
      for (std::size_t i = 0; i < e.grad.size(); ++i)
        e.grad.data()[i] *= inv_batch;

    double gnorm = model.params.grad_norm();
    if (cfg.grad_clip > 0.0 && gnorm > cfg.grad_clip) {
      const double scale = cfg.grad_clip / gnorm;
      for (auto& e : model.params.entries())
        for (std::size_t i = 0; i < e.grad.size(); ++i)
          e.grad.data()[i] *= scale;
    }
    cp.optimizer.step(model.params);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const double loss = loss_sum * inv_batch;
    res.loss.push_back(loss);
    std::snprintf(row, sizeof(row), "%d,%.12g,%.12g,%.12g,%.12g,%.6f,%d\n",
                  step, loss, diff_sum * inv_batch, align_sum * inv_batch,
                  gnorm, wall, stats.degenerate_frames);
    csv << row;

    if (step % cfg.ckpt_interval == 0 && step != cfg.steps) {
      cp.step = step;
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint_%06d.fdc", step);
      ckpt::save(cfg.out + name, cp, model);
    }
  }

  cp.step = cfg.steps;
  res.final_checkpoint = cfg.out + "/checkpoint_final.fdc";
  ckpt::save(res.final_checkpoint, cp, model);
  return res;
}

SampleRun sample_run(const std::string& ckpt_path, int n, std::uint64_t seed,
                     const std::string& out_xyz,
                     const std::string& stats_csv) {
  Model model;
  const ckpt::Checkpoint cp = ckpt::load(ckpt_path, model);
  const diffusion::Paradigm paradigm =
      diffusion::paradigm_from_string(cp.config.paradigm);
  const diffusion::NoiseSchedule ns = diffusion::build_schedule(cp.config.T);
  molkit::FeatureCodec codec{cp.config.scale_onehot, cp.config.scale_charge};

  SampleRun run;
  for (int i = 0; i < n; ++i) {
    const int atoms =
        molkit::sample_atom_count(cp.histogram, derive_seed(seed, 1, i));
    const auto t0 = std::chrono::steady_clock::now();
    const auto res =
        diffusion::sample(paradigm, model, ns, atoms, derive_seed(seed, 2, i));
    const double ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t0)
            .count();
    run.molecules.push_back(molkit::decode_molecule(res.z0, codec));
    run.stats.push_back({atoms, res.stats.frame_constructor_calls,
                         res.stats.degenerate_frames, ms});
  }

  if (!out_xyz.empty()) molkit::write_xyz(out_xyz, run.molecules);
  if (!stats_csv.empty()) {
    std::ofstream out(stats_csv);
    if (!out) throw IoError("cannot write " + stats_csv);
    out << "trajectory,n_atoms,frame_constructor_calls,degenerate_frames,"
           "wall_ms\n";
    for (std::size_t i = 0; i < run.stats.size(); ++i) {
      char row[128];
      std::snprintf(row, sizeof(row), "%zu,%d,%d,%d,%.3f\n", i,
                    run.stats[i].n_atoms, run.stats[i].frame_calls,
                    run.stats[i].degenerate, run.stats[i].wall_ms);
      out << row;
    }
  }
  return run;
}

metrics::GenerationReport eval_run(const std::string& samples_path,
                                   const std::string& report_path,
                                   const std::string& ckpt_path, int vlb_k,
                                   std::uint64_t seed,
                                   const metrics::BondTable& table) {
  const auto mols = molkit::read_xyz(samples_path);
  metrics::GenerationReport rep = metrics::evaluate_batch(mols, table);

  if (!ckpt_path.empty() && !mols.empty()) {
    Model model;
    const ckpt::Checkpoint cp = ckpt::load(ckpt_path, model);
    const diffusion::Paradigm paradigm =
        diffusion::paradigm_from_string(cp.config.paradigm);
    const diffusion::NoiseSchedule ns = diffusion::build_schedule(cp.config.T);
    molkit::FeatureCodec codec{cp.config.scale_onehot, cp.config.scale_charge};
    double acc = 0.0;
    for (std::size_t i = 0; i < mols.size(); ++i) {
      auto mol = mols[i];
      mol.coords = geom::remove_com(mol.coords, mol.mask);
      const auto enc = molkit::encode_molecule(mol, codec);
      acc += metrics::vlb_estimate(enc, model, paradigm, ns, vlb_k,
                                   derive_seed(seed, 3, i));
    }
    rep.has_vlb = true;
    rep.vlb = acc / mols.size();
  }

  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write " + report_path);
    out << rep.to_text();
  }
  return rep;
}

}  // namespace framediff::driver
