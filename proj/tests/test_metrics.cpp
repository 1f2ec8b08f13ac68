#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "framediff/diffusion.hpp"
#include "framediff/metrics.hpp"
#include "framediff/molkit.hpp"
#include "framediff/train.hpp"

using namespace framediff;
using molkit::AtomType;
using molkit::Molecule;

namespace {

const metrics::BondTable& table() { return metrics::BondTable::builtin(); }

Molecule methane() {
  const double a = 1.089 / std::sqrt(3.0);
  Molecule m;
  m.types = {AtomType::C, AtomType::H, AtomType::H, AtomType::H, AtomType::H};
  m.coords = {{0, 0, 0}, {a, a, a}, {a, -a, -a}, {-a, a, -a}, {-a, -a, a}};
  m.charges = {0, 0, 0, 0, 0};
  return m;
}

}  // namespace

TEST_CASE("bond orders follow the length table") {
  Molecule two;
  two.types = {AtomType::C, AtomType::H};
  two.coords = {{0, 0, 0}, {1.09, 0, 0}};
  two.charges = {0, 0};
  auto bonds = metrics::infer_bonds(two, table());
  CHECK(bonds.at(0, 1) == 1);
  CHECK(bonds.at(1, 0) == 1);
  CHECK(bonds.at(0, 0) == 0);

  two.types = {AtomType::H, AtomType::H};
  two.coords = {{0, 0, 0}, {3.0, 0, 0}};
  bonds = metrics::infer_bonds(two, table());
  CHECK(bonds.at(0, 1) == 0);

  // triple beats double beats single at short range
  two.types = {AtomType::C, AtomType::C};
  two.coords = {{0, 0, 0}, {1.20, 0, 0}};
  bonds = metrics::infer_bonds(two, table());
  CHECK(bonds.at(0, 1) == 3);
  two.coords = {{0, 0, 0}, {1.339, 0, 0}};
  bonds = metrics::infer_bonds(two, table());
  CHECK(bonds.at(0, 1) == 2);
  two.coords = {{0, 0, 0}, {1.54, 0, 0}};
  bonds = metrics::infer_bonds(two, table());
  CHECK(bonds.at(0, 1) == 1);
}

TEST_CASE("every toy template is stable and valid at ideal geometry") {
  for (const auto& t : molkit::toy_templates()) {
    const auto bonds = metrics::infer_bonds(t.mol, table());
    INFO("template ", t.name);
    CHECK(metrics::atom_stability(t.mol, bonds) == 1.0);
    CHECK(metrics::mol_stable(t.mol, bonds));
    CHECK(metrics::validity(t.mol, bonds));
  }
}

TEST_CASE("displacing a methane hydrogen breaks stability") {
  Molecule m = methane();
  const auto good = metrics::infer_bonds(m, table());
  CHECK(metrics::atom_stability(m, good) == 1.0);

  m.coords[1] = {3.0, 3.0, 3.0};
  const auto bad = metrics::infer_bonds(m, table());
  CHECK(metrics::atom_stability(m, bad) == doctest::Approx(3.0 / 5.0));
  CHECK_FALSE(metrics::mol_stable(m, bad));
}

TEST_CASE("a lone hydrogen is unstable but not invalid") {
  Molecule h;
  h.types = {AtomType::H};
  h.coords = {{0, 0, 0}};
  h.charges = {0};
  const auto bonds = metrics::infer_bonds(h, table());
  CHECK_FALSE(metrics::mol_stable(h, bonds));
  CHECK(metrics::atom_stability(h, bonds) == 0.0);
  CHECK(metrics::validity(h, bonds));  // no over-valence, one component
}

TEST_CASE("disconnected fragments are invalid") {
  Molecule m;
  m.types = {AtomType::H, AtomType::H, AtomType::H, AtomType::H};
  m.coords = {{0, 0, 0}, {0.74, 0, 0}, {10, 0, 0}, {10.74, 0, 0}};
  m.charges = {0, 0, 0, 0};
  const auto bonds = metrics::infer_bonds(m, table());
  CHECK(metrics::mol_stable(m, bonds));  // both H2 halves satisfy valence
  CHECK_FALSE(metrics::validity(m, bonds));
}

TEST_CASE("over-valence is invalid") {
  // three H around one H at bonding range: center exceeds valence 1
  Molecule m;
  m.types = {AtomType::H, AtomType::H, AtomType::H};
  m.coords = {{0, 0, 0}, {0.74, 0, 0}, {-0.74, 0, 0}};
  m.charges = {0, 0, 0};
  const auto bonds = metrics::infer_bonds(m, table());
  CHECK_FALSE(metrics::validity(m, bonds));
}

TEST_CASE("uniqueness counts distinct canonical graphs among valid molecules") {
  // two methanes (one atom-permuted) + water + ammonia -> 3/4
  std::vector<Molecule> batch;
  batch.push_back(methane());
  Molecule permuted = methane();
  std::swap(permuted.coords[0], permuted.coords[4]);
  std::swap(permuted.types[0], permuted.types[4]);
  batch.push_back(permuted);
  batch.push_back(molkit::toy_templates()[1].mol);  // H2O
  batch.push_back(molkit::toy_templates()[2].mol);  // NH3
  CHECK(metrics::uniqueness(batch, table()) == doctest::Approx(0.75));

  // empty valid set
  Molecule broken;
  broken.types = {AtomType::H, AtomType::H, AtomType::H};
  broken.coords = {{0, 0, 0}, {0.74, 0, 0}, {-0.74, 0, 0}};
  broken.charges = {0, 0, 0};
  CHECK(metrics::uniqueness({broken}, table()) == 1.0);
}

TEST_CASE("canonical hash distinguishes the template library") {
  std::set<std::uint64_t> hashes;
  for (const auto& t : molkit::toy_templates()) {
    const auto bonds = metrics::infer_bonds(t.mol, table());
    hashes.insert(metrics::canonical_hash(t.mol, bonds));
  }
  CHECK(hashes.size() == molkit::toy_templates().size());
}

TEST_CASE("jittered template keeps its bond graph (fixed seed)") {
  const auto mols = molkit::synth_toy_dataset(1, 21);
  REQUIRE(mols.size() == 1);
  const auto bonds = metrics::infer_bonds(mols[0], table());
  // find the template with the same atom multiset and compare hashes
  bool matched = false;
  for (const auto& t : molkit::toy_templates()) {
    if (t.mol.size() != mols[0].size()) continue;
    const auto tb = metrics::infer_bonds(t.mol, table());
    if (metrics::canonical_hash(t.mol, tb) ==
        metrics::canonical_hash(mols[0], bonds))
      matched = true;
  }
  CHECK(matched);
  CHECK(metrics::mol_stable(mols[0], bonds));
}

TEST_CASE("bond table round-trips through bonds.tsv and matches data file") {
  const auto path =
      std::filesystem::temp_directory_path() / "framediff_bonds_test.tsv";
  table().write_tsv(path.string());
  const auto loaded = metrics::BondTable::load_tsv(path.string());
  for (int a = 0; a < molkit::kNumAtomTypes; ++a)
    for (int b = 0; b < molkit::kNumAtomTypes; ++b)
      for (int o = 0; o < 3; ++o)
        CHECK(loaded.length[a][b][o] ==
              doctest::Approx(table().length[a][b][o]).epsilon(1e-9));
  std::filesystem::remove(path);

  const auto shipped = metrics::BondTable::load_tsv(
      std::string(FRAMEDIFF_SOURCE_DIR) + "/data/bonds.tsv");
  for (int a = 0; a < molkit::kNumAtomTypes; ++a)
    for (int b = 0; b < molkit::kNumAtomTypes; ++b)
      for (int o = 0; o < 3; ++o)
        CHECK(shipped.length[a][b][o] == table().length[a][b][o]);
}

TEST_CASE("vlb estimate: determinism, MC scaling, training sensitivity") {
  Model model;
  model.eq_cfg = {2, 4, 24, 6};
  model.bb_cfg.layers = 2;
  model.bb_cfg.heads = 2;
  model.bb_cfg.width = 32;
  model.bb_cfg.mlp_ratio = 2;
  model.bb_cfg.t_embed_dim = 16;
  model.init(3);

  const auto ns = diffusion::build_schedule(30);
  molkit::Molecule mol = molkit::toy_templates()[3].mol;  // CH4
  mol.coords = geom::remove_com(mol.coords, mol.mask);
  const auto enc = molkit::encode_molecule(mol, molkit::FeatureCodec{});

  const double a = metrics::vlb_estimate(enc, model, diffusion::Paradigm::kGfd,
                                         ns, 8, 5);
  const double b = metrics::vlb_estimate(enc, model, diffusion::Paradigm::kGfd,
                                         ns, 8, 5);
  CHECK(a == b);
  CHECK(std::isfinite(a));

  // standard error shrinks roughly like 1/sqrt(K)
  auto spread = [&](int K) {
    std::vector<double> vals;
    for (int s = 0; s < 12; ++s)
      vals.push_back(metrics::vlb_estimate(
          enc, model, diffusion::Paradigm::kGfd, ns, K, 100 + s));
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= vals.size();
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    return std::sqrt(var / (vals.size() - 1));
  };
  const double se_small = spread(8);
  const double se_big = spread(32);  // 4x draws -> ~2x smaller
  CHECK(se_big < se_small);
  CHECK(se_big > se_small / 4.5);

  // a briefly trained model scores the training molecule better than init
  const double untrained = metrics::vlb_estimate(
      enc, model, diffusion::Paradigm::kGfd, ns, 64, 7);

  AdamW opt;
  opt.lr = 2e-3;
  ad::Tape tape;
  for (int step = 0; step < 150; ++step) {
    model.params.zero_grad();
    diffusion::training_loss(diffusion::Paradigm::kGfd, tape, enc, model, ns,
                             0.0, 1000 + step, true);
    opt.step(model.params);
  }
  const double trained = metrics::vlb_estimate(
      enc, model, diffusion::Paradigm::kGfd, ns, 64, 7);
  CHECK(trained < untrained);
}
