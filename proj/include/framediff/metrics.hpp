#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "framediff/diffusion.hpp"
#include "framediff/molkit.hpp"

// Evaluation of generated molecules: distance-based bond inference,
// valence-rule stability/validity, graph-hash uniqueness, and a
// variational-bound likelihood proxy. The valence checker is internal;
// its absolute numbers are not comparable to toolkit-based pipelines.

namespace framediff::metrics {

// Symmetric bond orders (0-3), zero diagonal.
struct BondGraph {
  int n = 0;
  std::vector<std::uint8_t> order;

  explicit BondGraph(int n_atoms = 0)
      : n(n_atoms), order(static_cast<std::size_t>(n_atoms) * n_atoms, 0) {}
  std::uint8_t at(int i, int j) const { return order[i * n + j]; }
  void set(int i, int j, std::uint8_t o) {
    order[i * n + j] = o;
    order[j * n + i] = o;
  }
  int valence(int i) const {
    int v = 0;
    for (int j = 0; j < n; ++j) v += order[i * n + j];
    return v;
  }
};

// Reference single/double/triple bond lengths (Angstrom) for pairs over
// {H, C, N, O, F}; 0 marks a pair/order with no tabulated bond.
struct BondTable {
  double length[molkit::kNumAtomTypes][molkit::kNumAtomTypes][3] = {};

  static const BondTable& builtin();
  static BondTable load_tsv(const std::string& path);
  void write_tsv(const std::string& path) const;
};

// Margins added to the tabulated lengths per order (single/double/triple).
inline constexpr double kBondMargins[3] = {0.10, 0.05, 0.03};

// Highest order whose tabulated length + margin exceeds the pair distance.
BondGraph infer_bonds(const molkit::Molecule& mol, const BondTable& table);

// An atom is stable iff its summed bond order equals its nominal valence.
double atom_stability(const molkit::Molecule& mol, const BondGraph& bonds);
bool mol_stable(const molkit::Molecule& mol, const BondGraph& bonds);

// Valid iff no atom exceeds its nominal valence and the live atoms form a
// single connected component.
bool validity(const molkit::Molecule& mol, const BondGraph& bonds);

// Permutation-invariant canonical hash: iterative neighborhood-refinement
// coloring over (atom type, bond multiset), 10 rounds.
std::uint64_t canonical_hash(const molkit::Molecule& mol,
                             const BondGraph& bonds);

// Distinct canonical hashes among valid molecules / valid count;
// 1.0 when no molecule is valid.
double uniqueness(const std::vector<molkit::Molecule>& mols,
                  const BondTable& table);

struct GenerationReport {
  std::size_t samples = 0;
  double atom_stability = 0.0;
  double mol_stability = 0.0;
  double validity = 0.0;
  double uniqueness = 1.0;
  bool has_vlb = false;
  double vlb = 0.0;

  std::string to_text() const;
};

GenerationReport evaluate_batch(const std::vector<molkit::Molecule>& mols,
                                const BondTable& table);

// Monte-Carlo variational bound (nats per molecule, lower is better) with
// the zero-CoM dimensionality correction: coordinates count 3(N-1)
// dimensions. mol must be centered.
double vlb_estimate(const diffusion::State& mol, Model& model,
                    diffusion::Paradigm p, const diffusion::NoiseSchedule& ns,
                    int k_samples, std::uint64_t seed);

}  // namespace framediff::metrics
