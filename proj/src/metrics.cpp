#include "framediff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "framediff/errors.hpp"

namespace framediff::metrics {

using molkit::AtomType;
using molkit::Molecule;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ splitmix64(v));
}

struct PairLen {
  AtomType a, b;
  int order;
  double angstrom;
};

// Covalent reference lengths (single/double/triple) over {H,C,N,O,F}.
const PairLen kPairs[] = {
    {AtomType::H, AtomType::H, 1, 0.74}, {AtomType::H, AtomType::C, 1, 1.09},
    {AtomType::H, AtomType::N, 1, 1.01}, {AtomType::H, AtomType::O, 1, 0.96},
    {AtomType::H, AtomType::F, 1, 0.92}, {AtomType::C, AtomType::C, 1, 1.54},
    {AtomType::C, AtomType::N, 1, 1.47}, {AtomType::C, AtomType::O, 1, 1.43},
    {AtomType::C, AtomType::F, 1, 1.35}, {AtomType::N, AtomType::N, 1, 1.45},
    {AtomType::N, AtomType::O, 1, 1.40}, {AtomType::N, AtomType::F, 1, 1.36},
    {AtomType::O, AtomType::O, 1, 1.48}, {AtomType::O, AtomType::F, 1, 1.42},
    {AtomType::F, AtomType::F, 1, 1.42}, {AtomType::C, AtomType::C, 2, 1.34},
    {AtomType::C, AtomType::N, 2, 1.29}, {AtomType::C, AtomType::O, 2, 1.20},
    {AtomType::N, AtomType::N, 2, 1.25}, {AtomType::N, AtomType::O, 2, 1.21},
    {AtomType::O, AtomType::O, 2, 1.21}, {AtomType::C, AtomType::C, 3, 1.20},
    {AtomType::C, AtomType::N, 3, 1.16}, {AtomType::N, AtomType::N, 3, 1.10},
};

}  // namespace

const BondTable& BondTable::builtin() {
  static const BondTable table = [] {
    BondTable t;
    for (const auto& p : kPairs) {
      t.length[static_cast<int>(p.a)][static_cast<int>(p.b)][p.order - 1] =
          p.angstrom;
      t.length[static_cast<int>(p.b)][static_cast<int>(p.a)][p.order - 1] =
          p.angstrom;
    }
    return t;
  }();
  return table;
}

BondTable BondTable::load_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open bond table " + path);
  BondTable t;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string a, b;
    int order;
    double len;
    if (!(ss >> a >> b >> order >> len))
      throw ParseError("malformed bond table row", lineno);
    if (order < 1 || order > 3)
      throw ParseError("bond order out of range", lineno);
    const int ia = static_cast<int>(molkit::atom_type_from_symbol(a));
    const int ib = static_cast<int>(molkit::atom_type_from_symbol(b));
    t.length[ia][ib][order - 1] = len;
    t.length[ib][ia][order - 1] = len;
  }
  return t;
}

void BondTable::write_tsv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write bond table " + path);
  out << "# elem1 elem2 order length_angstrom\n";
  for (int a = 0; a < molkit::kNumAtomTypes; ++a)
    for (int b = a; b < molkit::kNumAtomTypes; ++b)
      for (int o = 0; o < 3; ++o)
        if (length[a][b][o] > 0.0) {
          char buf[64];
          std::snprintf(buf, sizeof(buf), "%s %s %d %.2f\n",
                        molkit::atom_symbol(static_cast<AtomType>(a)),
                        molkit::atom_symbol(static_cast<AtomType>(b)), o + 1,
                        length[a][b][o]);
          out << buf;
        }
}

BondGraph infer_bonds(const Molecule& mol, const BondTable& table) {
  const int n = static_cast<int>(mol.size());
  BondGraph g(n);
  for (int i = 0; i < n; ++i) {
    if (!mol.live(i)) continue;
    for (int j = i + 1; j < n; ++j) {
      if (!mol.live(j)) continue;
      const double d = geom::norm(mol.coords[i] - mol.coords[j]);
      const int ti = static_cast<int>(mol.types[i]);
      const int tj = static_cast<int>(mol.types[j]);
      std::uint8_t order = 0;
      for (int o = 0; o < 3; ++o) {
        const double ref = table.length[ti][tj][o];
        if (ref > 0.0 && d < ref + kBondMargins[o])
          order = static_cast<std::uint8_t>(o + 1);
      }
      g.set(i, j, order);
    }
  }
  return g;
}

double atom_stability(const Molecule& mol, const BondGraph& bonds) {
  int live = 0, stable = 0;
  for (int i = 0; i < bonds.n; ++i) {
    if (!mol.live(i)) continue;
    ++live;
    if (bonds.valence(i) == molkit::nominal_valence(mol.types[i])) ++stable;
  }
  return live ? static_cast<double>(stable) / live : 0.0;
}

bool mol_stable(const Molecule& mol, const BondGraph& bonds) {
  for (int i = 0; i < bonds.n; ++i)
    if (mol.live(i) &&
        bonds.valence(i) != molkit::nominal_valence(mol.types[i]))
      return false;
  return true;
}

bool validity(const Molecule& mol, const BondGraph& bonds) {
  std::vector<int> live;
  for (int i = 0; i < bonds.n; ++i)
    if (mol.live(i)) live.push_back(i);
  if (live.empty()) return false;
  for (int i : live)
    if (bonds.valence(i) > molkit::nominal_valence(mol.types[i])) return false;

  // single connected component over live atoms
  std::vector<std::uint8_t> seen(bonds.n, 0);
  std::vector<int> stack{live[0]};
  seen[live[0]] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (int j : live)
      if (!seen[j] && bonds.at(i, j) > 0) {
        seen[j] = 1;
        ++reached;
        stack.push_back(j);
      }
  }
  return reached == live.size();
}

std::uint64_t canonical_hash(const Molecule& mol, const BondGraph& bonds) {
  std::vector<int> live;
  for (int i = 0; i < bonds.n; ++i)
    if (mol.live(i)) live.push_back(i);

  std::vector<std::uint64_t> color(bonds.n, 0);
  for (int i : live)
    color[i] = splitmix64(0xA70Du + static_cast<int>(mol.types[i]));

  for (int round = 0; round < 10; ++round) {
    std::vector<std::uint64_t> next(bonds.n, 0);
    for (int i : live) {
      std::vector<std::uint64_t> neigh;
      for (int j : live)
        if (bonds.at(i, j) > 0)
          neigh.push_back(hash_combine(bonds.at(i, j), color[j]));
      std::sort(neigh.begin(), neigh.end());
      std::uint64_t h = color[i];
      for (auto v : neigh) h = hash_combine(h, v);
      next[i] = h;
    }
    color = std::move(next);
  }

  std::vector<std::uint64_t> final_colors;
  for (int i : live) final_colors.push_back(color[i]);
  std::sort(final_colors.begin(), final_colors.end());
  std::uint64_t h = 0x601d;
  for (auto v : final_colors) h = hash_combine(h, v);
  return h;
}

double uniqueness(const std::vector<Molecule>& mols, const BondTable& table) {
  std::vector<std::uint64_t> hashes;
  for (const auto& mol : mols) {
    const BondGraph bonds = infer_bonds(mol, table);
    if (validity(mol, bonds)) hashes.push_back(canonical_hash(mol, bonds));
  }
  if (hashes.empty()) return 1.0;
  std::set<std::uint64_t> distinct(hashes.begin(), hashes.end());
  return static_cast<double>(distinct.size()) / hashes.size();
}

std::string GenerationReport::to_text() const {
  std::ostringstream out;
  out << "# framediff generation report\n";
  out << "# validity checker: internal valence + connectivity rules; values "
         "are not comparable to toolkit-based pipelines\n";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "samples          %zu\n", samples);
  out << buf;
  std::snprintf(buf, sizeof(buf), "atom_stability   %.6f\n", atom_stability);
  out << buf;
  std::snprintf(buf, sizeof(buf), "mol_stability    %.6f\n", mol_stability);
  out << buf;
  std::snprintf(buf, sizeof(buf), "validity         %.6f\n", validity);
  out << buf;
  std::snprintf(buf, sizeof(buf), "uniqueness       %.6f\n", uniqueness);
  out << buf;
  if (has_vlb)
    std::snprintf(buf, sizeof(buf), "vlb_nats         %.6f\n", vlb);
  else
    std::snprintf(buf, sizeof(buf), "vlb_nats         n/a\n");
  out << buf;
  return out.str();
}

GenerationReport evaluate_batch(const std::vector<Molecule>& mols,
                                const BondTable& table) {
  GenerationReport rep;
  rep.samples = mols.size();
  if (mols.empty()) return rep;
  double atom_sum = 0.0;
  int stable = 0, valid = 0;
  for (const auto& mol : mols) {
    const BondGraph bonds = infer_bonds(mol, table);
    atom_sum += atom_stability(mol, bonds);
    stable += mol_stable(mol, bonds) ? 1 : 0;
    valid += validity(mol, bonds) ? 1 : 0;
  }
  rep.atom_stability = atom_sum / mols.size();
  rep.mol_stability = static_cast<double>(stable) / mols.size();
  rep.validity = static_cast<double>(valid) / mols.size();
  rep.uniqueness = uniqueness(mols, table);
  return rep;
}

double vlb_estimate(const diffusion::State& mol, Model& model,
                    diffusion::Paradigm p, const diffusion::NoiseSchedule& ns,
                    int k_samples, std::uint64_t seed) {
  const std::vector<int> live = mol.live_rows();
  const std::int64_t n_live = static_cast<std::int64_t>(live.size());
  const int feat_dim = static_cast<int>(mol.feats.cols());
  const double d_coord = 3.0 * (n_live - 1);  // zero-CoM subspace
  const double d_feat = static_cast<double>(feat_dim) * n_live;
  const double d_total = d_coord + d_feat;

  auto sq_norm = [&](const Tensor& c, const Tensor& f) {
    double s = 0.0;
    for (int r : live) {
      for (int k = 0; k < 3; ++k) s += c(r, k) * c(r, k);
      for (int k = 0; k < feat_dim; ++k) s += f(r, k) * f(r, k);
    }
    return s;
  };

  // prior KL(q(z_T | m) || N(0, I))
  const double aT = ns.alpha[ns.T], sT = ns.sigma[ns.T];
  const double prior =
      0.5 * (aT * aT * sq_norm(mol.coords, mol.feats) +
             d_total * (sT * sT - 1.0) - d_total * 2.0 * std::log(sT));

  std::mt19937_64 rng(splitmix64(seed ^ 0x71bull));
  std::uniform_int_distribution<int> pick_t(1, ns.T);
  double acc = 0.0;
  for (int k = 0; k < k_samples; ++k) {
    const int t = pick_t(rng);
    const diffusion::State eps = diffusion::sample_zero_com_noise(
        mol.coords.rows(), feat_dim, mol.mask, rng);
    const diffusion::State z = diffusion::forward_noise(mol, t, eps, ns);
    const diffusion::State eps_hat = diffusion::predict_noise(p, z, t, model);

    double term;
    if (t >= 2) {
      double err = 0.0;
      for (int r : live) {
        for (int c = 0; c < 3; ++c) {
          const double d = eps.coords(r, c) - eps_hat.coords(r, c);
          err += d * d;
        }
        for (int c = 0; c < feat_dim; ++c) {
          const double d = eps.feats(r, c) - eps_hat.feats(r, c);
          err += d * d;
        }
      }
      term = 0.5 * (ns.snr(t - 1) / ns.snr(t) - 1.0) * err;
    } else {
      // reconstruction: -log N(m | (z_1 - sigma_1 eps_hat)/alpha_1, sigma0^2)
      const double a1 = ns.alpha[1], s1 = ns.sigma[1];
      const double sigma0 = s1 / a1;
      double err = 0.0;
      for (int r : live) {
        for (int c = 0; c < 3; ++c) {
          const double mhat = (z.coords(r, c) - s1 * eps_hat.coords(r, c)) / a1;
          const double d = mol.coords(r, c) - mhat;
          err += d * d;
        }
        for (int c = 0; c < feat_dim; ++c) {
          const double mhat = (z.feats(r, c) - s1 * eps_hat.feats(r, c)) / a1;
          const double d = mol.feats(r, c) - mhat;
          err += d * d;
        }
      }
      term = 0.5 * d_total * std::log(2.0 * M_PI * sigma0 * sigma0) +
             err / (2.0 * sigma0 * sigma0);
    }
    acc += static_cast<double>(ns.T) * term;
  }
  return prior + acc / k_samples;
}

}  // namespace framediff::metrics
