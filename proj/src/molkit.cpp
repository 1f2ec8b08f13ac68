#include "framediff/molkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "framediff/errors.hpp"

namespace framediff::molkit {

namespace {
constexpr const char* kSymbols[kNumAtomTypes] = {"H", "C", "N", "O", "F"};
constexpr int kValences[kNumAtomTypes] = {1, 4, 3, 2, 1};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace

const char* atom_symbol(AtomType t) { return kSymbols[static_cast<int>(t)]; }

AtomType atom_type_from_symbol(const std::string& sym) {
  for (int i = 0; i < kNumAtomTypes; ++i)
    if (sym == kSymbols[i]) return static_cast<AtomType>(i);
  throw UnknownAtomType("unknown atom type: " + sym);
}

int nominal_valence(AtomType t) { return kValences[static_cast<int>(t)]; }

std::size_t Molecule::live_count() const {
  if (mask.empty()) return coords.size();
  std::size_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  return n;
}

FeatureVector FeatureCodec::encode(AtomType t, int charge) const {
  const int idx = static_cast<int>(t);
  if (idx < 0 || idx >= kNumAtomTypes)
    throw UnknownAtomType("encode_features: invalid atom type");
  FeatureVector v;
  v.onehot[idx] = scale_onehot;
  v.charge = scale_charge * charge;
  return v;
}

std::pair<AtomType, int> FeatureCodec::decode(const FeatureVector& v) const {
  int best = 0;
  for (int i = 1; i < kNumAtomTypes; ++i)
    if (v.onehot[i] > v.onehot[best]) best = i;
  const int charge = static_cast<int>(std::lround(v.charge / scale_charge));
  return {static_cast<AtomType>(best), charge};
}

std::vector<int> EncodedMol::live_rows() const {
  std::vector<int> rows;
  for (std::int64_t i = 0; i < coords.rows(); ++i)
    if (mask.empty() || mask[i]) rows.push_back(static_cast<int>(i));
  return rows;
}

EncodedMol encode_molecule(const Molecule& mol, const FeatureCodec& codec) {
  const std::int64_t n = static_cast<std::int64_t>(mol.size());
  EncodedMol enc;
  enc.coords = Tensor(n, 3);
  enc.feats = Tensor(n, kFeatureDim);
  enc.mask = mol.mask;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!mol.live(i)) continue;
    enc.coords(i, 0) = mol.coords[i].x;
    enc.coords(i, 1) = mol.coords[i].y;
    enc.coords(i, 2) = mol.coords[i].z;
    const FeatureVector f = codec.encode(mol.types[i], mol.charges[i]);
    for (int k = 0; k < kNumAtomTypes; ++k) enc.feats(i, k) = f.onehot[k];
    enc.feats(i, kNumAtomTypes) = f.charge;
  }
  return enc;
}

Molecule decode_molecule(const EncodedMol& enc, const FeatureCodec& codec) {
  Molecule mol;
  const std::int64_t n = enc.coords.rows();
  mol.coords.resize(n);
  mol.types.resize(n, AtomType::H);
  mol.charges.resize(n, 0);
  mol.mask = enc.mask;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!(enc.mask.empty() || enc.mask[i])) continue;
    mol.coords[i] = {enc.coords(i, 0), enc.coords(i, 1), enc.coords(i, 2)};
    FeatureVector f;
    for (int k = 0; k < kNumAtomTypes; ++k) f.onehot[k] = enc.feats(i, k);
    f.charge = enc.feats(i, kNumAtomTypes);
    auto [t, c] = codec.decode(f);
    mol.types[i] = t;
    mol.charges[i] = c;
  }
  return mol;
}

std::vector<Molecule> read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Molecule> mols;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Skip blank separator lines between records.
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    int count = 0;
    try {
      count = std::stoi(line);
    } catch (const std::exception&) {
      throw ParseError("expected atom count, got '" + line + "'", lineno);
    }
    if (count < 0) throw ParseError("negative atom count", lineno);
    if (!std::getline(in, line))
      throw ParseError("missing comment line", lineno + 1);
    ++lineno;
    Molecule mol;
    for (int i = 0; i < count; ++i) {
      if (!std::getline(in, line))
        throw ParseError("record ends before declared atom count", lineno + 1);
      ++lineno;
      std::istringstream ss(line);
      std::string sym;
      double x, y, z;
      int charge;
      if (!(ss >> sym >> x >> y >> z >> charge))
        throw ParseError("malformed atom line '" + line + "'", lineno);
      AtomType t;
      try {
        t = atom_type_from_symbol(sym);
      } catch (const UnknownAtomType&) {
        throw ParseError("unknown atom symbol '" + sym + "'", lineno);
      }
      mol.coords.push_back({x, y, z});
      mol.types.push_back(t);
      mol.charges.push_back(charge);
    }
    mols.push_back(std::move(mol));
  }
  return mols;
}

void write_xyz(const std::string& path, const std::vector<Molecule>& mols) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char buf[160];
  for (const auto& mol : mols) {
    out << mol.live_count() << "\n";
    out << "framediff v1\n";
    for (std::size_t i = 0; i < mol.size(); ++i) {
      if (!mol.live(i)) continue;
      std::snprintf(buf, sizeof(buf), "%s %.6f %.6f %.6f %d\n",
                    atom_symbol(mol.types[i]), mol.coords[i].x, mol.coords[i].y,
                    mol.coords[i].z, mol.charges[i]);
      out << buf;
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

namespace {

Molecule make_mol(std::vector<AtomType> types, std::vector<geom::Vec3> coords) {
  Molecule m;
  m.types = std::move(types);
  m.coords = std::move(coords);
  m.charges.assign(m.types.size(), 0);
  return m;
}

std::vector<Template> build_templates() {
  using geom::Vec3;
  using enum AtomType;
  std::vector<Template> t;

  t.push_back({"H2", make_mol({H, H}, {{-0.3705, 0, 0}, {0.3705, 0, 0}})});

  t.push_back({"H2O", make_mol({O, H, H}, {{0, 0, 0},
                                           {0.7572, 0.5865, 0},
                                           {-0.7572, 0.5865, 0}})});

  {
    // N-H 1.012 A, H-N-H 106.7 deg
    const double r = 1.012, ct = -0.3764;
    const double st = std::sqrt(1.0 - ct * ct);
    std::vector<Vec3> c{{0, 0, 0}};
    for (int k = 0; k < 3; ++k) {
      const double phi = 2.0 * M_PI * k / 3.0;
      c.push_back({r * st * std::cos(phi), r * st * std::sin(phi), r * ct});
    }
    t.push_back({"NH3", make_mol({N, H, H, H}, c)});
  }

  {
    const double a = 1.089 / std::sqrt(3.0);
    t.push_back({"CH4", make_mol({C, H, H, H, H}, {{0, 0, 0},
                                                   {a, a, a},
                                                   {a, -a, -a},
                                                   {-a, a, -a},
                                                   {-a, -a, a}})});
  }

  t.push_back({"C2H2", make_mol({C, C, H, H}, {{0.6015, 0, 0},
                                               {-0.6015, 0, 0},
                                               {1.6625, 0, 0},
                                               {-1.6625, 0, 0}})});

  {
    // C=C 1.339, C-H 1.086, H-C-C 121.3 deg
    const double cx = 0.6695;
    const double hx = cx + 1.086 * std::cos(58.7 * M_PI / 180.0);
    const double hy = 1.086 * std::sin(58.7 * M_PI / 180.0);
    t.push_back({"C2H4", make_mol({C, C, H, H, H, H}, {{cx, 0, 0},
                                                       {-cx, 0, 0},
                                                       {hx, hy, 0},
                                                       {hx, -hy, 0},
                                                       {-hx, hy, 0},
                                                       {-hx, -hy, 0}})});
  }

  {
    // C-O 1.427, O-H 0.956 (C-O-H 108.5 deg), C-H 1.093 tetrahedral
    std::vector<Vec3> c{{0, 0, 0}, {1.427, 0, 0}};
    c.push_back({1.427 + 0.956 * std::cos(71.5 * M_PI / 180.0),
                 0.956 * std::sin(71.5 * M_PI / 180.0), 0});
    const double ct = std::cos(109.5 * M_PI / 180.0);
    const double st = std::sin(109.5 * M_PI / 180.0);
    for (int k = 0; k < 3; ++k) {
      const double phi = M_PI / 2.0 + 2.0 * M_PI * k / 3.0;
      c.push_back(
          {1.093 * ct, 1.093 * st * std::cos(phi), 1.093 * st * std::sin(phi)});
    }
    t.push_back({"CH3OH", make_mol({C, O, H, H, H, H}, c)});
  }

  t.push_back({"HCN", make_mol({H, C, N}, {{-1.064, 0, 0},
                                           {0, 0, 0},
                                           {1.156, 0, 0}})});
  return t;
}

}  // namespace

const std::vector<Template>& toy_templates() {
  static const std::vector<Template> templates = build_templates();
  return templates;
}

std::vector<Molecule> synth_toy_dataset(int n, std::uint64_t seed) {
  const auto& lib = toy_templates();
  std::vector<Molecule> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(0x5A17u + i)));
    std::uniform_int_distribution<std::size_t> pick(0, lib.size() - 1);
    Molecule mol = lib[pick(rng)].mol;
    std::normal_distribution<double> jitter(0.0, 0.02);
    for (auto& v : mol.coords) {
      v.x += jitter(rng);
      v.y += jitter(rng);
      v.z += jitter(rng);
    }
    const geom::Frame rot = geom::random_rotation(rng());
    std::uniform_real_distribution<double> shift(-1.0, 1.0);
    const geom::Vec3 tr{shift(rng), shift(rng), shift(rng)};
    for (auto& v : mol.coords) v = geom::invert_frame(rot, v) + tr;
    out.push_back(std::move(mol));
  }
  return out;
}

AtomCountHistogram atom_count_histogram(const std::vector<Molecule>& mols) {
  AtomCountHistogram hist;
  for (const auto& m : mols) ++hist[static_cast<int>(m.live_count())];
  return hist;
}

int sample_atom_count(const AtomCountHistogram& hist, std::uint64_t seed) {
  std::uint64_t total = 0;
  for (const auto& [count, weight] : hist) total += weight;
  if (total == 0) throw EmptyHistogram("sample_atom_count: empty histogram");
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
  std::uint64_t r = pick(rng);
  for (const auto& [count, weight] : hist) {
    if (r < weight) return count;
    r -= weight;
  }
  return hist.rbegin()->first;
}

}  // namespace framediff::molkit
