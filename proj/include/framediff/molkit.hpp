#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "framediff/geom.hpp"
#include "framediff/tensor.hpp"

// Molecule data model, categorical feature coding, XYZ file I/O and the
// toy-dataset synthesizer used for desk-scale runs.

namespace framediff::molkit {

enum class AtomType : std::uint8_t { H = 0, C = 1, N = 2, O = 3, F = 4 };
inline constexpr int kNumAtomTypes = 5;
inline constexpr int kFeatureDim = kNumAtomTypes + 1;  // one-hot + charge

const char* atom_symbol(AtomType t);
AtomType atom_type_from_symbol(const std::string& sym);  // UnknownAtomType
int nominal_valence(AtomType t);

struct Molecule {
  std::vector<geom::Vec3> coords;
  std::vector<AtomType> types;
  std::vector<int> charges;
  std::vector<std::uint8_t> mask;  // empty means all live

  std::size_t size() const { return coords.size(); }
  bool live(std::size_t i) const { return mask.empty() || mask[i]; }
  std::size_t live_count() const;
};

struct FeatureVector {
  double onehot[kNumAtomTypes] = {0, 0, 0, 0, 0};
  double charge = 0.0;
};

// Continuous relaxation of the categorical features for joint diffusion:
// scaled one-hot plus scaled integer charge.
struct FeatureCodec {
  double scale_onehot = 0.25;
  double scale_charge = 0.1;

  FeatureVector encode(AtomType t, int charge) const;
  // argmax over one-hot slots (ties -> lowest index), charge rounded to
  // the nearest integer after unscaling.
  std::pair<AtomType, int> decode(const FeatureVector& v) const;
};

// Coordinates (N x 3) plus feature block (N x kFeatureDim) in tensor form;
// the shape every network and diffusion routine consumes.
struct EncodedMol {
  Tensor coords;
  Tensor feats;
  std::vector<std::uint8_t> mask;

  std::int64_t atoms() const { return coords.rows(); }
  std::vector<int> live_rows() const;
};

EncodedMol encode_molecule(const Molecule& mol, const FeatureCodec& codec);
// Decodes coords + feature block back into a molecule (types by argmax).
Molecule decode_molecule(const EncodedMol& enc, const FeatureCodec& codec);

// XYZ-like records: atom count line, comment line, then
// "SYMBOL x y z charge" with 6-decimal coordinates; molecules concatenated.
std::vector<Molecule> read_xyz(const std::string& path);
void write_xyz(const std::string& path, const std::vector<Molecule>& mols);

// Idealized rigid template library: H2, H2O, NH3, CH4, C2H2, C2H4, CH3OH,
// HCN. Geometries chosen so the distance-based bond checker recovers each
// template's bond graph.
struct Template {
  std::string name;
  Molecule mol;
};
const std::vector<Template>& toy_templates();

// n jittered (sigma = 0.02 A), randomly rotated and translated template
// copies. Deterministic per seed.
std::vector<Molecule> synth_toy_dataset(int n, std::uint64_t seed);

using AtomCountHistogram = std::map<int, std::uint64_t>;
AtomCountHistogram atom_count_histogram(const std::vector<Molecule>& mols);
int sample_atom_count(const AtomCountHistogram& hist, std::uint64_t seed);

}  // namespace framediff::molkit
