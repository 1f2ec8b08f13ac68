#pragma once

#include <cstdint>
#include <string>

#include "framediff/config.hpp"
#include "framediff/model.hpp"
#include "framediff/molkit.hpp"
#include "framediff/params.hpp"

// Little-endian binary container: magic "FDCKPT1", a config snapshot, the
// training-step counter, the atom-count histogram, named parameter blocks,
// optimizer state, and a trailing CRC-32 over everything before it.
// Round-trips are bit-exact.

namespace framediff::ckpt {

struct Checkpoint {
  RunConfig config;
  std::uint64_t step = 0;
  molkit::AtomCountHistogram histogram;
  bool has_optimizer = false;
  AdamW optimizer;

  // Builds the Model (configs + parameter entries) described by config.
  Model make_model() const;
};

// model's parameter store (values + Adam moments when opt is non-null) is
// written alongside the metadata in cp.
void save(const std::string& path, const Checkpoint& cp, const Model& model);

// Throws VersionMismatch on bad magic/version, ChecksumError on CRC
// failure, IoError otherwise. Parameters and moments are restored into the
// model created from the stored config.
Checkpoint load(const std::string& path, Model& model);

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

}  // namespace framediff::ckpt
