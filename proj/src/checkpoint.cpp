#include "framediff/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "framediff/errors.hpp"

namespace framediff::ckpt {

namespace {

constexpr char kMagic[8] = {'F', 'D', 'C', 'K', 'P', 'T', '1', '\0'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::vector<char> buf;

  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf.insert(buf.end(), c, c + n);
  }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    u64(static_cast<std::uint64_t>(t.rows()));
    u64(static_cast<std::uint64_t>(t.cols()));
    raw(t.data(), t.size() * sizeof(double));
  }
};

struct Reader {
  const char* p;
  const char* end;

  void raw(void* out, std::size_t n) {
    if (p + n > end) throw IoError("checkpoint truncated");
    std::memcpy(out, p, n);
    p += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  Tensor tensor() {
    const auto rows = static_cast<std::int64_t>(u64());
    const auto cols = static_cast<std::int64_t>(u64());
    Tensor t(rows, cols);
    raw(t.data(), t.size() * sizeof(double));
    return t;
  }
};

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k)
      c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
  static const auto table = make_crc_table();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

Model Checkpoint::make_model() const {
  Model model;
  model.eq_cfg.layers = config.eq_layers;
  model.eq_cfg.channels = config.eq_channels;
  model.eq_cfg.hidden = config.eq_hidden;
  model.bb_cfg.layers = config.bb_layers;
  model.bb_cfg.heads = config.bb_heads;
  model.bb_cfg.width = config.bb_width;
  model.bb_cfg.mlp_ratio = config.bb_mlp_ratio;
  model.bb_cfg.t_embed_dim = config.t_embed_dim;
  model.variant = config.backbone == "edge" ? backbone::Variant::kEdge
                                            : backbone::Variant::kPlain;
  model.init(config.seed);
  return model;
}

void save(const std::string& path, const Checkpoint& cp, const Model& model) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.str(cp.config.serialize());
  w.u64(cp.step);

  w.u32(static_cast<std::uint32_t>(cp.histogram.size()));
  for (const auto& [count, weight] : cp.histogram) {
    w.u32(static_cast<std::uint32_t>(count));
    w.u64(weight);
  }

  const auto& entries = model.params.entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.tensor(e.value);
  }

  w.u32(cp.has_optimizer ? 1u : 0u);
  if (cp.has_optimizer) {
    w.u64(static_cast<std::uint64_t>(cp.optimizer.step_count));
    w.f64(cp.optimizer.lr);
    w.f64(cp.optimizer.weight_decay);
    for (const auto& e : entries) {
      w.tensor(e.m);
      w.tensor(e.v);
    }
  }

  w.u32(crc32(w.buf.data(), w.buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load(const std::string& path, Model& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 8)
    throw VersionMismatch("checkpoint too small");

  const std::uint32_t stored_crc =
      crc32(buf.data(), buf.size() - 4);
  std::uint32_t file_crc;
  std::memcpy(&file_crc, buf.data() + buf.size() - 4, 4);
  if (stored_crc != file_crc)
    throw ChecksumError("checkpoint checksum mismatch");

  Reader r{buf.data(), buf.data() + buf.size() - 4};
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw VersionMismatch("bad checkpoint magic");
  if (r.u32() != kVersion) throw VersionMismatch("unsupported version");

  Checkpoint cp;
  const std::string cfg_text = r.str();
  {
    std::istringstream ss(cfg_text);
    std::string line;
    while (std::getline(ss, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      cp.config.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  cp.step = r.u64();

  const std::uint32_t hist_n = r.u32();
  for (std::uint32_t i = 0; i < hist_n; ++i) {
    const int count = static_cast<int>(r.u32());
    cp.histogram[count] = r.u64();
  }

  model = cp.make_model();
  const std::uint32_t n_blocks = r.u32();
  if (n_blocks != model.params.count())
    throw VersionMismatch("parameter block count mismatch");
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    const std::string name = r.str();
    auto& e = model.params.at(static_cast<int>(i));
    if (e.name != name)
      throw VersionMismatch("parameter block name mismatch: " + name);
    Tensor t = r.tensor();
    if (!t.same_shape(e.value))
      throw VersionMismatch("parameter block shape mismatch: " + name);
    e.value = std::move(t);
  }

  cp.has_optimizer = r.u32() != 0;
  if (cp.has_optimizer) {
    cp.optimizer.step_count = static_cast<std::int64_t>(r.u64());
    cp.optimizer.lr = r.f64();
    cp.optimizer.weight_decay = r.f64();
    for (std::uint32_t i = 0; i < n_blocks; ++i) {
      auto& e = model.params.at(static_cast<int>(i));
      e.m = r.tensor();
      e.v = r.tensor();
    }
  }
  return cp;
}

}  // namespace framediff::ckpt
