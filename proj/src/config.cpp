#include "framediff/config.hpp"

#include <fstream>
#include <sstream>

#include "framediff/errors.hpp"

namespace framediff {

namespace {

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + v +
                      "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v +
                      "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected unsigned, got '" +
                      v + "'");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "paradigm",   "backbone",     "T",           "lambda",
      "eq_layers",  "eq_channels",  "eq_hidden",   "bb_layers",
      "bb_heads",   "bb_width",     "bb_mlp_ratio", "t_embed_dim",
      "lr",         "weight_decay", "grad_clip",   "batch",
      "steps",      "seed",         "data",        "out",
      "resume",     "ckpt_interval", "scale_onehot", "scale_charge",
  };
  return k;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "paradigm") paradigm = value;
  else if (key == "backbone") backbone = value;
  else if (key == "T") T = parse_int(key, value);
  else if (key == "lambda") lambda = parse_double(key, value);
  else if (key == "eq_layers") eq_layers = parse_int(key, value);
  else if (key == "eq_channels") eq_channels = parse_int(key, value);
  else if (key == "eq_hidden") eq_hidden = parse_int(key, value);
  else if (key == "bb_layers") bb_layers = parse_int(key, value);
  else if (key == "bb_heads") bb_heads = parse_int(key, value);
  else if (key == "bb_width") bb_width = parse_int(key, value);
  else if (key == "bb_mlp_ratio") bb_mlp_ratio = parse_int(key, value);
  else if (key == "t_embed_dim") t_embed_dim = parse_int(key, value);
  else if (key == "lr") lr = parse_double(key, value);
  else if (key == "weight_decay") weight_decay = parse_double(key, value);
  else if (key == "grad_clip") grad_clip = parse_double(key, value);
  else if (key == "batch") batch = parse_int(key, value);
  else if (key == "steps") steps = parse_int(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "data") data = value;
  else if (key == "out") out = value;
  else if (key == "resume") resume = value;
  else if (key == "ckpt_interval") ckpt_interval = parse_int(key, value);
  else if (key == "scale_onehot") scale_onehot = parse_double(key, value);
  else if (key == "scale_charge") scale_charge = parse_double(key, value);
  else throw ConfigError("unknown config key: " + key);
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  cfg.apply_file(path);
  return cfg;
}

std::string RunConfig::serialize() const {
  std::ostringstream out_s;
  out_s << "paradigm = " << paradigm << "\n";
  out_s << "backbone = " << backbone << "\n";
  out_s << "T = " << T << "\n";
  out_s << "lambda = " << lambda << "\n";
  out_s << "eq_layers = " << eq_layers << "\n";
  out_s << "eq_channels = " << eq_channels << "\n";
  out_s << "eq_hidden = " << eq_hidden << "\n";
  out_s << "bb_layers = " << bb_layers << "\n";
  out_s << "bb_heads = " << bb_heads << "\n";
  out_s << "bb_width = " << bb_width << "\n";
  out_s << "bb_mlp_ratio = " << bb_mlp_ratio << "\n";
  out_s << "t_embed_dim = " << t_embed_dim << "\n";
  out_s << "lr = " << lr << "\n";
  out_s << "weight_decay = " << weight_decay << "\n";
  out_s << "grad_clip = " << grad_clip << "\n";
  out_s << "batch = " << batch << "\n";
  out_s << "steps = " << steps << "\n";
  out_s << "seed = " << seed << "\n";
  out_s << "data = " << data << "\n";
  out_s << "out = " << out << "\n";
  out_s << "ckpt_interval = " << ckpt_interval << "\n";
  out_s << "scale_onehot = " << scale_onehot << "\n";
  out_s << "scale_charge = " << scale_charge << "\n";
  return out_s.str();
}

void RunConfig::validate() const {
  if (paradigm != "gfd" && paradigm != "lfd" && paradigm != "lfd-aligned" &&
      paradigm != "ifd")
    throw ConfigError("paradigm must be gfd|lfd|lfd-aligned|ifd");
  if (backbone != "edge" && backbone != "plain")
    throw ConfigError("backbone must be edge|plain");
  if (T < 1) throw ConfigError("T must be >= 1");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  for (int v : {eq_layers, eq_channels, eq_hidden, bb_layers, bb_heads,
                bb_width, bb_mlp_ratio, batch, steps, ckpt_interval})
    if (v < 1) throw ConfigError("counts must be >= 1");
  if (t_embed_dim < 2 || t_embed_dim % 2 != 0)
    throw ConfigError("t_embed_dim must be even and >= 2");
  if (bb_width % bb_heads != 0)
    throw ConfigError("bb_width must be divisible by bb_heads");
}

}  // namespace framediff
