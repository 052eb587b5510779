#include "phgr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "phgr/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blob assumes a little-endian host");

namespace phgr::ckpt {

using model::ModelConfig;
using model::ModelParams;

namespace {

std::string shape_string(const ad::Tensor& t) {
  if (t.shape.empty()) return "scalar";
  std::string out = std::to_string(t.shape[0]);
  for (std::size_t i = 1; i < t.shape.size(); ++i) out += "x" + std::to_string(t.shape[i]);
  return out;
}

std::vector<std::size_t> parse_shape(const std::string& s) {
  if (s == "scalar") return {};
  std::vector<std::size_t> shape;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t next = s.find('x', pos);
    if (next == std::string::npos) next = s.size();
    shape.push_back(std::stoull(s.substr(pos, next - pos)));
    pos = next + 1;
  }
  return shape;
}

std::string join_mix(const std::vector<double>& mix) {
  if (mix.empty()) return "-";
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    if (i) out << ',';
    out << mix[i];
  }
  return out.str();
}

std::vector<double> parse_mix(const std::string& s) {
  if (s == "-") return {};
  std::vector<double> mix;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t next = s.find(',', pos);
    if (next == std::string::npos) next = s.size();
    mix.push_back(std::stod(s.substr(pos, next - pos)));
    pos = next + 1;
  }
  return mix;
}

}  // namespace

void save(const std::string& path, const ModelParams& params, const ModelConfig& cfg) {
  std::ofstream blob(path + ".blob", std::ios::binary);
  if (!blob) throw IoError("checkpoint: cannot write " + path + ".blob");
  std::ofstream manifest(path + ".manifest");
  if (!manifest) throw IoError("checkpoint: cannot write " + path + ".manifest");

  manifest.precision(17);
  manifest << "format phgr-checkpoint-1\n";
  manifest << "n " << params.n << "\n";
  manifest << "m " << params.m << "\n";
  manifest << "dim " << cfg.dim << "\n";
  manifest << "layers " << cfg.layers << "\n";
  manifest << "c " << cfg.c << "\n";
  manifest << "boundary_eps " << cfg.boundary_eps << "\n";
  manifest << "hyperbolic " << (cfg.hyperbolic ? 1 : 0) << "\n";
  manifest << "inner " << (cfg.inner == adg::InnerKind::geodesic_d ? "D" : "P") << "\n";
  manifest << "no_global " << cfg.no_global << "\n";
  manifest << "no_local " << cfg.no_local << "\n";
  manifest << "no_long " << cfg.no_long << "\n";
  manifest << "no_short " << cfg.no_short << "\n";
  manifest << "init_std " << cfg.init_std << "\n";
  manifest << "alpha " << join_mix(cfg.alpha) << "\n";
  manifest << "zeta " << join_mix(cfg.zeta) << "\n";

  std::size_t offset = 0;
  for (const auto& [name, tensor] : params.blocks()) {
    manifest << "block " << name << " " << shape_string(*tensor) << " " << offset << "\n";
    blob.write(reinterpret_cast<const char*>(tensor->v.data()),
               static_cast<std::streamsize>(tensor->v.size() * sizeof(double)));
    offset += tensor->v.size() * sizeof(double);
  }
  if (!blob || !manifest) throw IoError("checkpoint: write failed for " + path);
}

std::pair<ModelParams, ModelConfig> load(const std::string& path) {
  std::ifstream manifest(path + ".manifest");
  if (!manifest) throw IoError("checkpoint: cannot read " + path + ".manifest");
  std::ifstream blob(path + ".blob", std::ios::binary);
  if (!blob) throw IoError("checkpoint: cannot read " + path + ".blob");

  ModelConfig cfg;
  int n = 0, m = 0;
  struct BlockEntry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset;
  };
  std::vector<BlockEntry> entries;

  std::string line;
  bool format_seen = false;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "format") {
      std::string fmt;
      fields >> fmt;
      if (fmt != "phgr-checkpoint-1") throw DataError("checkpoint: unknown format " + fmt);
      format_seen = true;
    } else if (key == "n") {
      fields >> n;
    } else if (key == "m") {
      fields >> m;
    } else if (key == "dim") {
      fields >> cfg.dim;
    } else if (key == "layers") {
      fields >> cfg.layers;
    } else if (key == "c") {
      fields >> cfg.c;
    } else if (key == "boundary_eps") {
      fields >> cfg.boundary_eps;
    } else if (key == "hyperbolic") {
      int v;
      fields >> v;
      cfg.hyperbolic = v != 0;
    } else if (key == "inner") {
      std::string v;
      fields >> v;
      if (v != "D" && v != "P") throw DataError("checkpoint: bad inner kind " + v);
      cfg.inner = v == "D" ? adg::InnerKind::geodesic_d : adg::InnerKind::projected_p;
    } else if (key == "no_global" || key == "no_local" || key == "no_long" ||
               key == "no_short") {
      int v;
      fields >> v;
      bool* flag = key == "no_global"  ? &cfg.no_global
                   : key == "no_local" ? &cfg.no_local
                   : key == "no_long"  ? &cfg.no_long
                                       : &cfg.no_short;
      *flag = v != 0;
    } else if (key == "init_std") {
      fields >> cfg.init_std;
    } else if (key == "alpha" || key == "zeta") {
      std::string v;
      fields >> v;
      (key == "alpha" ? cfg.alpha : cfg.zeta) = parse_mix(v);
    } else if (key == "block") {
      BlockEntry e;
      std::string shape;
      fields >> e.name >> shape >> e.offset;
      e.shape = parse_shape(shape);
      entries.push_back(std::move(e));
    } else {
      throw DataError("checkpoint: unknown manifest key " + key);
    }
    if (fields.fail()) throw DataError("checkpoint: malformed manifest line: " + line);
  }
  if (!format_seen) throw DataError("checkpoint: missing format line");
  if (n < 1 || m < 1) throw DataError("checkpoint: bad n/m in manifest");
  cfg.validate();

  ModelParams params = model::init_embeddings(n, m, cfg, 0);
  auto blocks = params.blocks();
  if (entries.size() != blocks.size())
    throw DataError("checkpoint: block count does not match the config");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& [name, tensor] = blocks[i];
    const BlockEntry& e = entries[i];
    if (e.name != name) throw DataError("checkpoint: unexpected block " + e.name);
    if (e.shape != tensor->shape) throw DataError("checkpoint: shape mismatch for " + e.name);
    blob.seekg(static_cast<std::streamoff>(e.offset));
    blob.read(reinterpret_cast<char*>(tensor->v.data()),
              static_cast<std::streamsize>(tensor->v.size() * sizeof(double)));
    if (!blob) throw DataError("checkpoint: blob truncated at block " + e.name);
  }
  return {std::move(params), cfg};
}

}  // namespace phgr::ckpt
