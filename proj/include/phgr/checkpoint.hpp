#pragma once

#include <string>
#include <utility>

#include "phgr/model.hpp"

namespace phgr::ckpt {

// Writes <path>.manifest (text key/value: config fields, then one "block
// <name> <shape> <byte offset>" line per parameter block) and <path>.blob
// (raw little-endian 64-bit floats, concatenated in blocks() order).
// Round-tripping is bit-exact.
void save(const std::string& path, const model::ModelParams& params,
          const model::ModelConfig& cfg);

std::pair<model::ModelParams, model::ModelConfig> load(const std::string& path);

}  // namespace phgr::ckpt
