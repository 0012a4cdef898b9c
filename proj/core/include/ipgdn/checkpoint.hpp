#pragma once

#include <filesystem>

#include "ipgdn/model.hpp"

namespace ipgdn {

struct Checkpoint {
  ModelConfig config;
  IpgdnModel model;
};

/// Versioned binary container: config echo plus every parameter matrix with
/// shape headers and raw little-endian 64-bit floats. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const IpgdnModel& model);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ipgdn
