#pragma once

#include <string>

#include "json.hpp"
#include "ntc/model.hpp"

namespace ntc {

// Checkpoint directory layout, format version 1:
//   manifest.json  -- variant, geometry, per-tensor name/shape/offset, metrics
//   weights.bin    -- all tensors concatenated as little-endian float32
// Trainable parameters and batchnorm running statistics are both stored, so a
// reloaded model reproduces forward outputs bitwise.
void save_checkpoint(Model<float>& model, const std::string& dir,
                     const nlohmann::json& metrics = nlohmann::json::object());

Model<float> load_checkpoint(const std::string& dir);

}  // namespace ntc
