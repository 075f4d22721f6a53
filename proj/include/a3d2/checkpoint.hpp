#pragma once

#include <string>

#include "a3d2/model.hpp"

namespace a3d2 {

// Binary checkpoint format, little-endian throughout:
//   magic "A3D2" | version u16 | N,H,W,base,fusion,fused as u32 | tensor count u32
//   per tensor: name length u16, UTF-8 name, ndim u8, dims u32 each, raw f32 data
inline constexpr uint16_t kCheckpointVersion = 1;

void save_checkpoint(const ParamMap<float>& params, const ModelConfig& config,
                     const std::string& path);

struct LoadedCheckpoint {
    ParamMap<float> params;
    ModelConfig config;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace a3d2
