#pragma once

#include <string>
#include <vector>

#include "vitdp/vit.hpp"

namespace vitdp {

// Checkpoint layout, all little-endian: "VITP" magic, u32 version, u32 tensor
// count; per tensor: u32 name length, name bytes, u32 ndim, u32 dims, then
// numel 32-bit floats.
std::vector<uint8_t> serialize_params(const ParamSet<float>& params);
ParamSet<float> deserialize_params(const std::vector<uint8_t>& bytes);

void save_checkpoint(const std::string& path, const ParamSet<float>& params);
ParamSet<float> load_checkpoint(const std::string& path);

// FNV-1a 64 over the little-endian byte image of every tensor, in entry order.
uint64_t param_fingerprint(const ParamSet<float>& params);

}  // namespace vitdp
