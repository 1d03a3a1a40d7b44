#pragma once

#include <string>

#include "s2ct/params.hpp"

namespace s2ct {

// RCKP checkpoint container: magic "RCKP", u32 version (1), u32 tensor
// count, then per tensor: u16 name length + UTF-8 name, u8 rank, u32
// extents, raw little-endian f32 payload. Round-trips are bit-exact.
void save_rckp(const ParameterStore& params, const std::string& path);

// Loaded tensors have requires_grad=false; callers opt parameters back in.
ParameterStore load_rckp(const std::string& path);

}  // namespace s2ct
