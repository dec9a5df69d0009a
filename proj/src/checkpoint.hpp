#pragma once

#include <string>

#include "vit.hpp"

namespace privit::vit {

// Binary checkpoint, little-endian throughout:
//   bytes     "PVIT"
//   u32       format version (currently 1)
//   u32 x10   num_layers, embed_dim, mlp_dim, num_heads, image_size,
//             patch_size, num_classes, channels, gelu_granularity,
//             taylor_variant
//   f64       switch threshold epsilon
//   u8 x2     c_frozen, s_frozen
//   f64 ...   weight arrays in named_params() order, then the C mask,
//             then the S mask
// Round trips are bit-exact.
void save_checkpoint(const Model & m, const std::string & path);
Model load_checkpoint(const std::string & path);

}  // namespace privit::vit
