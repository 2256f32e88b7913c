// Checkpoint container: model configuration, named float64 tensors, and
// auxiliary string entries (optimizer step counters, RNG state, epoch/step).
//
// Layout (all integers little-endian):
//   magic "MMTC" | u32 version | payload | u32 crc32(payload)
// Payload:
//   config (u32 fields: n_contrasts, base_dim, n_scales, img_h, img_w,
//           window_h, window_w, patch, n_heads, heads...)
//   u32 n_tensors, then per tensor: name, u32 ndim, u64 dims..., f64 data...
//   u32 n_aux, then per entry: key string, value string
// Strings are u32 length + raw bytes.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mmt/model.hpp"
#include "mmt/params.hpp"
#include "mmt/tensor.hpp"

namespace mmt {

struct Checkpoint {
  MmtConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, std::string> aux;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Copies "<prefix><param name>" tensors into the registry; every registry
/// entry must be present with a matching shape.
void load_into_registry(ParamRegistry& reg, const Checkpoint& ckpt, const std::string& prefix);

/// Model rebuilt from the checkpoint's config with its "model." tensors.
MmtModel load_model(const Checkpoint& ckpt);

}  // namespace mmt
