#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "maeforge/params.hpp"
#include "maeforge/tensor.hpp"

namespace maeforge {

// Sidecar information stored with every checkpoint: configuration snapshot,
// the append-only stage lineage, and the choices that affect replay.
struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::vector<std::string> lineage;
    std::map<std::string, std::string> config;
};

struct Checkpoint {
    std::vector<NamedTensor> tensors;
    CheckpointMeta meta;
};

// Binary container: 8-byte magic, u32 format version, length-prefixed JSON
// metadata, then a named tensor table (name, dtype, dims, little-endian
// row-major payload). Round-trips bit-exactly at the build's precision.
void save_checkpoint(const std::vector<NamedTensor>& tensors, const CheckpointMeta& meta,
                     const std::string& path);

Checkpoint load_checkpoint(const std::string& path);

// Only the transferable ViT trunk ("patch_embed.*", "encoder.*").
Checkpoint load_checkpoint_encoder_only(const std::string& path);

// Copies checkpoint values into an existing parameter tree by name. Strict
// mode rejects checkpoint tensors with no destination; missing destinations
// are always an error.
void load_into(const std::vector<NamedTensor>& dst, const Checkpoint& ckpt, bool strict = true);

}  // namespace maeforge
