#pragma once

#include <string>
#include <vector>

#include "maeforge/mae.hpp"
#include "maeforge/tensor.hpp"
#include "maeforge/vit.hpp"

namespace maeforge {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Classifier = ViT trunk + classification head (fresh head per downstream
// task; the class token lives with the head).
struct ClassifierParams {
    EncoderParams encoder;
    HeadParams head;
};

// Stable, checkpoint-facing names. Encoder tensors are the transferable
// subset ("patch_embed.*" and "encoder.*").
std::vector<NamedTensor> named_tensors(const EncoderParams& p);
std::vector<NamedTensor> named_tensors(const MaeParams& p);
std::vector<NamedTensor> named_tensors(const ClassifierParams& p);

bool is_encoder_tensor_name(const std::string& name);

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named);

}  // namespace maeforge
