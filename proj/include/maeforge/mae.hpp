#pragma once

#include <vector>

#include "maeforge/patcher.hpp"
#include "maeforge/rng.hpp"
#include "maeforge/tensor.hpp"
#include "maeforge/vit.hpp"

namespace maeforge {

enum class LossScope { MaskedOnly, AllPatches };
enum class TargetNorm { None, PerPatch };

// Full masked-autoencoder shape: ViT encoder over visible tokens, a
// lightweight decoder over the complete token set, pixel reconstruction.
struct MaeConfig {
    EncoderConfig encoder;
    int decoder_depth;
    int decoder_width;
    int decoder_heads;
    double mask_ratio;
    int patch;
    int image_side;
    int channels;
    LossScope loss_scope;
    TargetNorm target_norm;

    MaeConfig(EncoderConfig encoder_, int decoder_depth_, int decoder_width_, int decoder_heads_,
              double mask_ratio_ = 0.75, int patch_ = 16, int image_side_ = 224, int channels_ = 1,
              LossScope loss_scope_ = LossScope::MaskedOnly, TargetNorm target_norm_ = TargetNorm::None);

    int grid() const { return image_side / patch; }
    int patch_count() const { return grid() * grid(); }
    int patch_len() const { return patch * patch * channels; }
    EncoderConfig decoder_config() const;
};

// ViT trunk shared by pretraining and classification: patch embedding plus
// encoder blocks.
struct EncoderParams {
    Tensor patch_embed_w;  // (p*p*c) x d
    Tensor patch_embed_b;  // d
    std::vector<BlockParams> blocks;
};

EncoderParams make_encoder_params(int patch_len, const EncoderConfig& cfg, Rng& rng);

struct MaeParams {
    EncoderParams encoder;
    Tensor adapter;     // d_enc x d_dec; identity-initialized when square
    Tensor mask_token;  // d_dec, one shared learned vector
    std::vector<BlockParams> decoder_blocks;
    Tensor pixel_head_w;  // d_dec x (p*p*c)
    Tensor pixel_head_b;  // (p*p*c)
};

MaeParams make_mae_params(const MaeConfig& cfg, Rng& rng);

// Token-count instrumentation for the encoder/decoder asymmetry checks.
struct MaeTrace {
    int encoder_tokens = 0;
    int decoder_tokens = 0;
};

struct MaeForwardResult {
    Tensor pred_patches;  // N x (p*p*c), original patch order
    MaskPlan plan;
};

// patchify -> embed -> +PE -> drop masked -> encode -> width adapter ->
// shared mask tokens at masked slots -> +PE over the full set -> decode ->
// pixel head. The mask plan is sampled from rng.
MaeForwardResult mae_forward(Tape& tape, const Tensor& image, const MaeParams& params,
                             const MaeConfig& cfg, Rng& rng, MaeTrace* trace = nullptr);

// Same forward with an injected plan; fixing the plan fixes the output.
MaeForwardResult mae_forward_with_plan(Tape& tape, const Tensor& image, const MaeParams& params,
                                       const MaeConfig& cfg, const MaskPlan& plan,
                                       MaeTrace* trace = nullptr);

// Mean squared error over the configured scope (masked patches only, or
// every patch). Errors on an empty masked set under masked-only scope.
Tensor reconstruction_loss(Tape& tape, const Tensor& pred, const Tensor& target_patches,
                           const MaskPlan& plan, const MaeConfig& cfg);

enum class ReconstructMode { PredEverywhere, PasteVisible };

// Reassembles predictions into image shape; paste-visible overwrites
// visible slots with ground truth for inspection output.
Tensor reconstruct_image(const Tensor& pred_patches, const MaskPlan& plan, const PatchSet& original,
                         ReconstructMode mode);

}  // namespace maeforge
