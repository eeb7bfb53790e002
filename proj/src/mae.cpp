#include "maeforge/mae.hpp"

#include <cmath>
#include <string>

namespace maeforge {

MaeConfig::MaeConfig(EncoderConfig encoder_, int decoder_depth_, int decoder_width_, int decoder_heads_,
                     double mask_ratio_, int patch_, int image_side_, int channels_, LossScope loss_scope_,
                     TargetNorm target_norm_)
    : encoder(encoder_),
      decoder_depth(decoder_depth_),
      decoder_width(decoder_width_),
      decoder_heads(decoder_heads_),
      mask_ratio(mask_ratio_),
      patch(patch_),
      image_side(image_side_),
      channels(channels_),
      loss_scope(loss_scope_),
      target_norm(target_norm_) {
    if (patch <= 0 || image_side <= 0 || image_side % patch != 0)
        throw ValidationError("mae config: image side " + std::to_string(image_side) +
                              " not divisible by patch " + std::to_string(patch));
    if (channels < 1) throw ValidationError("mae config: channels must be >= 1");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0))
        throw ValidationError("mae config: mask ratio " + std::to_string(mask_ratio) + " outside (0, 1)");
    // decoder shape checked by decoder_config()
    (void)decoder_config();
}

EncoderConfig MaeConfig::decoder_config() const {
    return EncoderConfig(decoder_depth, decoder_width, decoder_heads, encoder.ffn_mult, encoder.norm_style,
                         Pool::MeanToken);
}

EncoderParams make_encoder_params(int patch_len, const EncoderConfig& cfg, Rng& rng) {
    EncoderParams p;
    const double limit = std::sqrt(6.0 / (patch_len + cfg.width));
    p.patch_embed_w = Tensor({patch_len, cfg.width}, true);
    for (auto& v : p.patch_embed_w.values()) v = static_cast<Real>(rng.uniform(-limit, limit));
    p.patch_embed_b = Tensor({cfg.width}, true);
    p.blocks.reserve(static_cast<std::size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) p.blocks.push_back(make_block_params(cfg.width, cfg.ffn_mult, rng));
    return p;
}

MaeParams make_mae_params(const MaeConfig& cfg, Rng& rng) {
    MaeParams p;
    p.encoder = make_encoder_params(cfg.patch_len(), cfg.encoder, rng);

    const int de = cfg.encoder.width, dd = cfg.decoder_width;
    p.adapter = Tensor({de, dd}, true);
    if (de == dd) {
        for (int i = 0; i < de; ++i) p.adapter.at(i, i) = Real(1);
    } else {
        const double limit = std::sqrt(6.0 / (de + dd));
        for (auto& v : p.adapter.values()) v = static_cast<Real>(rng.uniform(-limit, limit));
    }

    p.mask_token = Tensor({dd}, true);
    for (auto& v : p.mask_token.values()) v = static_cast<Real>(rng.normal(0.0, 0.02));

    const EncoderConfig dec_cfg = cfg.decoder_config();
    p.decoder_blocks.reserve(static_cast<std::size_t>(dec_cfg.depth));
    for (int i = 0; i < dec_cfg.depth; ++i)
        p.decoder_blocks.push_back(make_block_params(dd, dec_cfg.ffn_mult, rng));

    const int plen = cfg.patch_len();
    const double limit = std::sqrt(6.0 / (dd + plen));
    p.pixel_head_w = Tensor({dd, plen}, true);
    for (auto& v : p.pixel_head_w.values()) v = static_cast<Real>(rng.uniform(-limit, limit));
    p.pixel_head_b = Tensor({plen}, true);
    return p;
}

MaeForwardResult mae_forward_with_plan(Tape& tape, const Tensor& image, const MaeParams& params,
                                       const MaeConfig& cfg, const MaskPlan& plan, MaeTrace* trace) {
    if (image.ndim() != 3 || image.dim(0) != cfg.image_side || image.dim(1) != cfg.image_side ||
        image.dim(2) != cfg.channels)
        throw ValidationError("mae_forward: image " + image.shape_str() + " does not match config " +
                              std::to_string(cfg.image_side) + "x" + std::to_string(cfg.image_side) + "x" +
                              std::to_string(cfg.channels));
    const int n = cfg.patch_count();
    if (plan.total() != n)
        throw ValidationError("mae_forward: mask plan covers " + std::to_string(plan.total()) +
                              " patches, expected " + std::to_string(n));
    if (plan.visible_idx.empty())
        throw ValidationError("mae_forward: mask plan leaves no visible patches for the encoder");

    const PatchSet ps = patchify(image, cfg.patch);

    // embed + encoder-width positional table
    Tensor tokens = add_row_vector(tape, matmul(tape, ps.patches, params.encoder.patch_embed_w),
                                   params.encoder.patch_embed_b);
    const PosEncoding pe_enc = sincos_pos_encoding(cfg.grid(), cfg.grid(), cfg.encoder.width);
    tokens = add(tape, tokens, pe_enc.table);

    // encoder sees visible tokens only
    const Tensor visible = take_rows(tape, tokens, plan.visible_idx);
    if (trace) trace->encoder_tokens = visible.rows();
    const Tensor encoded = encode(tape, visible, params.encoder.blocks, cfg.encoder);

    // widen, re-insert shared mask tokens at masked slots, decoder PE
    const Tensor adapted = matmul(tape, encoded, params.adapter);
    Tensor full = assemble_rows(tape, adapted, params.mask_token, plan.visible_idx, n);
    const PosEncoding pe_dec = sincos_pos_encoding(cfg.grid(), cfg.grid(), cfg.decoder_width);
    full = add(tape, full, pe_dec.table);
    if (trace) trace->decoder_tokens = full.rows();

    const Tensor decoded = encode(tape, full, params.decoder_blocks, cfg.decoder_config());
    const Tensor pred = add_row_vector(tape, matmul(tape, decoded, params.pixel_head_w), params.pixel_head_b);

    return MaeForwardResult{pred, plan};
}

MaeForwardResult mae_forward(Tape& tape, const Tensor& image, const MaeParams& params, const MaeConfig& cfg,
                             Rng& rng, MaeTrace* trace) {
    const MaskPlan plan = random_mask(cfg.patch_count(), cfg.mask_ratio, rng);
    return mae_forward_with_plan(tape, image, params, cfg, plan, trace);
}

namespace {

Tensor normalize_target_rows(const Tensor& target) {
    const int n = target.rows(), l = target.cols();
    Tensor out({n, l});
    constexpr Real eps = Real(1e-6);
    for (int i = 0; i < n; ++i) {
        Real mean = 0;
        for (int j = 0; j < l; ++j) mean += target.at(i, j);
        mean /= l;
        Real var = 0;
        for (int j = 0; j < l; ++j) {
            const Real c = target.at(i, j) - mean;
            var += c * c;
        }
        var /= l;
        const Real inv = Real(1) / std::sqrt(var + eps);
        for (int j = 0; j < l; ++j) out.at(i, j) = (target.at(i, j) - mean) * inv;
    }
    return out;
}

}  // namespace

Tensor reconstruction_loss(Tape& tape, const Tensor& pred, const Tensor& target_patches,
                           const MaskPlan& plan, const MaeConfig& cfg) {
    if (pred.ndim() != 2 || target_patches.ndim() != 2 || pred.shape() != target_patches.shape())
        throw ValidationError("reconstruction_loss: shape mismatch: " + pred.shape_str() + " vs " +
                              target_patches.shape_str());

    const Tensor target =
        cfg.target_norm == TargetNorm::PerPatch ? normalize_target_rows(target_patches) : target_patches;

    Tensor p = pred, t = target.detached();
    if (cfg.loss_scope == LossScope::MaskedOnly) {
        if (plan.masked_idx.empty())
            throw ValidationError("reconstruction_loss: masked-only scope with an empty masked set");
        p = take_rows(tape, pred, plan.masked_idx);
        t = take_rows(tape, t, plan.masked_idx);
    }
    const Tensor diff = sub(tape, p, t);
    const Tensor sq = mul(tape, diff, diff);
    return scale(tape, sum(tape, sq), Real(1) / static_cast<Real>(p.numel()));
}

Tensor reconstruct_image(const Tensor& pred_patches, const MaskPlan& plan, const PatchSet& original,
                         ReconstructMode mode) {
    if (pred_patches.ndim() != 2 || pred_patches.shape() != original.patches.shape())
        throw ValidationError("reconstruct_image: predictions " + pred_patches.shape_str() +
                              " do not match patch set " + original.patches.shape_str());
    PatchSet out = original;
    out.patches = pred_patches.detached();
    if (mode == ReconstructMode::PasteVisible) {
        const int l = original.patches.cols();
        for (int idx : plan.visible_idx)
            for (int j = 0; j < l; ++j) out.patches.at(idx, j) = original.patches.at(idx, j);
    }
    return unpatchify(out);
}

}  // namespace maeforge
