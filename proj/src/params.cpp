#include "maeforge/params.hpp"

namespace maeforge {

namespace {

void append_block(std::vector<NamedTensor>& out, const std::string& prefix, const BlockParams& b) {
    out.push_back({prefix + ".wq", b.wq});
    out.push_back({prefix + ".wk", b.wk});
    out.push_back({prefix + ".wv", b.wv});
    out.push_back({prefix + ".wo", b.wo});
    out.push_back({prefix + ".ln1.gamma", b.ln1_gamma});
    out.push_back({prefix + ".ln1.beta", b.ln1_beta});
    out.push_back({prefix + ".ffn.w1", b.ffn_w1});
    out.push_back({prefix + ".ffn.b1", b.ffn_b1});
    out.push_back({prefix + ".ffn.w2", b.ffn_w2});
    out.push_back({prefix + ".ffn.b2", b.ffn_b2});
    out.push_back({prefix + ".ln2.gamma", b.ln2_gamma});
    out.push_back({prefix + ".ln2.beta", b.ln2_beta});
}

}  // namespace

std::vector<NamedTensor> named_tensors(const EncoderParams& p) {
    std::vector<NamedTensor> out;
    out.push_back({"patch_embed.weight", p.patch_embed_w});
    out.push_back({"patch_embed.bias", p.patch_embed_b});
    for (std::size_t i = 0; i < p.blocks.size(); ++i)
        append_block(out, "encoder.block" + std::to_string(i), p.blocks[i]);
    return out;
}

std::vector<NamedTensor> named_tensors(const MaeParams& p) {
    std::vector<NamedTensor> out = named_tensors(p.encoder);
    out.push_back({"adapter.weight", p.adapter});
    out.push_back({"mask_token", p.mask_token});
    for (std::size_t i = 0; i < p.decoder_blocks.size(); ++i)
        append_block(out, "decoder.block" + std::to_string(i), p.decoder_blocks[i]);
    out.push_back({"pixel_head.weight", p.pixel_head_w});
    out.push_back({"pixel_head.bias", p.pixel_head_b});
    return out;
}

std::vector<NamedTensor> named_tensors(const ClassifierParams& p) {
    std::vector<NamedTensor> out = named_tensors(p.encoder);
    out.push_back({"head.cls_token", p.head.cls_token});
    out.push_back({"head.weight", p.head.weight});
    out.push_back({"head.bias", p.head.bias});
    return out;
}

bool is_encoder_tensor_name(const std::string& name) {
    return name.rfind("patch_embed.", 0) == 0 || name.rfind("encoder.", 0) == 0;
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& nt : named) out.push_back(nt.tensor);
    return out;
}

}  // namespace maeforge
