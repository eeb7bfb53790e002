#pragma once

#include <string>
#include <vector>

#include "maeforge/rng.hpp"
#include "maeforge/tensor.hpp"

namespace maeforge {

enum class NormStyle { Post, Pre };
enum class Pool { ClsToken, MeanToken };

// Transformer encoder shape. Validated at construction: depth >= 1, width
// divisible by the head count and by 4 (positional-encoding layout).
struct EncoderConfig {
    int depth;
    int width;
    int heads;
    int ffn_mult;
    NormStyle norm_style;
    Pool pool;

    EncoderConfig(int depth_, int width_, int heads_, int ffn_mult_ = 4,
                  NormStyle norm_style_ = NormStyle::Post, Pool pool_ = Pool::ClsToken);

    int head_dim() const { return width / heads; }
};

// One transformer block: QKV projections (no biases), output projection,
// post-attention LayerNorm, two-layer FFN with biases, post-FFN LayerNorm.
struct BlockParams {
    Tensor wq, wk, wv, wo;        // d x d
    Tensor ln1_gamma, ln1_beta;   // d
    Tensor ffn_w1, ffn_b1;        // d x (mult*d), (mult*d)
    Tensor ffn_w2, ffn_b2;        // (mult*d) x d, d
    Tensor ln2_gamma, ln2_beta;   // d
};

BlockParams make_block_params(int width, int ffn_mult, Rng& rng);

// Classification head: learned class-token embedding plus a linear map.
struct HeadParams {
    Tensor cls_token;  // d
    Tensor weight;     // d x n_classes
    Tensor bias;       // n_classes

    int n_classes() const { return bias.dim(0); }
};

HeadParams make_head_params(int width, int n_classes, Rng& rng);

// Per-head post-softmax attention weights of one block, for inspection.
struct AttentionTrace {
    std::vector<Tensor> head_weights;  // each T x T
};

// Multi-head self-attention with residual; post-norm computes
// LN(proj(attention) + x). x must already carry positional information.
Tensor attention_block(Tape& tape, const Tensor& x, const BlockParams& params,
                       const EncoderConfig& cfg, AttentionTrace* trace = nullptr);

// Position-wise FFN with residual: post-norm computes LN(ffn(x) + x).
Tensor ffn_block(Tape& tape, const Tensor& x, const BlockParams& params, const EncoderConfig& cfg);

// depth sequential applications of attention_block then ffn_block.
Tensor encode(Tape& tape, const Tensor& tokens, const std::vector<BlockParams>& params,
              const EncoderConfig& cfg, std::vector<AttentionTrace>* traces = nullptr);

// Pools the encoded tokens (class token or token mean) and applies the
// classifier. cls_prepended reports whether the caller prepended the class
// token before encoding; required for Pool::ClsToken.
Tensor classify(Tape& tape, const Tensor& tokens, const HeadParams& head, const EncoderConfig& cfg,
                bool cls_prepended);

}  // namespace maeforge
