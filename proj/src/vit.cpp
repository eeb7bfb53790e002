#include "maeforge/vit.hpp"

#include <cmath>
#include <string>

namespace maeforge {

namespace {

// Xavier/Glorot uniform.
Tensor glorot(int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor w({fan_in, fan_out}, true);
    for (auto& v : w.values()) v = static_cast<Real>(rng.uniform(-limit, limit));
    return w;
}

Tensor small_normal(int d, Rng& rng) {
    Tensor t({d}, true);
    for (auto& v : t.values()) v = static_cast<Real>(rng.normal(0.0, 0.02));
    return t;
}

}  // namespace

EncoderConfig::EncoderConfig(int depth_, int width_, int heads_, int ffn_mult_, NormStyle norm_style_,
                             Pool pool_)
    : depth(depth_), width(width_), heads(heads_), ffn_mult(ffn_mult_), norm_style(norm_style_), pool(pool_) {
    if (depth < 1) throw ValidationError("encoder config: depth must be >= 1, got " + std::to_string(depth));
    if (heads < 1) throw ValidationError("encoder config: heads must be >= 1");
    if (width < 4 || width % heads != 0)
        throw ValidationError("encoder config: width " + std::to_string(width) + " not divisible by " +
                              std::to_string(heads) + " heads");
    if (width % 4 != 0)
        throw ValidationError("encoder config: width " + std::to_string(width) + " must be divisible by 4");
    if (ffn_mult < 1) throw ValidationError("encoder config: ffn_mult must be >= 1");
}

BlockParams make_block_params(int width, int ffn_mult, Rng& rng) {
    BlockParams p;
    p.wq = glorot(width, width, rng);
    p.wk = glorot(width, width, rng);
    p.wv = glorot(width, width, rng);
    p.wo = glorot(width, width, rng);
    p.ln1_gamma = Tensor::full({width}, Real(1), true);
    p.ln1_beta = Tensor({width}, true);
    p.ffn_w1 = glorot(width, ffn_mult * width, rng);
    p.ffn_b1 = Tensor({ffn_mult * width}, true);
    p.ffn_w2 = glorot(ffn_mult * width, width, rng);
    p.ffn_b2 = Tensor({width}, true);
    p.ln2_gamma = Tensor::full({width}, Real(1), true);
    p.ln2_beta = Tensor({width}, true);
    return p;
}

HeadParams make_head_params(int width, int n_classes, Rng& rng) {
    if (n_classes < 2) throw ValidationError("head: n_classes must be >= 2");
    HeadParams h;
    h.cls_token = small_normal(width, rng);
    h.weight = glorot(width, n_classes, rng);
    h.bias = Tensor({n_classes}, true);
    return h;
}

Tensor attention_block(Tape& tape, const Tensor& x, const BlockParams& params, const EncoderConfig& cfg,
                       AttentionTrace* trace) {
    if (x.ndim() != 2 || x.cols() != cfg.width)
        throw ValidationError("attention_block: tokens " + x.shape_str() + " do not match width " +
                              std::to_string(cfg.width));

    const Tensor in = cfg.norm_style == NormStyle::Pre
                          ? layer_norm(tape, x, params.ln1_gamma, params.ln1_beta)
                          : x;

    const Tensor q = matmul(tape, in, params.wq);
    const Tensor k = matmul(tape, in, params.wk);
    const Tensor v = matmul(tape, in, params.wv);

    const int dk = cfg.head_dim();
    const Real inv_sqrt_dk = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dk)));

    std::vector<Tensor> head_out;
    head_out.reserve(static_cast<std::size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        const Tensor qh = slice_cols(tape, q, h * dk, dk);
        const Tensor kh = slice_cols(tape, k, h * dk, dk);
        const Tensor vh = slice_cols(tape, v, h * dk, dk);
        const Tensor logits = scale(tape, matmul(tape, qh, transpose(tape, kh)), inv_sqrt_dk);
        const Tensor weights = softmax_rows(tape, logits);
        if (trace) trace->head_weights.push_back(weights);
        head_out.push_back(matmul(tape, weights, vh));
    }

    const Tensor merged = cfg.heads == 1 ? head_out[0] : concat_cols(tape, head_out);
    const Tensor proj = matmul(tape, merged, params.wo);

    if (cfg.norm_style == NormStyle::Pre) return add(tape, x, proj);
    return layer_norm(tape, add(tape, proj, x), params.ln1_gamma, params.ln1_beta);
}

Tensor ffn_block(Tape& tape, const Tensor& x, const BlockParams& params, const EncoderConfig& cfg) {
    if (x.ndim() != 2 || x.cols() != cfg.width)
        throw ValidationError("ffn_block: tokens " + x.shape_str() + " do not match width " +
                              std::to_string(cfg.width));

    const Tensor in = cfg.norm_style == NormStyle::Pre
                          ? layer_norm(tape, x, params.ln2_gamma, params.ln2_beta)
                          : x;

    const Tensor hidden = gelu(tape, add_row_vector(tape, matmul(tape, in, params.ffn_w1), params.ffn_b1));
    const Tensor out = add_row_vector(tape, matmul(tape, hidden, params.ffn_w2), params.ffn_b2);

    if (cfg.norm_style == NormStyle::Pre) return add(tape, x, out);
    return layer_norm(tape, add(tape, out, x), params.ln2_gamma, params.ln2_beta);
}

Tensor encode(Tape& tape, const Tensor& tokens, const std::vector<BlockParams>& params,
              const EncoderConfig& cfg, std::vector<AttentionTrace>* traces) {
    if (static_cast<int>(params.size()) != cfg.depth)
        throw ValidationError("encode: " + std::to_string(params.size()) + " blocks for depth " +
                              std::to_string(cfg.depth));
    Tensor x = tokens;
    for (const auto& block : params) {
        AttentionTrace* tr = nullptr;
        if (traces) {
            traces->emplace_back();
            tr = &traces->back();
        }
        x = attention_block(tape, x, block, cfg, tr);
        x = ffn_block(tape, x, block, cfg);
    }
    return x;
}

Tensor classify(Tape& tape, const Tensor& tokens, const HeadParams& head, const EncoderConfig& cfg,
                bool cls_prepended) {
    if (tokens.ndim() != 2 || tokens.cols() != cfg.width)
        throw ValidationError("classify: tokens " + tokens.shape_str() + " do not match width " +
                              std::to_string(cfg.width));
    Tensor pooled;
    if (cfg.pool == Pool::ClsToken) {
        if (!cls_prepended)
            throw ValidationError("classify: cls-token pooling requested but no class token was prepended");
        pooled = row(tape, tokens, 0);
    } else {
        pooled = mean_rows(tape, tokens);
    }
    // logits_j = sum_i pooled_i * W_ij + b_j
    const int d = cfg.width, n = head.n_classes();
    Tensor logits({n}, tape.recording() && (pooled.requires_grad() || head.weight.requires_grad() ||
                                            head.bias.requires_grad()));
    for (int j = 0; j < n; ++j) {
        Real acc = head.bias.at(j);
        for (int i = 0; i < d; ++i) acc += pooled.at(i) * head.weight.at(i, j);
        logits.at(j) = acc;
    }
    if (logits.requires_grad()) {
        const Tensor w = head.weight, b = head.bias, p = pooled, out = logits;
        tape.record("linear_head", [p, w, b, out, d, n]() {
            for (int j = 0; j < n; ++j) {
                const Real g = out.grad()[static_cast<std::size_t>(j)];
                if (b.requires_grad()) b.grad()[static_cast<std::size_t>(j)] += g;
                for (int i = 0; i < d; ++i) {
                    if (w.requires_grad()) w.grad()[static_cast<std::size_t>(i) * n + j] += p.at(i) * g;
                    if (p.requires_grad()) p.grad()[static_cast<std::size_t>(i)] += w.at(i, j) * g;
                }
            }
        });
    }
    return logits;
}

}  // namespace maeforge
