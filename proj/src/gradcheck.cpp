#include "maeforge/gradcheck.hpp"

#include <chrono>
#include <functional>

#include "maeforge/mae.hpp"
#include "maeforge/params.hpp"
#include "maeforge/patcher.hpp"
#include "maeforge/rng.hpp"
#include "maeforge/tensor.hpp"
#include "maeforge/vit.hpp"

namespace maeforge {

namespace {

Tensor randu(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape), true);
    for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(lo, hi));
    return t;
}

// constant weighting so op outputs reduce to a scalar with generic gradients
Tensor rand_weights(const std::vector<int>& shape, Rng& rng) {
    Tensor t(shape);
    for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0));
    return t;
}

struct CheckSpec {
    std::string name;
    std::vector<Tensor> params;
    std::function<Tensor(Tape&)> loss;
};

double run_case(const CheckSpec& spec) {
    // reverse-mode gradients
    for (const auto& p : spec.params) p.zero_grad();
    Tape tape;
    const Tensor loss = spec.loss(tape);
    tape.backward(loss);

    double worst = 0.0;
    for (const auto& p : spec.params) {
        const std::vector<Real> ad = p.grad();
        const std::vector<Real> saved = p.values();
        const Tensor fd = finite_diff_grad(
            [&](const Tensor& candidate) {
                p.values() = candidate.values();
                Tape silent(false);
                return spec.loss(silent).item();
            },
            p);
        p.values() = saved;
        worst = std::max(worst, static_cast<double>(max_relative_error(ad, fd.values())));
    }
    return worst;
}

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const Rng base(seed);
    GradCheckReport report;
    std::vector<CheckSpec> specs;

    {
        Rng rng = base.fork(1);
        Tensor a = randu({3, 4}, rng), b = randu({4, 2}, rng);
        const Tensor r = rand_weights({3, 2}, rng);
        specs.push_back({"matmul", {a, b},
                         [=](Tape& t) { return sum(t, mul(t, matmul(t, a, b), r)); }});
    }
    {
        Rng rng = base.fork(2);
        Tensor x = randu({3, 5}, rng);
        const Tensor r = rand_weights({5, 3}, rng);
        specs.push_back({"transpose", {x}, [=](Tape& t) { return sum(t, mul(t, transpose(t, x), r)); }});
    }
    {
        Rng rng = base.fork(3);
        Tensor a = randu({4, 3}, rng), b = randu({4, 3}, rng);
        const Tensor r = rand_weights({4, 3}, rng);
        specs.push_back({"add", {a, b}, [=](Tape& t) { return sum(t, mul(t, add(t, a, b), r)); }});
        specs.push_back({"sub", {a, b}, [=](Tape& t) { return sum(t, mul(t, sub(t, a, b), r)); }});
        specs.push_back({"mul", {a, b}, [=](Tape& t) { return sum(t, mul(t, mul(t, a, b), r)); }});
        specs.push_back({"scale", {a}, [=](Tape& t) { return sum(t, mul(t, scale(t, a, Real(0.37)), r)); }});
        specs.push_back({"sum", {a}, [=](Tape& t) { return sum(t, a); }});
    }
    {
        Rng rng = base.fork(4);
        Tensor a = randu({5, 4}, rng), v = randu({4}, rng);
        const Tensor r = rand_weights({5, 4}, rng);
        specs.push_back(
            {"add_row_vector", {a, v}, [=](Tape& t) { return sum(t, mul(t, add_row_vector(t, a, v), r)); }});
    }
    {
        Rng rng = base.fork(5);
        Tensor x = randu({4, 6}, rng, -3.0, 3.0);
        const Tensor r = rand_weights({4, 6}, rng);
        specs.push_back(
            {"softmax_rows", {x}, [=](Tape& t) { return sum(t, mul(t, softmax_rows(t, x), r)); }});
        specs.push_back({"gelu", {x}, [=](Tape& t) { return sum(t, mul(t, gelu(t, x), r)); }});
    }
    {
        Rng rng = base.fork(6);
        Tensor x = randu({3, 6}, rng), g = randu({6}, rng, 0.5, 1.5), b = randu({6}, rng);
        const Tensor r = rand_weights({3, 6}, rng);
        specs.push_back({"layer_norm", {x, g, b},
                         [=](Tape& t) { return sum(t, mul(t, layer_norm(t, x, g, b), r)); }});
    }
    {
        Rng rng = base.fork(7);
        Tensor x = randu({6, 4}, rng);
        const Tensor r3 = rand_weights({3, 4}, rng);
        const Tensor r1 = rand_weights({4}, rng);
        const std::vector<int> idx{5, 0, 3};
        specs.push_back(
            {"take_rows", {x}, [=](Tape& t) { return sum(t, mul(t, take_rows(t, x, idx), r3)); }});
        specs.push_back({"row", {x}, [=](Tape& t) { return sum(t, mul(t, row(t, x, 2), r1)); }});
        specs.push_back({"mean_rows", {x}, [=](Tape& t) { return sum(t, mul(t, mean_rows(t, x), r1)); }});
    }
    {
        Rng rng = base.fork(8);
        Tensor r0 = randu({4}, rng), x = randu({3, 4}, rng);
        const Tensor r = rand_weights({4, 4}, rng);
        specs.push_back(
            {"prepend_row", {r0, x}, [=](Tape& t) { return sum(t, mul(t, prepend_row(t, r0, x), r)); }});
    }
    {
        Rng rng = base.fork(9);
        Tensor x = randu({3, 8}, rng);
        const Tensor r = rand_weights({3, 4}, rng);
        const Tensor rw = rand_weights({3, 8}, rng);
        specs.push_back(
            {"slice_cols", {x}, [=](Tape& t) { return sum(t, mul(t, slice_cols(t, x, 2, 4), r)); }});
        specs.push_back({"concat_cols", {x}, [=](Tape& t) {
                             const Tensor left = slice_cols(t, x, 0, 3);
                             const Tensor right = slice_cols(t, x, 3, 5);
                             return sum(t, mul(t, concat_cols(t, {left, right}), rw));
                         }});
    }
    {
        Rng rng = base.fork(10);
        Tensor rows = randu({3, 4}, rng), fill = randu({4}, rng);
        const Tensor r = rand_weights({6, 4}, rng);
        const std::vector<int> pos{1, 4, 2};
        specs.push_back({"assemble_rows", {rows, fill}, [=](Tape& t) {
                             return sum(t, mul(t, assemble_rows(t, rows, fill, pos, 6), r));
                         }});
    }
    {
        Rng rng = base.fork(11);
        Tensor logits = randu({3, 4}, rng, -2.0, 2.0);
        const std::vector<int> labels{1, 3, 0};
        specs.push_back({"softmax_cross_entropy", {logits},
                         [=](Tape& t) { return softmax_cross_entropy(t, logits, labels); }});
    }
    {
        // spec'd oracle case: random 2-layer MLP
        Rng rng = base.fork(12);
        Tensor x = randu({2, 6}, rng);
        Tensor w1 = randu({6, 8}, rng), b1 = randu({8}, rng);
        Tensor w2 = randu({8, 3}, rng), b2 = randu({3}, rng);
        const Tensor r = rand_weights({2, 3}, rng);
        specs.push_back({"mlp-2layer", {x, w1, b1, w2, b2}, [=](Tape& t) {
                             const Tensor h = gelu(t, add_row_vector(t, matmul(t, x, w1), b1));
                             const Tensor o = add_row_vector(t, matmul(t, h, w2), b2);
                             return sum(t, mul(t, o, r));
                         }});
    }
    {
        // full transformer block, Eqs 1-5 shape
        Rng rng = base.fork(13);
        const EncoderConfig cfg(1, 8, 2);
        const BlockParams bp = make_block_params(cfg.width, cfg.ffn_mult, rng);
        Tensor x = randu({4, 8}, rng);
        const Tensor r = rand_weights({4, 8}, rng);
        std::vector<Tensor> params{x,          bp.wq,     bp.wk,     bp.wv,     bp.wo,
                                   bp.ln1_gamma, bp.ln1_beta, bp.ffn_w1, bp.ffn_b1, bp.ffn_w2,
                                   bp.ffn_b2,  bp.ln2_gamma, bp.ln2_beta};
        specs.push_back({"vit-block", params, [=](Tape& t) {
                             const Tensor a = attention_block(t, x, bp, cfg);
                             return sum(t, mul(t, ffn_block(t, a, bp, cfg), r));
                         }});
    }
    {
        // encode + classify + cross-entropy at the spec'd (T=5, d=8, depth=2, heads=2) scale
        Rng rng = base.fork(14);
        const EncoderConfig cfg(2, 8, 2);
        std::vector<BlockParams> blocks{make_block_params(8, cfg.ffn_mult, rng),
                                        make_block_params(8, cfg.ffn_mult, rng)};
        const HeadParams head = make_head_params(8, 2, rng);
        Tensor x = randu({4, 8}, rng);  // 4 patch tokens + the class token = T=5
        std::vector<Tensor> params{x, head.cls_token, head.weight, head.bias};
        for (const auto& b : blocks)
            for (const auto& p : {b.wq, b.wk, b.wv, b.wo, b.ln1_gamma, b.ln1_beta, b.ffn_w1, b.ffn_b1,
                                  b.ffn_w2, b.ffn_b2, b.ln2_gamma, b.ln2_beta})
                params.push_back(p);
        specs.push_back({"encoder-classify-ce", params, [=](Tape& t) {
                             const Tensor tokens = prepend_row(t, head.cls_token, x);
                             const Tensor enc = encode(t, tokens, blocks, cfg);
                             const Tensor logits = classify(t, enc, head, cfg, true);
                             return softmax_cross_entropy(t, logits, {1});
                         }});
    }
    {
        // end-to-end MAE reconstruction loss: 16x16 image, p=4, widths 8/8, depths 1/1
        Rng rng = base.fork(15);
        const MaeConfig cfg(EncoderConfig(1, 8, 2), 1, 8, 2, 0.75, 4, 16, 1);
        const MaeParams mp = make_mae_params(cfg, rng);
        Tensor image({16, 16, 1});
        for (auto& v : image.values()) v = static_cast<Real>(rng.uniform(0.0, 1.0));
        Rng mask_rng = rng.fork(99);
        const MaskPlan plan = random_mask(cfg.patch_count(), cfg.mask_ratio, mask_rng);
        const PatchSet target = patchify(image, cfg.patch);
        specs.push_back({"mae-loss", tensors_of(named_tensors(mp)), [=](Tape& t) {
                             const MaeForwardResult fwd = mae_forward_with_plan(t, image, mp, cfg, plan);
                             return reconstruction_loss(t, fwd.pred_patches, target.patches, fwd.plan, cfg);
                         }});
    }

    for (auto& spec : specs) {
        GradCheckCase c;
        c.name = spec.name;
        c.max_rel_err = run_case(spec);
        report.max_rel_err = std::max(report.max_rel_err, c.max_rel_err);
        report.cases.push_back(std::move(c));
    }

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace maeforge
