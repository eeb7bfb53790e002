#include "maeforge/patcher.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace maeforge {

Tensor patch_grid_image(int h, int w, int c) { return Tensor({h, w, c}); }

PatchSet patchify(const Tensor& image, int patch) {
    if (image.ndim() != 3)
        throw ValidationError("patchify: expected an h x w x c image, got " + image.shape_str());
    const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (patch <= 0 || h % patch != 0 || w % patch != 0)
        throw ValidationError("patchify: image " + std::to_string(h) + "x" + std::to_string(w) +
                              " is not divisible into " + std::to_string(patch) + "x" + std::to_string(patch) +
                              " patches");
    const int gr = h / patch, gc = w / patch;
    const int plen = patch * patch * c;

    PatchSet ps;
    ps.grid_rows = gr;
    ps.grid_cols = gc;
    ps.patch = patch;
    ps.channels = c;
    ps.patches = Tensor({gr * gc, plen});

    for (int gy = 0; gy < gr; ++gy) {
        for (int gx = 0; gx < gc; ++gx) {
            const int n = gy * gc + gx;
            int k = 0;
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px)
                    for (int ch = 0; ch < c; ++ch)
                        ps.patches.at(n, k++) = image.at(gy * patch + py, gx * patch + px, ch);
        }
    }
    return ps;
}

Tensor unpatchify(const PatchSet& ps) {
    const int p = ps.patch, c = ps.channels;
    const int h = ps.grid_rows * p, w = ps.grid_cols * p;
    if (!ps.patches.defined() || ps.patches.ndim() != 2 || ps.patches.rows() != ps.count() ||
        ps.patches.cols() != p * p * c)
        throw ValidationError("unpatchify: malformed patch set");

    Tensor image({h, w, c});
    for (int gy = 0; gy < ps.grid_rows; ++gy) {
        for (int gx = 0; gx < ps.grid_cols; ++gx) {
            const int n = gy * ps.grid_cols + gx;
            int k = 0;
            for (int py = 0; py < p; ++py)
                for (int px = 0; px < p; ++px)
                    for (int ch = 0; ch < c; ++ch)
                        image.at(gy * p + py, gx * p + px, ch) = ps.patches.at(n, k++);
        }
    }
    return image;
}

PosEncoding sincos_pos_encoding(int grid_rows, int grid_cols, int d) {
    if (grid_rows <= 0 || grid_cols <= 0)
        throw ValidationError("sincos_pos_encoding: empty grid");
    if (d <= 0 || d % 4 != 0)
        throw ValidationError("sincos_pos_encoding: width " + std::to_string(d) + " must be divisible by 4");

    const int half = d / 2;     // features per coordinate
    const int pairs = half / 2; // sine/cosine pairs per coordinate
    std::vector<double> omega(static_cast<std::size_t>(pairs));
    for (int i = 0; i < pairs; ++i)
        omega[static_cast<std::size_t>(i)] = std::pow(10000.0, -static_cast<double>(i) / pairs);

    PosEncoding pe;
    pe.table = Tensor({grid_rows * grid_cols, d});
    for (int gy = 0; gy < grid_rows; ++gy) {
        for (int gx = 0; gx < grid_cols; ++gx) {
            const int n = gy * grid_cols + gx;
            for (int i = 0; i < pairs; ++i) {
                const double wy = gy * omega[static_cast<std::size_t>(i)];
                const double wx = gx * omega[static_cast<std::size_t>(i)];
                pe.table.at(n, 2 * i) = static_cast<Real>(std::sin(wy));
                pe.table.at(n, 2 * i + 1) = static_cast<Real>(std::cos(wy));
                pe.table.at(n, half + 2 * i) = static_cast<Real>(std::sin(wx));
                pe.table.at(n, half + 2 * i + 1) = static_cast<Real>(std::cos(wx));
            }
        }
    }
    return pe;
}

namespace {

MaskPlan plan_from_masked_flags(const std::vector<char>& masked, double ratio) {
    MaskPlan plan;
    plan.ratio = ratio;
    const int n = static_cast<int>(masked.size());
    for (int i = 0; i < n; ++i)
        (masked[static_cast<std::size_t>(i)] ? plan.masked_idx : plan.visible_idx).push_back(i);

    // concat order is (visible ++ masked); restore_perm[j] locates original
    // patch j inside that concatenation.
    plan.restore_perm.assign(static_cast<std::size_t>(n), -1);
    int slot = 0;
    for (int idx : plan.visible_idx) plan.restore_perm[static_cast<std::size_t>(idx)] = slot++;
    for (int idx : plan.masked_idx) plan.restore_perm[static_cast<std::size_t>(idx)] = slot++;
    return plan;
}

}  // namespace

MaskPlan random_mask(int n, double ratio, Rng& rng) {
    if (n < 1) throw ValidationError("random_mask: need at least one patch");
    if (ratio < 0.0 || ratio >= 1.0)
        throw ValidationError("random_mask: ratio " + std::to_string(ratio) + " outside [0, 1)");

    const int m = static_cast<int>(std::floor(ratio * n + 0.5));  // round half-up
    const std::vector<int> perm = rng.permutation(n);
    std::vector<char> masked(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < m; ++i) masked[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = 1;
    return plan_from_masked_flags(masked, ratio);
}

MaskPlan full_visible_plan(int n) {
    if (n < 1) throw ValidationError("full_visible_plan: need at least one patch");
    return plan_from_masked_flags(std::vector<char>(static_cast<std::size_t>(n), 0), 0.0);
}

}  // namespace maeforge
