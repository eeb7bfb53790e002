#pragma once

#include <vector>

#include "maeforge/rng.hpp"
#include "maeforge/tensor.hpp"

namespace maeforge {

// Flattened non-overlapping patches of one image, row-major over the patch
// grid; each patch is flattened pixel-major, channel-minor.
struct PatchSet {
    Tensor patches;  // N x (p*p*c)
    int grid_rows = 0;
    int grid_cols = 0;
    int patch = 0;
    int channels = 0;

    int count() const { return grid_rows * grid_cols; }
};

// Visible/masked split of patch indices plus the bookkeeping needed to put
// a (visible ++ masked) token sequence back into original patch order.
struct MaskPlan {
    std::vector<int> visible_idx;   // sorted
    std::vector<int> masked_idx;    // sorted
    std::vector<int> restore_perm;  // concat[restore_perm[j]] is original slot j
    double ratio = 0.0;

    int total() const { return static_cast<int>(visible_idx.size() + masked_idx.size()); }
};

struct PosEncoding {
    Tensor table;  // N x d, fixed, every entry in [-1, 1]
};

Tensor patch_grid_image(int h, int w, int c);  // zeros helper for tests

PatchSet patchify(const Tensor& image, int patch);
Tensor unpatchify(const PatchSet& ps);

// Fixed 2-d sine-cosine table: first half of d encodes the row coordinate,
// second half the column, sine/cosine interleaved within each half.
// Requires d divisible by 4.
PosEncoding sincos_pos_encoding(int grid_rows, int grid_cols, int d);

// Uniform sample without replacement of round(r*n) masked indices
// (round half-up). Deterministic under the rng seed.
MaskPlan random_mask(int n, double ratio, Rng& rng);

// Plan with nothing masked (used where ratio rounds to zero).
MaskPlan full_visible_plan(int n);

}  // namespace maeforge
