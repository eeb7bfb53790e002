#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace maeforge {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;
    double max_rel_err = 0.0;
    double seconds = 0.0;

    bool passed(double tol = 1e-4) const { return max_rel_err <= tol; }
};

// Compares reverse-mode gradients against central finite differences for
// every differentiable op, a full transformer block, an encoder+classifier
// cross-entropy model, and the end-to-end MAE reconstruction loss.
// Always runs in the build's precision; the 1e-4 acceptance bound assumes
// the 64-bit build.
GradCheckReport run_gradcheck(std::uint64_t seed = 7);

}  // namespace maeforge
