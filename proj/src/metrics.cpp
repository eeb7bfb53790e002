#include "maeforge/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace maeforge {

void EvalBatch::validate() const {
    if (scores.empty()) throw ValidationError("eval batch: empty");
    if (scores.size() != labels.size())
        throw ValidationError("eval batch: " + std::to_string(scores.size()) + " scores vs " +
                              std::to_string(labels.size()) + " labels");
    for (double s : scores)
        if (!(s >= 0.0 && s <= 1.0))
            throw ValidationError("eval batch: score " + std::to_string(s) + " outside [0, 1]");
    for (int l : labels)
        if (l != 0 && l != 1) throw ValidationError("eval batch: label " + std::to_string(l) + " not in {0, 1}");
}

double accuracy(const EvalBatch& b, double threshold) {
    b.validate();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < b.scores.size(); ++i) {
        const int pred = b.scores[i] >= threshold ? 1 : 0;
        if (pred == b.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(b.scores.size());
}

double f1(const EvalBatch& b, double threshold) {
    b.validate();
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < b.scores.size(); ++i) {
        const int pred = b.scores[i] >= threshold ? 1 : 0;
        if (pred == 1 && b.labels[i] == 1) ++tp;
        if (pred == 1 && b.labels[i] == 0) ++fp;
        if (pred == 0 && b.labels[i] == 1) ++fn;
    }
    if (tp + fp + fn == 0) return 0.0;  // documented degenerate convention
    if (tp == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

double auc(const EvalBatch& b) {
    b.validate();
    const std::size_t n = b.scores.size();
    std::size_t npos = 0;
    for (int l : b.labels) npos += static_cast<std::size_t>(l);
    const std::size_t nneg = n - npos;
    if (npos == 0 || nneg == 0)
        throw ValidationError("auc: undefined for a single-class batch");

    // average ranks (1-based) with ties sharing their mean rank
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t c) { return b.scores[a] < b.scores[c]; });

    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && b.scores[order[j + 1]] == b.scores[order[i]]) ++j;
        const double mean_rank = 0.5 * static_cast<double>(i + 1 + j + 1);  // halves are exact
        for (std::size_t k = i; k <= j; ++k)
            if (b.labels[order[k]] == 1) pos_rank_sum += mean_rank;
        i = j + 1;
    }

    const double u = pos_rank_sum - 0.5 * static_cast<double>(npos) * static_cast<double>(npos + 1);
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

}  // namespace maeforge
