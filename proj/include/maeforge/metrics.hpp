#pragma once

#include <vector>

#include "maeforge/common.hpp"

namespace maeforge {

// Binary evaluation batch: positive-class probabilities and {0,1} labels.
struct EvalBatch {
    std::vector<double> scores;
    std::vector<int> labels;

    void validate() const;
};

// Fraction of (score >= threshold) == label.
double accuracy(const EvalBatch& b, double threshold = 0.5);

// Positive-class F1 = 2PR/(P+R); 0 by convention when the confusion matrix
// degenerates (no true positives and nothing predicted or labeled positive).
double f1(const EvalBatch& b, double threshold = 0.5);

// Probability a random positive outscores a random negative, ties at half
// credit; computed by rank statistics (Mann-Whitney). Errors when only one
// class is present.
double auc(const EvalBatch& b);

}  // namespace maeforge
