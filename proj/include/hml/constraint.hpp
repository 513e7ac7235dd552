#pragma once

#include "hml/hierarchy.hpp"
#include "hml/types.hpp"

namespace hml {

// Subtree-max projection: out[i] = max over subtree(i) of scores[j]. Applied
// to probabilities this is the coherent-output projection; applied to logits
// it commutes with the sigmoid, so either order gives the same predictions.
Vector constrain(const DescendantMatrix& dm, const Vector& scores);

// Row-wise batch version.
Matrix constrain_rows(const DescendantMatrix& dm, const Matrix& scores);

// Strictly-above-threshold bits; at exactly 0.5 everywhere the result is the
// null prediction.
BitVec binarize(const Vector& probs, double threshold = 0.5);
BitMatrix binarize_rows(const Matrix& probs, double threshold = 0.5);

}  // namespace hml
