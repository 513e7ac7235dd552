#include "hml/constraint.hpp"

#include "hml/errors.hpp"

namespace hml {

namespace {

// Visits node i's direct children by jumping over grandchild ranges:
// the first child is i+1 and each next child starts where the previous
// child's subtree ends.
template <typename F>
void for_each_child(const DescendantMatrix& dm, int i, F&& f) {
    for (int j = i + 1; j < dm.subtree_end(i); j = dm.subtree_end(j)) f(j);
}

}  // namespace

Vector constrain(const DescendantMatrix& dm, const Vector& scores) {
    if (scores.size() != dm.size())
        fail("dimension-mismatch", "score vector length does not match hierarchy size");
    Vector out(scores.size());
    // Reverse index order: children have higher indices, so out[child] is
    // final before the parent reads it.
    for (int i = dm.size() - 1; i >= 0; --i) {
        double m = scores[i];
        for_each_child(dm, i, [&](int c) { m = std::max(m, out[c]); });
        out[i] = m;
    }
    return out;
}

Matrix constrain_rows(const DescendantMatrix& dm, const Matrix& scores) {
    if (scores.cols() != dm.size())
        fail("dimension-mismatch", "score matrix width does not match hierarchy size");
    Matrix out(scores.rows(), scores.cols());
    for (int i = dm.size() - 1; i >= 0; --i) {
        out.col(i) = scores.col(i);
        for_each_child(dm, i, [&](int c) { out.col(i) = out.col(i).cwiseMax(out.col(c)); });
    }
    return out;
}

BitVec binarize(const Vector& probs, double threshold) {
    BitVec out(static_cast<std::size_t>(probs.size()), 0);
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
            fail("out-of-range-prob", "probability outside [0, 1]");
        out[static_cast<std::size_t>(i)] = probs[i] > threshold ? 1 : 0;
    }
    return out;
}

BitMatrix binarize_rows(const Matrix& probs, double threshold) {
    BitMatrix out(probs.rows(), probs.cols());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
            const double p = probs(r, c);
            if (!(p >= 0.0 && p <= 1.0))
                fail("out-of-range-prob", "probability outside [0, 1]");
            out(r, c) = p > threshold ? 1 : 0;
        }
    }
    return out;
}

}  // namespace hml
