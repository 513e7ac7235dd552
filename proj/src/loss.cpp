#include "hml/loss.hpp"

#include <cmath>

#include "hml/errors.hpp"

namespace hml {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// softplus(z) = ln(1 + e^z); -ln σ(x) = softplus(-x), -ln(1-σ(x)) = softplus(x).
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

void check_shapes(const Hierarchy& h, const Matrix& scores, const BitMatrix& targets,
                  const BitMatrix& mask) {
    if (scores.cols() != h.size() || targets.cols() != h.size() || mask.cols() != h.size() ||
        targets.rows() != scores.rows() || mask.rows() != scores.rows())
        fail("shape-mismatch", "scores, targets and mask must all be B x hierarchy-size");
    for (Eigen::Index b = 0; b < targets.rows(); ++b)
        for (Eigen::Index i = 0; i < targets.cols(); ++i)
            if (targets(b, i) && mask(b, i))
                fail("mask-overlaps-targets", "a labelled positive bit cannot be masked");
}

}  // namespace

HeadLossTerms mc_loss(const Hierarchy& h, const Matrix& probs, const BitMatrix& targets,
                      const BitMatrix& mask, double eps) {
    check_shapes(h, probs, targets, mask);
    const int n = h.size();
    const Eigen::Index B = probs.rows();

    HeadLossTerms out;
    out.per_bit = Matrix::Zero(B, n);
    double sum = 0.0;
    long long count = 0;

    // Masked coordinates contribute no term and are excluded from every max
    // pool, so a masked probability can never influence the loss. (With
    // annotation-derived masks the exclusion is vacuous: every unmasked
    // ancestor of a masked node is positive, and positive pools only range
    // over positive-labelled nodes, which are never masked.)
    std::vector<double> pos_max(static_cast<std::size_t>(n));
    std::vector<double> sub_max(static_cast<std::size_t>(n));
    for (Eigen::Index b = 0; b < B; ++b) {
        for (int i = n - 1; i >= 0; --i) {
            double p = probs(b, i);
            if (!(p >= 0.0 && p <= 1.0))
                fail("probability-out-of-range", "probability outside [0, 1]");
            p = std::min(std::max(p, eps), 1.0 - eps);
            double pm = targets(b, i) ? p : -1.0;  // -1 marks "no candidate yet"
            double sm = mask(b, i) ? -1.0 : p;
            for (int c : h.node(i).children) {
                pm = std::max(pm, pos_max[static_cast<std::size_t>(c)]);
                sm = std::max(sm, sub_max[static_cast<std::size_t>(c)]);
            }
            pos_max[static_cast<std::size_t>(i)] = pm;
            sub_max[static_cast<std::size_t>(i)] = sm;
        }
        for (int i = 0; i < n; ++i) {
            if (mask(b, i)) continue;
            double term;
            if (targets(b, i))
                term = -std::log(pos_max[static_cast<std::size_t>(i)]);
            else
                term = -std::log(1.0 - sub_max[static_cast<std::size_t>(i)]);
            out.per_bit(b, i) = term;
            sum += term;
            ++count;
        }
    }
    out.head.contributing_bits = count;
    out.head.loss = count > 0 ? sum / static_cast<double>(count) : 0.0;
    return out;
}

HeadLossGrad mc_loss_grad(const Hierarchy& h, const Matrix& logits, const BitMatrix& targets,
                          const BitMatrix& mask) {
    check_shapes(h, logits, targets, mask);
    const int n = h.size();
    const Eigen::Index B = logits.rows();

    HeadLossGrad out;
    out.grad = Matrix::Zero(B, n);
    double sum = 0.0;
    long long count = 0;

    // Winning node index per subtree max; ties resolved to the lowest index
    // because candidates are scanned in increasing index order (self first,
    // then children) and only a strictly larger score displaces the winner.
    // Masked coordinates are excluded from both pools (-1 = empty pool), so
    // they can never win and never receive or influence gradient.
    std::vector<int> pos_win(static_cast<std::size_t>(n));
    std::vector<int> sub_win(static_cast<std::size_t>(n));
    for (Eigen::Index b = 0; b < B; ++b) {
        for (int i = n - 1; i >= 0; --i) {
            int pw = targets(b, i) ? i : -1;
            int sw = mask(b, i) ? -1 : i;
            for (int c : h.node(i).children) {
                const int cpw = pos_win[static_cast<std::size_t>(c)];
                if (cpw >= 0 && (pw < 0 || logits(b, cpw) > logits(b, pw))) pw = cpw;
                const int csw = sub_win[static_cast<std::size_t>(c)];
                if (csw >= 0 && (sw < 0 || logits(b, csw) > logits(b, sw))) sw = csw;
            }
            pos_win[static_cast<std::size_t>(i)] = pw;
            sub_win[static_cast<std::size_t>(i)] = sw;
        }
        for (int i = 0; i < n; ++i) {
            if (mask(b, i)) continue;
            if (targets(b, i)) {
                const int w = pos_win[static_cast<std::size_t>(i)];
                sum += softplus(-logits(b, w));
                out.grad(b, w) += sigmoid(logits(b, w)) - 1.0;
            } else {
                const int w = sub_win[static_cast<std::size_t>(i)];
                sum += softplus(logits(b, w));
                out.grad(b, w) += sigmoid(logits(b, w));
            }
            ++count;
        }
    }
    out.head.contributing_bits = count;
    if (count > 0) {
        out.head.loss = sum / static_cast<double>(count);
        out.grad /= static_cast<double>(count);
    } else {
        out.grad.setZero();
    }
    return out;
}

LossReport batch_loss(std::span<const HeadLoss> heads, HeadReduction reduction) {
    if (heads.empty()) fail("no-heads", "batch loss needs at least one head");
    LossReport r;
    r.per_head.assign(heads.begin(), heads.end());
    double sum = 0.0;
    for (const HeadLoss& hl : heads) {
        if (hl.contributing_bits <= 0) continue;
        sum += hl.loss;
        ++r.contributing_heads;
    }
    if (r.contributing_heads == 0) {
        r.total = 0.0;
        r.skip = true;
    } else if (reduction == HeadReduction::mean) {
        r.total = sum / static_cast<double>(r.contributing_heads);
    } else {
        r.total = sum;
    }
    return r;
}

}  // namespace hml
