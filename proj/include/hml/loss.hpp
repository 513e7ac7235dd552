#pragma once

#include <span>
#include <vector>

#include "hml/hierarchy.hpp"
#include "hml/types.hpp"

namespace hml {

// One head's loss over a batch: mean of the per-bit terms over unmasked
// bits. A fully masked head has loss 0 and contributing_bits 0.
struct HeadLoss {
    double loss = 0.0;
    long long contributing_bits = 0;
};

struct HeadLossTerms {
    HeadLoss head;
    Matrix per_bit;  // B×n, masked entries exactly 0
};

struct HeadLossGrad {
    HeadLoss head;
    Matrix grad;  // B×n d(head loss)/d(logits), zero at masked bits
};

enum class HeadReduction { mean, sum };

struct LossReport {
    double total = 0.0;
    std::vector<HeadLoss> per_head;
    int contributing_heads = 0;
    bool skip = false;  // no head had any unmasked bit
};

// Max-constraint loss in probability space. Positive bit (b,i) costs
// -ln(max over positive-labelled nodes j in subtree(i) of probs[b,j]);
// negative bit costs -ln(1 - m_i) with m_i the subtree max over unmasked
// nodes, so a masked probability never influences the loss.
// Probabilities are clamped to [eps, 1-eps] before the logs.
HeadLossTerms mc_loss(const Hierarchy& h, const Matrix& probs, const BitMatrix& targets,
                      const BitMatrix& mask, double eps = 1e-7);

// Same loss computed from logits via stable log-sigmoid identities, plus its
// exact gradient. Each max routes gradient only to its winning element;
// ties go to the lowest node index.
HeadLossGrad mc_loss_grad(const Hierarchy& h, const Matrix& logits, const BitMatrix& targets,
                          const BitMatrix& mask);

// Aggregate head losses; heads with no contributing bits are excluded. With
// no contributing head at all, total = 0 and skip is set.
LossReport batch_loss(std::span<const HeadLoss> heads,
                      HeadReduction reduction = HeadReduction::mean);

}  // namespace hml
