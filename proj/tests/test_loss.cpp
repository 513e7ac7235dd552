#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "hml/annotations.hpp"
#include "hml/errors.hpp"
#include "hml/hierarchy.hpp"
#include "hml/loss.hpp"
#include "oracles.hpp"

using hml::BitMatrix;
using hml::BitVec;
using hml::Hierarchy;
using hml::Matrix;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string require_code(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const hml::Error& e) {
        return e.code();
    }
    return "<no-error>";
}

struct Instance {
    Hierarchy h;
    Matrix logits;
    BitMatrix targets;
    BitMatrix mask;
};

// Random (tree, batch, mask) instance. Logits are distinct multiples of a
// coarse grid step so no subtree max is ever within finite-difference range
// of a tie. Masks mix annotation-shaped rows (derived from truncation),
// fully masked rows, and arbitrary extra masked negatives.
Instance random_instance(hml::Rng& rng, bool fully_masked_head = false) {
    Instance ins{oracle::random_tree(rng, 1 + static_cast<int>(rng.below(20))), {}, {}, {}};
    const int n = ins.h.size();
    const auto B = static_cast<Eigen::Index>(1 + rng.below(6));

    std::vector<int> slots(8192);
    std::iota(slots.begin(), slots.end(), 0);
    for (std::size_t k = 0; k < static_cast<std::size_t>(B) * static_cast<std::size_t>(n); ++k)
        std::swap(slots[k], slots[k + rng.below(slots.size() - k)]);

    ins.logits.resize(B, n);
    ins.targets.resize(B, n);
    ins.mask.resize(B, n);
    std::size_t next = 0;
    for (Eigen::Index b = 0; b < B; ++b) {
        for (int i = 0; i < n; ++i)
            ins.logits(b, i) = -3.0 + 6.0 * static_cast<double>(slots[next++]) / 8192.0;
        BitVec t(static_cast<std::size_t>(n), 0);
        BitVec m(static_cast<std::size_t>(n), 0);
        if (fully_masked_head || rng.bernoulli(0.15)) {
            std::fill(m.begin(), m.end(), 1);
        } else {
            t = oracle::random_closed_bits(ins.h, rng, 0.35);
            m = hml::derive_mask(ins.h, t);
            for (int i = 0; i < n; ++i)
                if (!t[static_cast<std::size_t>(i)] && rng.bernoulli(0.15))
                    m[static_cast<std::size_t>(i)] = 1;
        }
        hml::set_row_bits(ins.targets, b, t);
        hml::set_row_bits(ins.mask, b, m);
    }
    return ins;
}

}  // namespace

TEST_CASE("perfect prediction drives the loss to zero") {
    const auto h = Hierarchy::parse("a\na > b\na > b > c\na > d\n");
    Matrix probs(1, 4);
    probs << 1.0, 1.0, 0.0, 0.0;
    BitMatrix targets(1, 4), mask = BitMatrix::Zero(1, 4);
    targets << 1, 1, 0, 0;
    const auto r = hml::mc_loss(h, probs, targets, mask);
    CHECK(r.head.loss < 1e-6);
    CHECK(r.head.contributing_bits == 4);
}

TEST_CASE("toy hierarchy matches hand-computed per-bit terms") {
    // a(+) -> b(+), a -> c(-); the positive max for 'a' comes from 'b'.
    const auto h = Hierarchy::parse("a\na > b\na > c\n");
    Matrix probs(1, 3);
    probs << 0.3, 0.8, 0.6;
    BitMatrix targets(1, 3), mask = BitMatrix::Zero(1, 3);
    targets << 1, 1, 0;
    const auto r = hml::mc_loss(h, probs, targets, mask);
    CHECK(r.per_bit(0, 0) == doctest::Approx(-std::log(0.8)).epsilon(1e-12));
    CHECK(r.per_bit(0, 1) == doctest::Approx(-std::log(0.8)).epsilon(1e-12));
    CHECK(r.per_bit(0, 2) == doctest::Approx(-std::log(0.4)).epsilon(1e-12));
    CHECK(r.head.loss ==
          doctest::Approx((-2.0 * std::log(0.8) - std::log(0.4)) / 3.0).epsilon(1e-12));
}

TEST_CASE("high probability on a negative deep node does not help a positive ancestor") {
    const auto h = Hierarchy::parse("a\na > b\na > c\n");
    BitMatrix targets(1, 3), mask = BitMatrix::Zero(1, 3);
    targets << 1, 1, 0;
    Matrix lo(1, 3), hi(1, 3);
    lo << 0.3, 0.5, 0.1;
    hi << 0.3, 0.5, 0.9;  // only the negative leaf changes
    const auto a = hml::mc_loss(h, lo, targets, mask);
    const auto b = hml::mc_loss(h, hi, targets, mask);
    CHECK(a.per_bit(0, 0) == b.per_bit(0, 0));  // positive terms untouched
    CHECK(a.per_bit(0, 1) == b.per_bit(0, 1));
    CHECK(b.per_bit(0, 2) > a.per_bit(0, 2));
}

TEST_CASE("loss value matches the scalar-by-scalar oracle on random instances") {
    hml::Rng rng(31);
    for (int it = 0; it < 60; ++it) {
        const auto ins = random_instance(rng);
        Matrix probs(ins.logits.rows(), ins.logits.cols());
        for (Eigen::Index b = 0; b < probs.rows(); ++b)
            for (Eigen::Index i = 0; i < probs.cols(); ++i)
                probs(b, i) = sigmoid(ins.logits(b, i));
        const auto r = hml::mc_loss(ins.h, probs, ins.targets, ins.mask);
        const double want = oracle::naive_mc_loss(ins.h, probs, ins.targets, ins.mask);
        CHECK(r.head.loss == doctest::Approx(want).epsilon(1e-12));
        // The per-bit matrix is consistent with the scalar.
        double sum = 0.0;
        long long cnt = 0;
        for (Eigen::Index b = 0; b < probs.rows(); ++b)
            for (Eigen::Index i = 0; i < probs.cols(); ++i) {
                if (ins.mask(b, i)) {
                    CHECK(r.per_bit(b, i) == 0.0);
                } else {
                    sum += r.per_bit(b, i);
                    ++cnt;
                }
            }
        if (cnt > 0) CHECK(r.head.loss == doctest::Approx(sum / static_cast<double>(cnt)));
        CHECK(r.head.contributing_bits == cnt);
    }
}

TEST_CASE("logit-space loss agrees with probability-space loss") {
    hml::Rng rng(37);
    for (int it = 0; it < 40; ++it) {
        const auto ins = random_instance(rng);
        Matrix probs(ins.logits.rows(), ins.logits.cols());
        for (Eigen::Index b = 0; b < probs.rows(); ++b)
            for (Eigen::Index i = 0; i < probs.cols(); ++i)
                probs(b, i) = sigmoid(ins.logits(b, i));
        const auto a = hml::mc_loss(ins.h, probs, ins.targets, ins.mask);
        const auto g = hml::mc_loss_grad(ins.h, ins.logits, ins.targets, ins.mask);
        CHECK(g.head.loss == doctest::Approx(a.head.loss).epsilon(1e-9));
        CHECK(g.head.contributing_bits == a.head.contributing_bits);
    }
}

TEST_CASE("single-node hierarchy reduces to the plain BCE gradient") {
    const auto h = Hierarchy::parse("only\n");
    Matrix logits(2, 1);
    logits << 1.3, -0.4;
    BitMatrix targets(2, 1), mask = BitMatrix::Zero(2, 1);
    targets << 1, 0;
    const auto g = hml::mc_loss_grad(h, logits, targets, mask);
    // Mean over the two unmasked bits.
    CHECK(g.grad(0, 0) == doctest::Approx((sigmoid(1.3) - 1.0) / 2.0).epsilon(1e-12));
    CHECK(g.grad(1, 0) == doctest::Approx(sigmoid(-0.4) / 2.0).epsilon(1e-12));
}

TEST_CASE("gradient matches central finite differences") {
    hml::Rng rng(41);
    int checked = 0;
    for (int it = 0; it < 110; ++it) {
        auto ins = random_instance(rng, it % 11 == 0);
        const auto g = hml::mc_loss_grad(ins.h, ins.logits, ins.targets, ins.mask);
        const double fd_h = 1e-5;
        for (Eigen::Index b = 0; b < ins.logits.rows(); ++b) {
            for (Eigen::Index i = 0; i < ins.logits.cols(); ++i) {
                const double keep = ins.logits(b, i);
                ins.logits(b, i) = keep + fd_h;
                const double up = hml::mc_loss_grad(ins.h, ins.logits, ins.targets, ins.mask).head.loss;
                ins.logits(b, i) = keep - fd_h;
                const double dn = hml::mc_loss_grad(ins.h, ins.logits, ins.targets, ins.mask).head.loss;
                ins.logits(b, i) = keep;
                const double fd = (up - dn) / (2.0 * fd_h);
                const double got = g.grad(b, i);
                const double tol = 1e-4 * std::max({std::abs(fd), std::abs(got), 1e-4});
                CHECK(std::abs(got - fd) <= tol);
            }
        }
        ++checked;
    }
    CHECK(checked >= 100);
}

TEST_CASE("masked coordinates neither receive nor influence loss and gradient") {
    hml::Rng rng(43);
    for (int it = 0; it < 40; ++it) {
        auto ins = random_instance(rng);
        const auto g0 = hml::mc_loss_grad(ins.h, ins.logits, ins.targets, ins.mask);
        // Perturb every masked coordinate arbitrarily.
        bool any_masked = false;
        for (Eigen::Index b = 0; b < ins.logits.rows(); ++b)
            for (Eigen::Index i = 0; i < ins.logits.cols(); ++i)
                if (ins.mask(b, i)) {
                    ins.logits(b, i) = rng.uniform(-50.0, 50.0);
                    any_masked = true;
                }
        const auto g1 = hml::mc_loss_grad(ins.h, ins.logits, ins.targets, ins.mask);
        CHECK(g0.head.loss == g1.head.loss);  // bitwise
        CHECK(g0.grad == g1.grad);
        if (any_masked)
            for (Eigen::Index b = 0; b < ins.logits.rows(); ++b)
                for (Eigen::Index i = 0; i < ins.logits.cols(); ++i)
                    if (ins.mask(b, i)) CHECK(g1.grad(b, i) == 0.0);
    }
}

TEST_CASE("loss is invariant to appending a fully masked row") {
    hml::Rng rng(47);
    for (int it = 0; it < 20; ++it) {
        const auto ins = random_instance(rng);
        const auto base = hml::mc_loss_grad(ins.h, ins.logits, ins.targets, ins.mask);
        Matrix logits2(ins.logits.rows() + 1, ins.logits.cols());
        BitMatrix targets2(logits2.rows(), logits2.cols());
        BitMatrix mask2(logits2.rows(), logits2.cols());
        logits2.topRows(ins.logits.rows()) = ins.logits;
        targets2.topRows(ins.logits.rows()) = ins.targets;
        mask2.topRows(ins.logits.rows()) = ins.mask;
        for (Eigen::Index i = 0; i < logits2.cols(); ++i) {
            logits2(logits2.rows() - 1, i) = rng.uniform(-5.0, 5.0);
            targets2(logits2.rows() - 1, i) = 0;
            mask2(logits2.rows() - 1, i) = 1;
        }
        const auto grown = hml::mc_loss_grad(ins.h, logits2, targets2, mask2);
        CHECK(grown.head.loss == base.head.loss);
        CHECK(grown.head.contributing_bits == base.head.contributing_bits);
    }
}

TEST_CASE("all bits masked yields zero loss, zero gradient, zero count") {
    const auto h = Hierarchy::parse("a\na > b\n");
    Matrix logits(2, 2);
    logits << 3.0, -1.0, 0.5, 2.0;
    const BitMatrix targets = BitMatrix::Zero(2, 2);
    const BitMatrix mask = BitMatrix::Constant(2, 2, 1);
    const auto g = hml::mc_loss_grad(h, logits, targets, mask);
    CHECK(g.head.loss == 0.0);
    CHECK(g.head.contributing_bits == 0);
    CHECK(g.grad == Matrix::Zero(2, 2));
}

TEST_CASE("batch_loss aggregates contributing heads only") {
    using hml::HeadLoss;
    SUBCASE("bit counts (4, 0, 2) average heads 1 and 3") {
        const std::vector<HeadLoss> heads{{1.0, 4}, {99.0, 0}, {2.0, 2}};
        const auto r = hml::batch_loss(heads);
        CHECK(r.total == doctest::Approx(1.5));
        CHECK(r.contributing_heads == 2);
        CHECK_FALSE(r.skip);
    }
    SUBCASE("two heads, one fully masked: total equals the live head") {
        const std::vector<HeadLoss> heads{{0.7, 12}, {0.0, 0}};
        CHECK(hml::batch_loss(heads).total == 0.7);
    }
    SUBCASE("equal losses average to the same value") {
        const std::vector<HeadLoss> heads{{0.3, 1}, {0.3, 5}, {0.3, 9}};
        CHECK(hml::batch_loss(heads).total == doctest::Approx(0.3));
    }
    SUBCASE("sum reduction") {
        const std::vector<HeadLoss> heads{{1.0, 4}, {2.0, 2}};
        CHECK(hml::batch_loss(heads, hml::HeadReduction::sum).total == doctest::Approx(3.0));
    }
    SUBCASE("no contributing head sets the skip flag") {
        const std::vector<HeadLoss> heads{{0.0, 0}, {0.0, 0}};
        const auto r = hml::batch_loss(heads);
        CHECK(r.total == 0.0);
        CHECK(r.skip);
    }
}

TEST_CASE("loss error codes") {
    const auto h = Hierarchy::parse("a\na > b\n");
    Matrix probs(1, 2);
    probs << 0.5, 0.5;
    BitMatrix targets = BitMatrix::Zero(1, 2);
    BitMatrix mask = BitMatrix::Zero(1, 2);

    Matrix wrong(1, 3);
    wrong << 0.5, 0.5, 0.5;
    CHECK(require_code([&] { hml::mc_loss(h, wrong, targets, mask); }) == "shape-mismatch");

    Matrix bad(1, 2);
    bad << 0.5, 1.5;
    CHECK(require_code([&] { hml::mc_loss(h, bad, targets, mask); }) == "probability-out-of-range");

    BitMatrix overlap = BitMatrix::Zero(1, 2);
    overlap(0, 0) = 1;
    BitMatrix t2 = overlap;
    CHECK(require_code([&] { hml::mc_loss(h, probs, t2, overlap); }) == "mask-overlaps-targets");
}
