#include "hml/baseline.hpp"

#include <bit>
#include <cmath>

#include "hml/errors.hpp"

namespace hml {

mpz_class count_valid_annotations(const Hierarchy& h) {
    std::vector<mpz_class> f(static_cast<std::size_t>(h.size()));
    // Children have higher pre-order indices, so a reverse sweep sees every
    // child's value before its parent's.
    for (int i = h.size() - 1; i >= 0; --i) {
        mpz_class prod = 1;
        for (int c : h.node(i).children) prod *= f[static_cast<std::size_t>(c)];
        f[static_cast<std::size_t>(i)] = 1 + prod;
    }
    return f[0];
}

mpz_class brute_force_count(const Hierarchy& h) {
    const int n = h.size();
    if (n > 24) fail("hierarchy-too-large", "exhaustive enumeration is guarded to 24 nodes");
    // ancestor_bits[v] = v plus its ancestor chain, as a word-sized mask.
    std::vector<std::uint32_t> ancestor_bits(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        std::uint32_t m = 0;
        for (int a = v; a != -1; a = h.node(a).parent) m |= (1u << a);
        ancestor_bits[static_cast<std::size_t>(v)] = m;
    }
    std::vector<bool> seen(std::size_t{1} << n, false);
    mpz_class count = 0;
    for (std::uint32_t raw = 0;; ++raw) {
        std::uint32_t closed = 0;
        for (std::uint32_t rest = raw; rest != 0; rest &= rest - 1)
            closed |= ancestor_bits[static_cast<std::size_t>(std::countr_zero(rest))];
        if (!seen[closed]) {
            seen[closed] = true;
            ++count;
        }
        if (raw == (std::uint32_t{1} << n) - 1) break;
    }
    return count;
}

std::pair<mpz_class, mpz_class> valid_label_cardinality_bound(int n) {
    if (n < 1) fail("invalid-argument", "bound requires at least one node");
    mpz_class upper = 1;
    upper <<= n;
    return {mpz_class(n + 1), upper};
}

BitVec sample_random_prediction(const Hierarchy& h, double p, Rng& rng) {
    if (!(p > 0.0 && p < 1.0)) fail("invalid-rate", "bit probability must lie in (0, 1)");
    BitVec bits(static_cast<std::size_t>(h.size()), 0);
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = rng.bernoulli(p) ? 1 : 0;
    return h.closure(bits);
}

std::vector<double> activation_probabilities(const Hierarchy& h, double p) {
    std::vector<double> out(static_cast<std::size_t>(h.size()));
    for (int v = 0; v < h.size(); ++v)
        out[static_cast<std::size_t>(v)] =
            1.0 - std::pow(1.0 - p, static_cast<double>(h.node(v).subtree_size));
    return out;
}

namespace {

void finalize(BaselineMetricStat& s) {
    if (s.values.empty()) return;
    double sum = 0.0;
    for (double v : s.values) sum += v;
    const double mean = sum / static_cast<double>(s.values.size());
    s.mean = mean;
    if (s.values.size() >= 2) {
        double sq = 0.0;
        for (double v : s.values) sq += (v - mean) * (v - mean);
        s.stddev = std::sqrt(sq / static_cast<double>(s.values.size() - 1));
    }
}

}  // namespace

BaselineReport estimate_random_baseline(std::span<const BaselineInput> test, int trials, double p,
                                        std::uint64_t master_seed) {
    if (test.empty()) fail("empty-test-set", "baseline needs at least one category");
    for (const BaselineInput& in : test) {
        if (!in.hierarchy) fail("empty-test-set", "baseline input without a hierarchy");
        if (in.targets.rows() == 0) fail("empty-test-set", "baseline needs at least one sample");
    }
    if (trials < 2) fail("invalid-trials", "need at least two trials for a spread estimate");

    BaselineReport rep;
    rep.trials = trials;
    rep.p = p;
    for (int t = 0; t < trials; ++t) {
        Rng rng = substream(master_seed, "baseline", static_cast<std::uint64_t>(t));
        std::vector<CategoryBatch> batches;
        batches.reserve(test.size());
        for (const BaselineInput& in : test) {
            CategoryBatch cb;
            cb.hierarchy = in.hierarchy;
            cb.targets = in.targets;
            cb.mask = in.mask;
            cb.preds.resize(in.targets.rows(), in.targets.cols());
            for (Eigen::Index b = 0; b < in.targets.rows(); ++b)
                set_row_bits(cb.preds, b, sample_random_prediction(*in.hierarchy, p, rng));
            batches.push_back(std::move(cb));
        }
        const MetricsReport m = evaluate(batches);
        if (m.ap) rep.ap.values.push_back(*m.ap);
        if (m.hml_ap) rep.hml_ap.values.push_back(*m.hml_ap);
        if (m.singular_f1) rep.singular_f1.values.push_back(*m.singular_f1);
    }
    finalize(rep.ap);
    finalize(rep.hml_ap);
    finalize(rep.singular_f1);
    return rep;
}

}  // namespace hml
