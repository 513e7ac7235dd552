#pragma once

#include <gmpxx.h>

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hml/hierarchy.hpp"
#include "hml/metrics.hpp"
#include "hml/rng.hpp"
#include "hml/types.hpp"

namespace hml {

// Exact number of ancestor-closed node subsets (valid annotations), null
// label included, via the product recurrence f(v) = 1 + Π_children f(c).
mpz_class count_valid_annotations(const Hierarchy& h);

// Exhaustive oracle: push every bit-string through ancestor closure and
// count distinct results. Guarded to n <= 24.
mpz_class brute_force_count(const Hierarchy& h);

// Inclusive (lower, upper) = (n+1, 2^n) bounds on the count above; the lower
// bound is attained by a chain, the upper only by degenerate forests.
std::pair<mpz_class, mpz_class> valid_label_cardinality_bound(int n);

// Independent Bernoulli(p) per bit, then ancestor closure. Always draws
// exactly n words so callers can rely on stream alignment.
BitVec sample_random_prediction(const Hierarchy& h, double p, Rng& rng);

// P(node v active) for the sampler above: 1 - (1-p)^{s(v)} with s(v) the
// subtree size. Deep nodes stay near p while ancestors saturate toward 1.
std::vector<double> activation_probabilities(const Hierarchy& h, double p);

struct BaselineMetricStat {
    std::vector<double> values;     // defined trials only
    std::optional<double> mean;     // set when >= 1 value
    std::optional<double> stddev;   // sample std (n-1), set when >= 2 values
};

struct BaselineReport {
    int trials = 0;
    double p = 0.5;
    BaselineMetricStat ap;
    BaselineMetricStat hml_ap;
    BaselineMetricStat singular_f1;
};

// Test annotations for one category; preds are drawn per trial.
struct BaselineInput {
    const Hierarchy* hierarchy = nullptr;
    BitMatrix targets;
    BitMatrix mask;
};

// Per trial: one random constrained prediction per sample, full metric
// evaluation, then mean +/- sample std over trials. Trial t draws from the
// substream (master_seed, "baseline", t) so trials are order-independent.
BaselineReport estimate_random_baseline(std::span<const BaselineInput> test, int trials, double p,
                                        std::uint64_t master_seed);

}  // namespace hml
