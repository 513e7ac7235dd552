#pragma once

#include <span>
#include <string>
#include <vector>

#include "hml/hierarchy.hpp"
#include "hml/types.hpp"

namespace hml {

struct DatagenConfig {
    int n_samples = 1000;
    double noise_sigma = 0.1;
    double branch_prob = 0.4;
    double missing_precision_rate = 0.0;
    double missing_category_rate = 0.0;
    int feature_dim = 0;  // 0 = auto: smallest dim making ~25% distractor columns
    std::uint64_t seed = 0;
};

// Per category, row-aligned bit matrices. observed_mask uses generation-time
// knowledge: only bits hidden by truncation or a dropped category are masked;
// an untouched annotation is complete, so its terminals' descendants stay
// unmasked true negatives. Re-reading the written annotation CSV instead
// derives masks from the paths alone, which also masks descendants of every
// non-leaf terminal (the file format cannot say "verified complete").
struct GeneratedData {
    std::vector<std::string> sample_ids;
    Matrix features;  // n_samples x feature_dim
    std::vector<BitMatrix> ground_truth;
    std::vector<BitMatrix> observed_targets;
    std::vector<BitMatrix> observed_mask;
    std::vector<BitVec> category_present;  // [category][sample]
    int signal_dim = 0;                    // total node count across categories
};

// Ground truth by a root-down walk (child positive iff parent positive and an
// independent draw < branch_prob), features as noisy per-node indicators plus
// standard-normal distractor columns, then degradation: whole categories
// dropped with missing_category_rate, and each component path truncated to a
// uniform shallower depth with missing_precision_rate. Sample s draws only
// from the substream (seed, "data", s). errors: invalid-rate, dim-too-small.
GeneratedData generate_dataset(std::span<const Hierarchy* const> hierarchies,
                               const DatagenConfig& cfg);

}  // namespace hml
