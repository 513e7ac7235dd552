#include "hml/datagen.hpp"

#include <cmath>
#include <cstdio>

#include "hml/annotations.hpp"
#include "hml/errors.hpp"
#include "hml/rng.hpp"

namespace hml {

namespace {

void check_rate(double r, const char* what) {
    if (!(r >= 0.0 && r <= 1.0)) fail("invalid-rate", std::string(what) + " must lie in [0, 1]");
}

int ancestor_at_depth(const Hierarchy& h, int node, int depth) {
    int v = node;
    while (h.node(v).depth > depth) v = h.node(v).parent;
    return v;
}

}  // namespace

GeneratedData generate_dataset(std::span<const Hierarchy* const> hierarchies,
                               const DatagenConfig& cfg) {
    if (hierarchies.empty()) fail("invalid-rate", "dataset needs at least one category");
    check_rate(cfg.branch_prob, "branch_prob");
    check_rate(cfg.missing_precision_rate, "missing_precision_rate");
    check_rate(cfg.missing_category_rate, "missing_category_rate");
    if (cfg.noise_sigma < 0.0) fail("invalid-rate", "noise_sigma must be non-negative");
    if (cfg.n_samples <= 0) fail("invalid-rate", "n_samples must be positive");

    int total_nodes = 0;
    for (const Hierarchy* h : hierarchies) total_nodes += h->size();
    int feature_dim = cfg.feature_dim;
    if (feature_dim == 0)
        feature_dim = static_cast<int>(std::ceil(static_cast<double>(total_nodes) / 0.75));
    if (feature_dim < total_nodes)
        fail("dim-too-small", "feature_dim must be at least the total node count (" +
                                  std::to_string(total_nodes) + ")");

    GeneratedData out;
    out.signal_dim = total_nodes;
    out.features.resize(cfg.n_samples, feature_dim);
    for (const Hierarchy* h : hierarchies) {
        out.ground_truth.emplace_back(cfg.n_samples, h->size());
        out.observed_targets.emplace_back(cfg.n_samples, h->size());
        out.observed_mask.emplace_back(cfg.n_samples, h->size());
        out.category_present.emplace_back(static_cast<std::size_t>(cfg.n_samples), 0);
    }

    char idbuf[32];
    for (int s = 0; s < cfg.n_samples; ++s) {
        std::snprintf(idbuf, sizeof idbuf, "s%06d", s);
        out.sample_ids.emplace_back(idbuf);
        Rng rng = substream(cfg.seed, "data", static_cast<std::uint64_t>(s));

        // Root-down ground-truth walk. A draw is consumed for every non-root
        // node even under a negative parent, so the stream position never
        // depends on earlier outcomes.
        std::vector<BitVec> gt(hierarchies.size());
        for (std::size_t k = 0; k < hierarchies.size(); ++k) {
            const Hierarchy& h = *hierarchies[k];
            BitVec& bits = gt[k];
            bits.assign(static_cast<std::size_t>(h.size()), 0);
            bits[0] = 1;
            for (int i = 1; i < h.size(); ++i) {
                const bool take = rng.bernoulli(cfg.branch_prob);
                bits[static_cast<std::size_t>(i)] =
                    (take && bits[static_cast<std::size_t>(h.node(i).parent)]) ? 1 : 0;
            }
            set_row_bits(out.ground_truth[k], s, bits);
        }

        // Features: noisy indicator per node, then unit-normal distractors.
        int col = 0;
        for (std::size_t k = 0; k < hierarchies.size(); ++k) {
            for (int i = 0; i < hierarchies[k]->size(); ++i, ++col)
                out.features(s, col) = (gt[k][static_cast<std::size_t>(i)] ? 1.0 : 0.0) +
                                       rng.normal(0.0, cfg.noise_sigma);
        }
        for (; col < feature_dim; ++col) out.features(s, col) = rng.normal(0.0, 1.0);

        // Degradation: category drop, then per-path truncation.
        for (std::size_t k = 0; k < hierarchies.size(); ++k) {
            const Hierarchy& h = *hierarchies[k];
            BitVec targets(static_cast<std::size_t>(h.size()), 0);
            BitVec mask(static_cast<std::size_t>(h.size()), 0);
            if (rng.bernoulli(cfg.missing_category_rate)) {
                mask.assign(mask.size(), 1);
            } else {
                out.category_present[k][static_cast<std::size_t>(s)] = 1;
                std::vector<int> truncated;  // new terminals of shortened paths
                for (int t : terminal_positives(h, gt[k])) {
                    const bool shorten = rng.bernoulli(cfg.missing_precision_rate);
                    if (shorten && h.node(t).depth > 0) {
                        const int new_depth =
                            static_cast<int>(rng.below(static_cast<std::uint64_t>(h.node(t).depth)));
                        const int nt = ancestor_at_depth(h, t, new_depth);
                        targets[static_cast<std::size_t>(nt)] = 1;
                        truncated.push_back(nt);
                    } else {
                        targets[static_cast<std::size_t>(t)] = 1;
                    }
                }
                targets = h.closure(targets);
                // Exactly the information lost to truncation: strict
                // descendants of shortened-path terminals, minus bits still
                // confirmed positive through other paths.
                for (int nt : truncated)
                    for (int j = nt + 1; j < h.subtree_end(nt); ++j)
                        if (!targets[static_cast<std::size_t>(j)])
                            mask[static_cast<std::size_t>(j)] = 1;
            }
            set_row_bits(out.observed_targets[k], s, targets);
            set_row_bits(out.observed_mask[k], s, mask);
        }
    }
    return out;
}

}  // namespace hml
