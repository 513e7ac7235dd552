#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hml/hierarchy.hpp"
#include "hml/types.hpp"

namespace hml {

// Scores with zero support are left unset and excluded from macro averages.
struct NodePrf {
    int node = 0;
    std::string path;
    int depth = 0;
    long long support = 0;    // unmasked positive samples
    long long evaluated = 0;  // unmasked samples
    double support_fraction = 0.0;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

struct DepthScore {
    std::optional<double> hml_ap;
    std::optional<double> singular_f1;
};

// One category's aligned evaluation batch: binarized constrained predictions,
// ancestor-closed targets, and the loss mask (1 = excluded bit).
struct CategoryBatch {
    const Hierarchy* hierarchy = nullptr;
    BitMatrix preds;
    BitMatrix targets;
    BitMatrix mask;
};

struct CategoryEval {
    std::string category;
    std::optional<double> micro_ap;
    std::optional<double> hml_ap;
    std::optional<double> singular_f1;
    std::map<int, DepthScore> per_depth;
    std::vector<NodePrf> per_node;
};

struct MetricsReport {
    std::optional<double> ap;           // micro over every category's unmasked bits
    std::optional<double> hml_ap;       // mean over categories
    std::optional<double> singular_f1;  // mean over categories
    std::map<int, DepthScore> per_depth;  // per-depth mean over categories
    std::vector<CategoryEval> categories;
};

// Rectangular average precision over the flattened unmasked bits, with one
// threshold per unique score value. Unset when there is no unmasked positive
// target bit.
std::optional<double> micro_ap(const BitMatrix& preds, const BitMatrix& targets,
                               const BitMatrix& mask);

// Groups samples by exact target bit-string, scores each group with micro_ap,
// assigns each group the depth of its deepest positive, then macro-averages
// within depths and across depths. `per_depth` (optional) receives the
// within-depth means.
std::optional<double> hml_ap(const Hierarchy& h, const BitMatrix& preds, const BitMatrix& targets,
                             const BitMatrix& mask, std::map<int, double>* per_depth = nullptr);

// Decomposes each target into component paths (root to terminal positive).
// A sample counts a path as predicted iff every node on it is predicted
// positive, and as true iff every node on it is a positive target. Per-path
// F1 over samples, macro within terminal depth, then across depths. A
// (sample, path) pair with any masked path node is skipped.
std::optional<double> singular_f1(const Hierarchy& h, const BitMatrix& preds,
                                  const BitMatrix& targets, const BitMatrix& mask,
                                  std::map<int, double>* per_depth = nullptr);

std::vector<NodePrf> per_node_prf(const Hierarchy& h, const BitMatrix& preds,
                                  const BitMatrix& targets, const BitMatrix& mask);

MetricsReport evaluate(std::span<const CategoryBatch> batches);

}  // namespace hml
