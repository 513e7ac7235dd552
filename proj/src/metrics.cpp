#include "hml/metrics.hpp"

#include <algorithm>
#include <array>

#include "hml/annotations.hpp"
#include "hml/errors.hpp"

namespace hml {

namespace {

struct BitCounts {
    long long tp = 0, fp = 0, pos = 0, total = 0;
};

// AP = Σ (R_k − R_{k−1}) P_k with a threshold at each unique score value.
// For binary scores that is at most two points: the predicted-positive set,
// then everything (precision = prevalence). With no predicted positives the
// curve has the single everything-point.
std::optional<double> ap_from_counts(const BitCounts& c) {
    if (c.pos == 0) return std::nullopt;
    const double prevalence = static_cast<double>(c.pos) / static_cast<double>(c.total);
    const long long predicted = c.tp + c.fp;
    if (predicted == 0 || predicted == c.total) return prevalence;
    const double p1 = static_cast<double>(c.tp) / static_cast<double>(predicted);
    const double r1 = static_cast<double>(c.tp) / static_cast<double>(c.pos);
    return r1 * p1 + (1.0 - r1) * prevalence;
}

void check_batch_shapes(const BitMatrix& preds, const BitMatrix& targets, const BitMatrix& mask) {
    if (targets.rows() != preds.rows() || targets.cols() != preds.cols() ||
        mask.rows() != preds.rows() || mask.cols() != preds.cols())
        fail("shape-mismatch", "preds, targets and mask must have identical shapes");
}

BitCounts count_bits(const BitMatrix& preds, const BitMatrix& targets, const BitMatrix& mask) {
    BitCounts c;
    for (Eigen::Index b = 0; b < preds.rows(); ++b) {
        for (Eigen::Index i = 0; i < preds.cols(); ++i) {
            if (mask(b, i)) continue;
            ++c.total;
            if (targets(b, i)) ++c.pos;
            if (preds(b, i) && targets(b, i)) ++c.tp;
            if (preds(b, i) && !targets(b, i)) ++c.fp;
        }
    }
    return c;
}

std::optional<double> mean_over_depths(const std::map<int, double>& per_depth) {
    if (per_depth.empty()) return std::nullopt;
    double s = 0.0;
    for (const auto& [d, v] : per_depth) s += v;
    return s / static_cast<double>(per_depth.size());
}

}  // namespace

std::optional<double> micro_ap(const BitMatrix& preds, const BitMatrix& targets,
                               const BitMatrix& mask) {
    check_batch_shapes(preds, targets, mask);
    return ap_from_counts(count_bits(preds, targets, mask));
}

std::optional<double> hml_ap(const Hierarchy& h, const BitMatrix& preds, const BitMatrix& targets,
                             const BitMatrix& mask, std::map<int, double>* per_depth) {
    check_batch_shapes(preds, targets, mask);
    if (preds.rows() == 0) fail("empty-input", "no samples to evaluate");
    if (preds.cols() != h.size())
        fail("shape-mismatch", "bit width does not match hierarchy size");

    // Group rows by exact target bit-string; std::map keeps group order (and
    // hence float reduction order) deterministic.
    std::map<BitVec, std::vector<Eigen::Index>> groups;
    for (Eigen::Index b = 0; b < targets.rows(); ++b) groups[row_bits(targets, b)].push_back(b);

    std::map<int, std::pair<double, int>> depth_acc;  // depth -> (sum, count)
    for (const auto& [key, rows] : groups) {
        BitCounts c;
        for (Eigen::Index b : rows) {
            for (Eigen::Index i = 0; i < preds.cols(); ++i) {
                if (mask(b, i)) continue;
                ++c.total;
                if (targets(b, i)) ++c.pos;
                if (preds(b, i) && targets(b, i)) ++c.tp;
                if (preds(b, i) && !targets(b, i)) ++c.fp;
            }
        }
        const auto ap = ap_from_counts(c);
        if (!ap) continue;  // e.g. the all-null group: no positive to rank
        int depth = 0;
        for (std::size_t i = 0; i < key.size(); ++i)
            if (key[i]) depth = std::max(depth, h.node(static_cast<int>(i)).depth);
        auto& [sum, count] = depth_acc[depth];
        sum += *ap;
        ++count;
    }

    std::map<int, double> means;
    for (const auto& [d, acc] : depth_acc) means[d] = acc.first / acc.second;
    if (per_depth) *per_depth = means;
    return mean_over_depths(means);
}

std::optional<double> singular_f1(const Hierarchy& h, const BitMatrix& preds,
                                  const BitMatrix& targets, const BitMatrix& mask,
                                  std::map<int, double>* per_depth) {
    check_batch_shapes(preds, targets, mask);
    if (preds.rows() == 0) fail("empty-input", "no samples to evaluate");
    if (preds.cols() != h.size())
        fail("shape-mismatch", "bit width does not match hierarchy size");

    const Eigen::Index B = preds.rows();
    // Component-path universe: terminals of every sample's target, keyed by
    // terminal node. The path's node set is the terminal's ancestor chain.
    std::map<int, std::array<long long, 3>> counts;  // terminal -> {tp, fp, fn}
    for (Eigen::Index b = 0; b < B; ++b)
        for (int t : terminal_positives(h, row_bits(targets, b))) counts.try_emplace(t);

    std::vector<int> chain;
    for (auto& [t, c] : counts) {
        chain.clear();
        for (int v = t; v != -1; v = h.node(v).parent) chain.push_back(v);
        for (Eigen::Index b = 0; b < B; ++b) {
            bool masked = false, predicted = true, truth = true;
            for (int v : chain) {
                if (mask(b, v)) masked = true;
                if (!preds(b, v)) predicted = false;
                if (!targets(b, v)) truth = false;
            }
            if (masked) continue;
            if (truth && predicted) ++c[0];
            if (!truth && predicted) ++c[1];
            if (truth && !predicted) ++c[2];
        }
    }

    std::map<int, std::pair<double, int>> depth_acc;
    for (const auto& [t, c] : counts) {
        const long long denom = 2 * c[0] + c[1] + c[2];
        if (denom == 0) continue;  // every occurrence masked away
        const double f1 = 2.0 * static_cast<double>(c[0]) / static_cast<double>(denom);
        auto& [sum, count] = depth_acc[h.node(t).depth];
        sum += f1;
        ++count;
    }

    std::map<int, double> means;
    for (const auto& [d, acc] : depth_acc) means[d] = acc.first / acc.second;
    if (per_depth) *per_depth = means;
    return mean_over_depths(means);
}

std::vector<NodePrf> per_node_prf(const Hierarchy& h, const BitMatrix& preds,
                                  const BitMatrix& targets, const BitMatrix& mask) {
    check_batch_shapes(preds, targets, mask);
    if (preds.cols() != h.size())
        fail("shape-mismatch", "bit width does not match hierarchy size");
    std::vector<NodePrf> out(static_cast<std::size_t>(h.size()));
    for (int i = 0; i < h.size(); ++i) {
        NodePrf& r = out[static_cast<std::size_t>(i)];
        r.node = i;
        r.path = h.path_of(i);
        r.depth = h.node(i).depth;
        long long tp = 0, fp = 0, fn = 0;
        for (Eigen::Index b = 0; b < preds.rows(); ++b) {
            if (mask(b, i)) continue;
            ++r.evaluated;
            if (targets(b, i)) ++r.support;
            if (preds(b, i) && targets(b, i)) ++tp;
            if (preds(b, i) && !targets(b, i)) ++fp;
            if (!preds(b, i) && targets(b, i)) ++fn;
        }
        if (r.evaluated > 0)
            r.support_fraction =
                static_cast<double>(r.support) / static_cast<double>(r.evaluated);
        if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        if (r.support > 0) r.recall = static_cast<double>(tp) / static_cast<double>(fn + tp);
        if (2 * tp + fp + fn > 0)
            r.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    }
    return out;
}

MetricsReport evaluate(std::span<const CategoryBatch> batches) {
    if (batches.empty()) fail("empty-input", "no categories to evaluate");
    MetricsReport rep;
    BitCounts pooled;
    double hml_sum = 0.0, sf1_sum = 0.0;
    int hml_n = 0, sf1_n = 0;
    std::map<int, std::pair<DepthScore, std::pair<int, int>>> depth_acc;  // sums + counts

    for (const CategoryBatch& cb : batches) {
        if (!cb.hierarchy) fail("empty-input", "category batch without a hierarchy");
        const Hierarchy& h = *cb.hierarchy;
        CategoryEval ce;
        ce.category = h.category();

        const BitCounts c = count_bits(cb.preds, cb.targets, cb.mask);
        check_batch_shapes(cb.preds, cb.targets, cb.mask);
        if (cb.preds.cols() != h.size())
            fail("shape-mismatch", "bit width does not match hierarchy size");
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.pos += c.pos;
        pooled.total += c.total;
        ce.micro_ap = ap_from_counts(c);

        std::map<int, double> hml_depth, sf1_depth;
        ce.hml_ap = hml_ap(h, cb.preds, cb.targets, cb.mask, &hml_depth);
        ce.singular_f1 = singular_f1(h, cb.preds, cb.targets, cb.mask, &sf1_depth);
        for (const auto& [d, v] : hml_depth) ce.per_depth[d].hml_ap = v;
        for (const auto& [d, v] : sf1_depth) ce.per_depth[d].singular_f1 = v;
        ce.per_node = per_node_prf(h, cb.preds, cb.targets, cb.mask);

        if (ce.hml_ap) {
            hml_sum += *ce.hml_ap;
            ++hml_n;
        }
        if (ce.singular_f1) {
            sf1_sum += *ce.singular_f1;
            ++sf1_n;
        }
        for (const auto& [d, v] : hml_depth) {
            auto& slot = depth_acc[d];
            slot.first.hml_ap = slot.first.hml_ap.value_or(0.0) + v;
            ++slot.second.first;
        }
        for (const auto& [d, v] : sf1_depth) {
            auto& slot = depth_acc[d];
            slot.first.singular_f1 = slot.first.singular_f1.value_or(0.0) + v;
            ++slot.second.second;
        }
        rep.categories.push_back(std::move(ce));
    }

    rep.ap = ap_from_counts(pooled);
    if (hml_n > 0) rep.hml_ap = hml_sum / hml_n;
    if (sf1_n > 0) rep.singular_f1 = sf1_sum / sf1_n;
    for (const auto& [d, acc] : depth_acc) {
        DepthScore ds;
        if (acc.second.first > 0) ds.hml_ap = *acc.first.hml_ap / acc.second.first;
        if (acc.second.second > 0) ds.singular_f1 = *acc.first.singular_f1 / acc.second.second;
        rep.per_depth[d] = ds;
    }
    return rep;
}

}  // namespace hml
