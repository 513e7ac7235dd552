#include "hml/annotations.hpp"

#include "hml/errors.hpp"

namespace hml {

bool is_ancestor_closed(const Hierarchy& h, const BitVec& bits) {
    if (bits.size() != static_cast<std::size_t>(h.size()))
        fail("dimension-mismatch", "bit vector length does not match hierarchy size");
    for (int i = 1; i < h.size(); ++i) {
        if (bits[i] && !bits[h.node(i).parent]) return false;
    }
    return true;
}

std::vector<int> terminal_positives(const Hierarchy& h, const BitVec& targets) {
    if (targets.size() != static_cast<std::size_t>(h.size()))
        fail("dimension-mismatch", "bit vector length does not match hierarchy size");
    std::vector<int> out;
    for (int i = 0; i < h.size(); ++i) {
        if (!targets[i]) continue;
        bool has_positive_child = false;
        for (int c : h.node(i).children) {
            if (targets[c]) {
                has_positive_child = true;
                break;
            }
        }
        if (!has_positive_child) out.push_back(i);
    }
    return out;
}

BitVec derive_mask(const Hierarchy& h, const BitVec& targets) {
    if (!is_ancestor_closed(h, targets))
        fail("non-closed-targets", "targets must include every ancestor of a positive node");
    BitVec mask(targets.size(), 0);
    for (int t : terminal_positives(h, targets)) {
        if (h.is_leaf(t)) continue;
        for (int j = t + 1; j < h.subtree_end(t); ++j)
            if (!targets[j]) mask[j] = 1;
    }
    return mask;
}

CategoryAnnotation parse_annotation(const Hierarchy& h, std::span<const std::string> paths) {
    CategoryAnnotation a;
    if (paths.empty()) {
        a.present = false;
        a.targets.assign(static_cast<std::size_t>(h.size()), 0);
        a.mask.assign(static_cast<std::size_t>(h.size()), 1);
        return a;
    }
    a.present = true;
    a.targets.assign(static_cast<std::size_t>(h.size()), 0);
    for (const std::string& p : paths) {
        auto idx = h.resolve_path(p);
        if (!idx)
            fail("unknown-path", "path not found in hierarchy '" + h.category() + "': " + p);
        a.targets[*idx] = 1;
    }
    a.targets = h.closure(a.targets);
    a.mask = derive_mask(h, a.targets);
    return a;
}

std::vector<std::string> to_paths(const Hierarchy& h, const BitVec& targets) {
    std::vector<std::string> out;
    for (int t : terminal_positives(h, targets)) out.push_back(h.path_of(t));
    return out;
}

EncodedCategory encode_batch(std::span<const CategoryAnnotation> rows, const Hierarchy& h) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    EncodedCategory enc;
    enc.targets.resize(n, h.size());
    enc.mask.resize(n, h.size());
    for (Eigen::Index s = 0; s < n; ++s) {
        const CategoryAnnotation& a = rows[static_cast<std::size_t>(s)];
        if (a.targets.size() != static_cast<std::size_t>(h.size()) ||
            a.mask.size() != static_cast<std::size_t>(h.size()))
            fail("category-mismatch", "annotation width does not match the category hierarchy");
        set_row_bits(enc.targets, s, a.targets);
        set_row_bits(enc.mask, s, a.mask);
    }
    return enc;
}

EncodedCategory encode_category(const AnnotationTable& table, std::size_t category_index,
                                const Hierarchy& h) {
    std::vector<CategoryAnnotation> rows;
    rows.reserve(table.samples.size());
    for (const AnnotationSet& s : table.samples) rows.push_back(s.categories.at(category_index));
    return encode_batch(rows, h);
}

}  // namespace hml
