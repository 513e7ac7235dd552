#pragma once

#include <span>
#include <string>
#include <vector>

#include "hml/hierarchy.hpp"
#include "hml/types.hpp"

namespace hml {

// One sample's labels for one category. `targets` is ancestor-closed and
// never overlaps `mask`; an absent category has every bit masked.
struct CategoryAnnotation {
    bool present = false;
    BitVec targets;
    BitVec mask;
};

// Samples in dataset order, categories aligned with the hierarchy list the
// table was built against.
struct AnnotationSet {
    std::string sample_id;
    std::vector<CategoryAnnotation> categories;
};

struct AnnotationTable {
    std::vector<std::string> category_names;
    std::vector<AnnotationSet> samples;
};

bool is_ancestor_closed(const Hierarchy& h, const BitVec& bits);

// Positive nodes with no positive child; the terminal of each component path.
std::vector<int> terminal_positives(const Hierarchy& h, const BitVec& targets);

// Unannotated strict descendants of every non-leaf terminal positive. All
// other non-positive bits are negatives and stay unmasked.
BitVec derive_mask(const Hierarchy& h, const BitVec& targets);

// Empty path list means the category is absent: all bits masked.
CategoryAnnotation parse_annotation(const Hierarchy& h, std::span<const std::string> paths);

// Full path strings of the terminal positives, in node-index order.
std::vector<std::string> to_paths(const Hierarchy& h, const BitVec& targets);

struct EncodedCategory {
    BitMatrix targets;
    BitMatrix mask;
};

EncodedCategory encode_batch(std::span<const CategoryAnnotation> rows, const Hierarchy& h);

// Convenience: encode column `category_index` of a table.
EncodedCategory encode_category(const AnnotationTable& table, std::size_t category_index,
                                const Hierarchy& h);

}  // namespace hml
