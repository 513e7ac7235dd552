#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hml/types.hpp"

namespace hml {

struct Node {
    std::string name;
    int parent = -1;  // -1 for the root
    int depth = 0;
    int subtree_size = 1;
    std::vector<int> children;
};

// A rooted category tree. Node indices are depth-first pre-order (children
// ordered by first appearance in the source), so the subtree of node i is
// the contiguous index range [i, i + subtree_size(i)). The root is index 0
// and its name doubles as the category name. Immutable once built.
class Hierarchy {
public:
    // One full root-to-node path per line, segments separated by " > "
    // (a '>' with whitespace on both sides; a '>' embedded in a name, as in
    // "High (>3m)", is not a separator). '#'-lines and blank lines are
    // ignored. Errors: empty-category, duplicate-path, orphan-path.
    static Hierarchy parse(std::string_view text, const std::string& source_name = "<text>");

    // Programmatic construction from parallel name/parent arrays with
    // parent[i] < i and parent[0] == -1; nodes are re-indexed to pre-order.
    static Hierarchy from_parents(std::span<const std::string> names,
                                  std::span<const int> parents);

    const std::string& category() const { return nodes_[0].name; }
    int size() const { return static_cast<int>(nodes_.size()); }
    const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    const std::vector<Node>& nodes() const { return nodes_; }
    int root() const { return 0; }
    bool is_leaf(int i) const { return node(i).children.empty(); }
    int max_depth() const;

    // End of the pre-order subtree range of i.
    int subtree_end(int i) const { return i + node(i).subtree_size; }

    // Resolves a " > "-separated full path to a node index.
    std::optional<int> resolve_path(std::string_view path) const;
    std::string path_of(int i) const;

    // Ancestor closure: the input plus every ancestor of every input node.
    BitVec closure(const BitVec& bits) const;
    std::vector<int> closure(std::span<const int> nodes) const;  // sorted, deduplicated

    // Number of nodes per depth, indexed by depth.
    std::vector<int> depth_histogram() const;

    // One full path line per node in index order; parse() of the result
    // reproduces the same node set and indices.
    std::string serialize() const;

private:
    Hierarchy() = default;
    std::vector<Node> nodes_;
};

// Binary reachability matrix R with a_ij = 1 iff node j is node i or a
// descendant of node i. With pre-order indices each row is the contiguous
// range [i, subtree_end(i)).
class DescendantMatrix {
public:
    explicit DescendantMatrix(const Hierarchy& h);

    int size() const { return n_; }
    std::uint8_t at(int i, int j) const {
        return entries_[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) +
                        static_cast<std::size_t>(j)];
    }
    int subtree_end(int i) const { return end_[static_cast<std::size_t>(i)]; }
    const std::vector<std::uint8_t>& entries() const { return entries_; }

private:
    int n_ = 0;
    std::vector<std::uint8_t> entries_;
    std::vector<int> end_;
};

}  // namespace hml
