#include "hml/hierarchy.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "hml/errors.hpp"

namespace hml {

namespace {

std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Splits on '>' characters that have whitespace on both sides; a '>'
// embedded in a name ("High (>3m)") is left alone.
std::vector<std::string> split_path(std::string_view line) {
    std::vector<std::string> segments;
    std::size_t start = 0;
    for (std::size_t i = 1; i + 1 < line.size(); ++i) {
        if (line[i] == '>' &&
            std::isspace(static_cast<unsigned char>(line[i - 1])) &&
            std::isspace(static_cast<unsigned char>(line[i + 1]))) {
            segments.emplace_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    segments.emplace_back(trim(line.substr(start)));
    return segments;
}

struct BuildNode {
    std::string name;
    int parent;
    std::vector<int> children;  // in first-appearance order
};

}  // namespace

Hierarchy Hierarchy::parse(std::string_view text, const std::string& source_name) {
    std::vector<BuildNode> build;
    std::set<std::string> seen_lines;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        ++line_no;

        const std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;

        const std::string key(line);
        if (!seen_lines.insert(key).second)
            fail("duplicate-path", "duplicate path at line " + std::to_string(line_no) + ": " + key,
                 source_name, key);

        const std::vector<std::string> segments = split_path(line);
        for (const auto& seg : segments) {
            if (seg.empty())
                fail("orphan-path", "empty segment at line " + std::to_string(line_no) + ": " + key,
                     source_name, key);
        }

        if (build.empty()) build.push_back({segments[0], -1, {}});
        if (segments[0] != build[0].name)
            fail("orphan-path",
                 "path root '" + segments[0] + "' conflicts with category root '" + build[0].name + "'",
                 source_name, key);

        int cur = 0;
        for (std::size_t d = 1; d < segments.size(); ++d) {
            int next = -1;
            for (const int c : build[static_cast<std::size_t>(cur)].children) {
                if (build[static_cast<std::size_t>(c)].name == segments[d]) {
                    next = c;
                    break;
                }
            }
            if (next < 0) {
                next = static_cast<int>(build.size());
                build.push_back({segments[d], cur, {}});
                build[static_cast<std::size_t>(cur)].children.push_back(next);
            }
            cur = next;
        }
    }

    if (build.empty()) fail("empty-category", "no paths in hierarchy source", source_name);

    // Re-index to depth-first pre-order of first appearance.
    Hierarchy h;
    h.nodes_.reserve(build.size());
    std::vector<std::pair<int, int>> stack;  // (build index, parent pre-order index)
    stack.emplace_back(0, -1);
    while (!stack.empty()) {
        const auto [bi, parent] = stack.back();
        stack.pop_back();
        const int idx = static_cast<int>(h.nodes_.size());
        Node n;
        n.name = build[static_cast<std::size_t>(bi)].name;
        n.parent = parent;
        n.depth = parent < 0 ? 0 : h.nodes_[static_cast<std::size_t>(parent)].depth + 1;
        h.nodes_.push_back(std::move(n));
        if (parent >= 0) h.nodes_[static_cast<std::size_t>(parent)].children.push_back(idx);
        const auto& kids = build[static_cast<std::size_t>(bi)].children;
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.emplace_back(*it, idx);
    }

    for (int i = h.size() - 1; i >= 0; --i) {
        Node& n = h.nodes_[static_cast<std::size_t>(i)];
        n.subtree_size = 1;
        for (const int c : n.children) n.subtree_size += h.nodes_[static_cast<std::size_t>(c)].subtree_size;
    }
    return h;
}

Hierarchy Hierarchy::from_parents(std::span<const std::string> names, std::span<const int> parents) {
    if (names.empty() || names.size() != parents.size())
        fail("empty-category", "node and parent arrays must be non-empty and equal length");
    if (parents[0] != -1) fail("orphan-path", "node 0 must be the root (parent -1)");
    for (std::size_t i = 1; i < parents.size(); ++i) {
        if (parents[i] < 0 || static_cast<std::size_t>(parents[i]) >= i)
            fail("orphan-path", "parent of node " + std::to_string(i) + " must precede it");
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (std::size_t j = i + 1; j < names.size(); ++j) {
            if (parents[i] == parents[j] && names[i] == names[j])
                fail("duplicate-path", "sibling name collision: " + names[i]);
        }
    }

    Hierarchy h;
    h.nodes_.reserve(names.size());
    std::vector<std::vector<int>> kids(names.size());
    for (std::size_t i = 1; i < names.size(); ++i) kids[static_cast<std::size_t>(parents[i])].push_back(static_cast<int>(i));

    std::vector<std::pair<int, int>> stack;
    stack.emplace_back(0, -1);
    while (!stack.empty()) {
        const auto [old_i, parent] = stack.back();
        stack.pop_back();
        const int idx = static_cast<int>(h.nodes_.size());
        Node n;
        n.name = names[static_cast<std::size_t>(old_i)];
        n.parent = parent;
        n.depth = parent < 0 ? 0 : h.nodes_[static_cast<std::size_t>(parent)].depth + 1;
        h.nodes_.push_back(std::move(n));
        if (parent >= 0) h.nodes_[static_cast<std::size_t>(parent)].children.push_back(idx);
        const auto& ks = kids[static_cast<std::size_t>(old_i)];
        for (auto it = ks.rbegin(); it != ks.rend(); ++it) stack.emplace_back(*it, idx);
    }
    for (int i = h.size() - 1; i >= 0; --i) {
        Node& n = h.nodes_[static_cast<std::size_t>(i)];
        n.subtree_size = 1;
        for (const int c : n.children) n.subtree_size += h.nodes_[static_cast<std::size_t>(c)].subtree_size;
    }
    return h;
}

int Hierarchy::max_depth() const {
    int d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
}

std::optional<int> Hierarchy::resolve_path(std::string_view path) const {
    const std::vector<std::string> segments = split_path(trim(path));
    if (segments.empty() || segments[0] != category()) return std::nullopt;
    int cur = 0;
    for (std::size_t d = 1; d < segments.size(); ++d) {
        int next = -1;
        for (const int c : node(cur).children) {
            if (node(c).name == segments[d]) {
                next = c;
                break;
            }
        }
        if (next < 0) return std::nullopt;
        cur = next;
    }
    return cur;
}

std::string Hierarchy::path_of(int i) const {
    if (i < 0 || i >= size()) fail("invalid-index", "node index out of range: " + std::to_string(i));
    std::vector<int> chain;
    for (int v = i; v >= 0; v = node(v).parent) chain.push_back(v);
    std::string out;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        if (!out.empty()) out += " > ";
        out += node(*it).name;
    }
    return out;
}

BitVec Hierarchy::closure(const BitVec& bits) const {
    if (bits.size() != static_cast<std::size_t>(size()))
        fail("invalid-index", "bit-string length does not match node count");
    BitVec out = bits;
    // Children have larger indices than parents, so one reverse sweep
    // propagates set bits all the way to the root.
    for (int i = size() - 1; i > 0; --i) {
        if (out[static_cast<std::size_t>(i)]) out[static_cast<std::size_t>(node(i).parent)] = 1;
    }
    return out;
}

std::vector<int> Hierarchy::closure(std::span<const int> nodes) const {
    BitVec bits(static_cast<std::size_t>(size()), 0);
    for (const int v : nodes) {
        if (v < 0 || v >= size()) fail("invalid-index", "node index out of range: " + std::to_string(v));
        bits[static_cast<std::size_t>(v)] = 1;
    }
    bits = closure(bits);
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
        if (bits[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
}

std::vector<int> Hierarchy::depth_histogram() const {
    std::vector<int> hist(static_cast<std::size_t>(max_depth()) + 1, 0);
    for (const auto& n : nodes_) ++hist[static_cast<std::size_t>(n.depth)];
    return hist;
}

std::string Hierarchy::serialize() const {
    std::ostringstream out;
    for (int i = 0; i < size(); ++i) out << path_of(i) << '\n';
    return out.str();
}

DescendantMatrix::DescendantMatrix(const Hierarchy& h) : n_(h.size()) {
    entries_.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_), 0);
    end_.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) {
        const int e = h.subtree_end(i);
        end_[static_cast<std::size_t>(i)] = e;
        for (int j = i; j < e; ++j)
            entries_[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j)] = 1;
    }
}

}  // namespace hml
