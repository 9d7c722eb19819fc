#pragma once

#include <cmath>

#include "ahlp/problem.hpp"

namespace ahlp::schur {

struct HierarchyConfig {
    int layers = 1;                        // 1 = flat decomposition
    std::vector<index_t> top_partition;    // explicit top-level cut blocks (cut after block i); empty = auto
};

/// A node of the Schur hierarchy.
///  - flat: the single-layer decomposition; the corner carries every linking
///    row plus the dense part, children are the diagonal blocks.
///  - root: the dense layer over (globals, x_0, y_0); single child subtree.
///  - inner: owns the 2-link groups cut by its partition; children are subtrees.
///  - leaf: owns the 2-link groups internal to its block range; children are
///    the diagonal blocks themselves.
struct TreeNode {
    enum class Kind : std::uint8_t { flat, root, inner, leaf };
    Kind kind = Kind::leaf;
    index_t first_block = 1;
    index_t last_block = 0;
    std::vector<index_t> groups;   // 2-link pair indices owned by this node (ascending)
    std::vector<index_t> children; // node ids (root/inner); empty for leaf/flat
    index_t parent = -1;
    index_t depth = 0;

    index_t num_blocks() const { return last_block - first_block + 1; }
};

struct SchurTree {
    index_t num_blocks = 0;
    int layers = 1; // effective layer count
    std::vector<TreeNode> nodes;
    index_t root = 0;

    const TreeNode& node(index_t id) const { return nodes[static_cast<size_t>(id)]; }
    bool flat() const { return layers == 1; }
};

namespace detail {

inline index_t split_node(SchurTree& tree, index_t first, index_t last, int levels, index_t parent, index_t depth,
                          const std::vector<index_t>& explicit_cuts) {
    const index_t count = last - first + 1;
    index_t k = explicit_cuts.empty() ? static_cast<index_t>(std::llround(std::sqrt(static_cast<double>(count))))
                                      : static_cast<index_t>(explicit_cuts.size()) + 1;
    if (levels <= 0 || count < 2) k = 1;
    if (k <= 1 || k > count) {
        if (levels <= 0 || count < 2 || k > count) {
            TreeNode leaf;
            leaf.kind = TreeNode::Kind::leaf;
            leaf.first_block = first;
            leaf.last_block = last;
            for (index_t g = first; g < last; ++g) leaf.groups.push_back(g);
            leaf.parent = parent;
            leaf.depth = depth;
            tree.nodes.push_back(leaf);
            return static_cast<index_t>(tree.nodes.size()) - 1;
        }
        k = 1;
    }
    if (k == 1) {
        // degenerate split: skip the level entirely
        return split_node(tree, first, last, 0, parent, depth, {});
    }

    std::vector<index_t> cuts; // cut after block c (pair index c)
    if (!explicit_cuts.empty()) {
        cuts = explicit_cuts;
    } else {
        const index_t base = count / k, rem = count % k;
        index_t at = first - 1;
        for (index_t c = 0; c < k - 1; ++c) {
            at += base + (c < rem ? 1 : 0);
            cuts.push_back(at);
        }
    }
    for (index_t c : cuts)
        if (c < first || c >= last) throw invalid_argument_error("partition cut outside block range");

    TreeNode inner;
    inner.kind = TreeNode::Kind::inner;
    inner.first_block = first;
    inner.last_block = last;
    inner.groups = cuts;
    inner.parent = parent;
    inner.depth = depth;
    tree.nodes.push_back(inner);
    const index_t id = static_cast<index_t>(tree.nodes.size()) - 1;

    index_t a = first;
    for (index_t c = 0; c <= static_cast<index_t>(cuts.size()); ++c) {
        const index_t b = c < static_cast<index_t>(cuts.size()) ? cuts[static_cast<size_t>(c)] : last;
        const index_t child = split_node(tree, a, b, levels - 1, id, depth + 1, {});
        tree.nodes[static_cast<size_t>(id)].children.push_back(child);
        a = b + 1;
    }
    return id;
}

} // namespace detail

/// Builds the decomposition tree for a problem with `num_blocks` diagonal
/// blocks. layers = 1 yields the flat decomposition; layers >= 2 adds the
/// dense root layer and splits the inner system with fan-out ~ sqrt(children)
/// per level until blocks run out. The shape depends only on (N, config).
inline SchurTree build_hierarchy(const LinkClassification& cls, index_t num_blocks, const HierarchyConfig& cfg) {
    if (cfg.layers < 1) throw invalid_argument_error("layers must be >= 1");
    (void)cls; // the shape uses only N; group sizes attach at assembly time
    SchurTree tree;
    tree.num_blocks = num_blocks;
    const int layers = std::min(cfg.layers, 4);

    if (layers == 1) {
        TreeNode flat;
        flat.kind = TreeNode::Kind::flat;
        flat.first_block = 1;
        flat.last_block = num_blocks;
        for (index_t g = 1; g < num_blocks; ++g) flat.groups.push_back(g);
        flat.depth = 0;
        tree.nodes.push_back(flat);
        tree.root = 0;
        tree.layers = 1;
        return tree;
    }

    TreeNode root;
    root.kind = TreeNode::Kind::root;
    root.first_block = 1;
    root.last_block = num_blocks;
    root.depth = 0;
    tree.nodes.push_back(root);
    tree.root = 0;
    const index_t top = detail::split_node(tree, 1, num_blocks, layers - 1, 0, 1, cfg.top_partition);
    tree.nodes[0].children.push_back(top);

    // layer count: 1 for flat, otherwise 1 + deepest materialized split level
    // (the dense root of the two-layer degenerate case counts as the extra layer)
    index_t deepest_split = 0;
    for (const TreeNode& n : tree.nodes)
        if (n.kind == TreeNode::Kind::inner) deepest_split = std::max(deepest_split, n.depth);
    tree.layers = std::max(2, static_cast<int>(deepest_split) + 1);
    return tree;
}

// ---------------------------------------------------------------------------
// Rank assignment

/// Block and tree-node ownership for a given rank count. Blocks are distributed
/// in contiguous near-even ranges (remainder to the lowest ranks). Effective
/// node communicators honor the service constraint: a rank may serve several
/// systems of one layer only when those systems share one rank set. When the
/// natural owner set of a node conflicts, conflicted ranks are dropped and the
/// node's block work is re-homed within the remaining members.
struct Assignment {
    int num_ranks = 0;
    std::vector<index_t> block_owner;        // per block (index 0 unused): nominal owner
    std::vector<index_t> block_worker;       // per block: rank doing its factor work
    std::vector<std::vector<int>> node_comm; // per tree node: effective member ranks (ascending)
    std::vector<int> node_owner;             // per tree node: rank holding/factoring its complement
    bool fallback_applied = false;           // some rank was dropped from a natural comm

    bool rank_in(index_t node, int rank) const {
        const auto& m = node_comm[static_cast<size_t>(node)];
        return std::binary_search(m.begin(), m.end(), rank);
    }
};

inline Assignment assign(const SchurTree& tree, int num_ranks) {
    const index_t n = tree.num_blocks;
    if (num_ranks < 1) throw invalid_argument_error("assign: need at least one rank");
    if (num_ranks > n) throw invalid_argument_error("assign: at most one rank per block");

    Assignment a;
    a.num_ranks = num_ranks;
    a.block_owner.assign(static_cast<size_t>(n) + 1, 0);
    const index_t base = n / num_ranks, rem = n % num_ranks;
    index_t blk = 1;
    for (int r = 0; r < num_ranks; ++r) {
        const index_t take = base + (r < rem ? 1 : 0);
        for (index_t t = 0; t < take; ++t) a.block_owner[static_cast<size_t>(blk++)] = r;
    }
    a.block_worker = a.block_owner;

    a.node_comm.assign(tree.nodes.size(), {});
    a.node_owner.assign(tree.nodes.size(), 0);

    // nodes by depth, left to right (construction order is depth-first; sort by (depth, first_block))
    std::vector<index_t> order(tree.nodes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<index_t>(i);
    std::sort(order.begin(), order.end(), [&](index_t x, index_t y) {
        const TreeNode &nx = tree.node(x), &ny = tree.node(y);
        return nx.depth != ny.depth ? nx.depth < ny.depth : nx.first_block < ny.first_block;
    });

    std::map<std::pair<index_t, int>, std::vector<int>> joined; // (depth, rank) -> set of first joined system
    for (index_t id : order) {
        const TreeNode& node = tree.node(id);
        std::vector<int> natural;
        for (index_t b = node.first_block; b <= node.last_block; ++b)
            natural.push_back(static_cast<int>(a.block_owner[static_cast<size_t>(b)]));
        std::sort(natural.begin(), natural.end());
        natural.erase(std::unique(natural.begin(), natural.end()), natural.end());
        if (node.parent >= 0) {
            const auto& pset = a.node_comm[static_cast<size_t>(node.parent)];
            std::vector<int> inter;
            for (int r : natural)
                if (std::binary_search(pset.begin(), pset.end(), r)) inter.push_back(r);
            natural = std::move(inter);
            if (natural.empty()) natural.push_back(a.node_comm[static_cast<size_t>(node.parent)].front());
        }

        std::vector<int> eff = natural;
        for (;;) {
            std::vector<int> next;
            for (int r : eff) {
                auto it = joined.find({node.depth, r});
                if (it == joined.end() || it->second == eff) next.push_back(r);
            }
            if (next == eff) break;
            if (next.empty()) {
                // try a singleton a prior set permits, else force the first natural rank
                int pick = -1;
                for (int r : natural) {
                    auto it = joined.find({node.depth, r});
                    if (it == joined.end() || it->second == std::vector<int>{r}) {
                        pick = r;
                        break;
                    }
                }
                if (pick < 0) {
                    pick = natural.front();
                    a.fallback_applied = true;
                }
                next = {pick};
                eff = next;
                break;
            }
            eff = std::move(next);
        }
        if (eff != natural) a.fallback_applied = true;
        a.node_comm[static_cast<size_t>(id)] = eff;
        a.node_owner[static_cast<size_t>(id)] = eff.front();
        for (int r : eff) {
            auto it = joined.find({node.depth, r});
            if (it == joined.end()) joined.emplace(std::make_pair(node.depth, r), eff);
        }

        // leaf-level work distribution over the effective members
        if (node.children.empty()) {
            const index_t blocks = node.num_blocks();
            const index_t nb = static_cast<index_t>(eff.size());
            const index_t wbase = blocks / nb, wrem = blocks % nb;
            index_t at = node.first_block;
            for (index_t w = 0; w < nb; ++w) {
                const index_t take = wbase + (w < wrem ? 1 : 0);
                for (index_t t = 0; t < take; ++t)
                    a.block_worker[static_cast<size_t>(at++)] = eff[static_cast<size_t>(w)];
            }
        }
    }
    return a;
}

} // namespace ahlp::schur
