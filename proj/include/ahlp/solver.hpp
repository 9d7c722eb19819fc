#pragma once

#include "ahlp/ipm.hpp"
#include "ahlp/kkt.hpp"
#include "ahlp/tree.hpp"

namespace ahlp::schur {

struct SolverConfig {
    double reg_primal = 1e-10;
    double reg_dual = 1e-10;
    double reg_cap = 1e-6;
    double pivot_threshold = 0.01;
    double drop_tol = 1e-12;            // pattern-restricted accumulation threshold
    double dense_density = 0.25;        // flat complement switches to dense above this
    index_t batch_width = 64;
};

namespace detail {

struct ScopedTimer {
    double& acc;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    explicit ScopedTimer(double& a) : acc(a) {}
    ~ScopedTimer() { acc += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

} // namespace detail

/// Distributed structured solver for the permuted augmented system: the flat
/// single-complement decomposition when the tree is flat, the multi-layer
/// decomposition with a dense root otherwise. Runs SPMD over the ranks of the
/// assignment; all floating-point reductions fold in a canonical block order,
/// so factors and solutions are bitwise independent of the rank count.
class StructuredKkt : public ipm::KktSolver {
public:
    StructuredKkt(runtime::RankContext& ctx, const StandardArrowhead& sp, const LinkClassification& cls,
                  const SchurTree& tree, const Assignment& asg, SolverConfig cfg = {})
        : ctx_(ctx), sp_(sp), tree_(tree), asg_(asg), cfg_(cfg) {
        me_ = ctx.rank();
        layout_ = make_corner_layout(cls, sp.problem.num_linking_vars(), sp.problem.blocks[0].num_eq);
        pattern_ = predict_sparsity(cls, layout_.num_x0, layout_.num_y0);
        corner_self_ = build_corner_system(sp, layout_);
        world_ = ctx.world();

        nodes_.resize(tree.nodes.size());
        for (index_t id = 0; id < static_cast<index_t>(tree.nodes.size()); ++id) init_node(id);

        for (index_t b = 1; b <= tree.num_blocks; ++b)
            if (asg.block_worker[static_cast<size_t>(b)] == me_) {
                BlockState bs;
                bs.sys = build_block_system(sp, layout_, b);
                blocks_.emplace(b, std::move(bs));
            }
        for (auto& [b, bs] : blocks_) {
            // border slices for every ancestor node of the block's leaf
            index_t id = leaf_of_block(b);
            while (id >= 0) {
                bs.border_at.emplace(id, slice_columns(bs.sys.border, nodes_[static_cast<size_t>(id)].corner_flat));
                id = tree_.node(id).parent;
            }
        }
    }

    const SchurPattern& pattern() const { return pattern_; }
    const CornerLayout& layout() const { return layout_; }

    /// Assembled complement of a node as lower-triangle triplets in node-local
    /// indices (owner rank only; empty elsewhere). Exposed for equivalence and
    /// determinism tests.
    const std::vector<Entry>& assembled_complement(index_t node) const {
        return nodes_[static_cast<size_t>(node)].s_entries;
    }

    void update_and_factor(const std::map<index_t, std::vector<double>>& sigma) override {
        sigma0_ = sigma.at(0);
        exchange_sigma(sigma);
        for (index_t id = static_cast<index_t>(tree_.nodes.size()) - 1; id >= 0; --id) {
            if (!nodes_[static_cast<size_t>(id)].member) continue;
            if (tree_.node(id).children.empty())
                factor_leaf(id);
            else
                factor_inner(id);
        }
    }

    void solve_in_place(ipm::BlockVec& rhs) override {
        WorkVec v;
        gather_rhs(rhs, v);
        node_solve(tree_.root, v);
        scatter_solution(rhs, v);
    }

    void collect_stats(SchurStats& stats, PhaseTimes& times) override {
        times.factor += times_.factor;
        times.reduce += times_.reduce;
        times.corner_solve += times_.corner_solve;
        times.back_substitution += times_.back_substitution;

        using Tagged = std::vector<std::pair<index_t, NodeStat>>;
        Tagged local;
        for (index_t id = 0; id < static_cast<index_t>(nodes_.size()); ++id)
            if (nodes_[static_cast<size_t>(id)].member && nodes_[static_cast<size_t>(id)].is_owner)
                local.push_back({id, nodes_[static_cast<size_t>(id)].stat});
        Tagged all = world_.allreduce(std::move(local), [](Tagged a, Tagged b) {
            for (auto& e : b) a.push_back(std::move(e));
            return a;
        });
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        stats.nodes.clear();
        for (auto& [id, st] : all) stats.nodes.push_back(st);
        const index_t top = tree_.root;
        for (const NodeStat& st : stats.nodes)
            if (st.node == top) {
                stats.corner_dim = st.dim;
                stats.corner_nnz = st.nnz;
                stats.dense_root = st.dense;
                stats.density = st.dim > 0 ? static_cast<double>(st.nnz) / (static_cast<double>(st.dim) * st.dim) : 0.0;
            }
        stats.predicted_bound = pattern_.bound;
    }

private:
    struct BlockState {
        BlockSystem sys;
        linalg::Factorization fact;
        std::map<index_t, CscMatrix> border_at; // per ancestor node: border over that node's corner
    };

    struct NodeState {
        bool member = false;
        bool is_owner = false;
        runtime::Comm comm;
        int owner_local = 0;
        std::vector<index_t> corner_flat;   // node corner positions in the flat layout
        std::vector<index_t> corner_group;  // position in the node's group list per corner entry (-1: dense part)
        std::vector<index_t> group_sizes;   // per owned group
        index_t dim = 0;
        std::vector<index_t> my_blocks;     // blocks I work inside this node's range
        std::vector<index_t> my_children;   // children whose comm I belong to
        std::vector<index_t> my_descendants; // member nodes in the subtree (excluding this node)
        std::vector<std::vector<char>> child_col_used; // per child: corner columns with support
        bool dense_mode = false;
        linalg::Factorization sparse_fact;
        DenseFactorization dense_fact;
        std::vector<Entry> s_entries; // assembled complement, owner only
        NodeStat stat;
    };

    struct WorkVec {
        std::map<index_t, std::vector<double>> blk;    // per worked block: length n_i + m_i
        std::map<index_t, std::vector<double>> corner; // per member node: node corner values
    };

    // ------------------------------------------------------------------ setup

    void init_node(index_t id) {
        const TreeNode& n = tree_.node(id);
        NodeState& ns = nodes_[static_cast<size_t>(id)];
        const auto& members = asg_.node_comm[static_cast<size_t>(id)];
        ns.member = std::binary_search(members.begin(), members.end(), me_);
        if (ns.member) {
            ns.comm = ctx_.split(members);
            const int owner = asg_.node_owner[static_cast<size_t>(id)];
            for (int i = 0; i < ns.comm.size(); ++i)
                if (ns.comm.member(i) == owner) ns.owner_local = i;
            ns.is_owner = owner == me_;
        }

        // corner composition in flat-layout positions
        if (n.kind == TreeNode::Kind::flat) {
            for (index_t p = 0; p < layout_.dim; ++p) {
                ns.corner_flat.push_back(p);
                ns.corner_group.push_back(-1);
            }
        } else {
            for (size_t gi = 0; gi < n.groups.size(); ++gi) {
                const index_t g = n.groups[gi];
                const index_t off = layout_.group_offset[static_cast<size_t>(g - 1)];
                const index_t len = layout_.group_size[static_cast<size_t>(g - 1)];
                ns.group_sizes.push_back(len);
                for (index_t t = 0; t < len; ++t) {
                    ns.corner_flat.push_back(off + t);
                    ns.corner_group.push_back(static_cast<index_t>(gi));
                }
            }
            if (n.kind == TreeNode::Kind::root)
                for (index_t p = layout_.globals_offset; p < layout_.dim; ++p) {
                    ns.corner_flat.push_back(p);
                    ns.corner_group.push_back(-1);
                }
        }
        ns.dim = static_cast<index_t>(ns.corner_flat.size());
        if (n.kind == TreeNode::Kind::flat)
            for (index_t g : n.groups) ns.group_sizes.push_back(layout_.group_size[static_cast<size_t>(g - 1)]);

        for (index_t b = n.first_block; b <= n.last_block; ++b)
            if (asg_.block_worker[static_cast<size_t>(b)] == me_) ns.my_blocks.push_back(b);
        for (index_t c : n.children)
            if (std::binary_search(asg_.node_comm[static_cast<size_t>(c)].begin(),
                                   asg_.node_comm[static_cast<size_t>(c)].end(), me_))
                ns.my_children.push_back(c);
        if (ns.member) collect_descendants(id, id, ns.my_descendants);

        // per child: which corner columns have structural support inside it
        for (index_t c : n.children) {
            const TreeNode& cn = tree_.node(c);
            std::vector<char> used(static_cast<size_t>(ns.dim), 0);
            for (size_t t = 0; t < ns.corner_flat.size(); ++t) {
                const index_t flat = ns.corner_flat[t];
                if (column_has_support(flat, cn.first_block, cn.last_block)) used[t] = 1;
            }
            ns.child_col_used.push_back(std::move(used));
        }
    }

    void collect_descendants(index_t root_id, index_t id, std::vector<index_t>& out) const {
        for (index_t c : tree_.node(id).children) {
            if (std::binary_search(asg_.node_comm[static_cast<size_t>(c)].begin(),
                                   asg_.node_comm[static_cast<size_t>(c)].end(), me_))
                out.push_back(c);
            collect_descendants(root_id, c, out);
        }
    }

    /// Structural support of a flat-corner column inside a block range: border
    /// entries of the blocks, or an F_0 entry of a 2-link group whose pair lies
    /// inside the range (its dual row then lives in the subtree).
    bool column_has_support(index_t flat, index_t first, index_t last) const {
        using R = CornerLayout::Region;
        const R reg = layout_.region(flat);
        if (reg == R::y0) return false;
        if (reg == R::local || reg == R::global) {
            for (index_t b = first; b <= last; ++b) {
                const BlockData& bd = sp_.problem.blocks[static_cast<size_t>(b)];
                for (const Entry& e : bd.link_eq.entries)
                    if (layout_.link_position[static_cast<size_t>(e.row)] == flat) return true;
            }
            return false;
        }
        // x_0 column: A_i entries, or F_0 entries of a group internal to the range
        const index_t col = flat - layout_.x0_offset;
        for (index_t b = first; b <= last; ++b) {
            const BlockData& bd = sp_.problem.blocks[static_cast<size_t>(b)];
            for (const Entry& e : bd.border_eq.entries)
                if (e.col == col) return true;
        }
        for (const Entry& e : sp_.problem.blocks[0].link_eq.entries) {
            if (e.col != col) continue;
            const index_t pos = layout_.link_position[static_cast<size_t>(e.row)];
            if (pos >= layout_.locals_total) continue;
            const index_t g = layout_.group_of(pos);
            if (g >= first && g < last) return true;
        }
        return false;
    }

    index_t leaf_of_block(index_t b) const {
        for (index_t id = 0; id < static_cast<index_t>(tree_.nodes.size()); ++id) {
            const TreeNode& n = tree_.node(id);
            if (n.children.empty() && n.first_block <= b && b <= n.last_block) return id;
        }
        throw invalid_argument_error("block outside every leaf");
    }

    static CscMatrix slice_columns(const CscMatrix& m, const std::vector<index_t>& cols) {
        SparseBlock out(m.rows, static_cast<index_t>(cols.size()));
        for (size_t t = 0; t < cols.size(); ++t) {
            const index_t j = cols[t];
            for (index_t p = m.col_ptr[static_cast<size_t>(j)]; p < m.col_ptr[static_cast<size_t>(j) + 1]; ++p)
                out.add(m.row_index[static_cast<size_t>(p)], static_cast<index_t>(t), m.values[static_cast<size_t>(p)]);
        }
        out.sort_canonical();
        return CscMatrix::from_block(out);
    }

    // ------------------------------------------------------------------ factorization

    void exchange_sigma(const std::map<index_t, std::vector<double>>& sigma) {
        for (index_t b = 1; b <= tree_.num_blocks; ++b) {
            const int owner = static_cast<int>(asg_.block_owner[static_cast<size_t>(b)]);
            const int worker = static_cast<int>(asg_.block_worker[static_cast<size_t>(b)]);
            if (owner == me_ && worker != me_) ctx_.send(worker, tag_sigma + b, sigma.at(b));
        }
        for (auto& [b, bs] : blocks_) {
            const int owner = static_cast<int>(asg_.block_owner[static_cast<size_t>(b)]);
            const std::vector<double>& s =
                owner == me_ ? sigma.at(b) : sigma_buf_[b] = ctx_.recv<std::vector<double>>(owner, tag_sigma + b);
            set_sigma(bs.sys, s);
        }
    }

    linalg::Regularization node_reg(const NodeState& ns) const {
        linalg::Regularization reg;
        reg.primal = cfg_.reg_primal;
        reg.dual = cfg_.reg_dual;
        reg.escalation_cap = cfg_.reg_cap;
        reg.kinds.resize(static_cast<size_t>(ns.dim));
        for (size_t t = 0; t < ns.corner_flat.size(); ++t)
            reg.kinds[t] = layout_.region(ns.corner_flat[t]) == CornerLayout::Region::x0 ? linalg::RowKind::primal
                                                                                         : linalg::RowKind::dual;
        return reg;
    }

    /// Self entries of a node corner: the K_0 rows/columns that fall inside it
    /// (flat: all; root: the dense layer; leaf/inner: none).
    std::vector<Entry> node_self_entries(const NodeState& ns, const TreeNode& n) const {
        std::vector<Entry> out;
        if (n.kind != TreeNode::Kind::flat && n.kind != TreeNode::Kind::root) return out;
        std::vector<index_t> flat_to_local(static_cast<size_t>(layout_.dim), -1);
        for (size_t t = 0; t < ns.corner_flat.size(); ++t) flat_to_local[static_cast<size_t>(ns.corner_flat[t])] = static_cast<index_t>(t);
        const SymSparseMatrix& k0 = corner_self_.kmat;
        for (index_t j = 0; j < k0.order; ++j) {
            const index_t lj = flat_to_local[static_cast<size_t>(j)];
            if (lj < 0) continue;
            for (index_t p = k0.col_ptr[static_cast<size_t>(j)]; p < k0.col_ptr[static_cast<size_t>(j) + 1]; ++p) {
                const index_t i = k0.row_index[static_cast<size_t>(p)];
                const index_t li = flat_to_local[static_cast<size_t>(i)];
                if (li < 0) continue;
                double v = k0.values[static_cast<size_t>(p)];
                if (i == j && layout_.region(i) == CornerLayout::Region::x0)
                    v = sigma0_[static_cast<size_t>(i - layout_.x0_offset)];
                out.push_back({std::max(li, lj), std::min(li, lj), v});
            }
        }
        return out;
    }

    using Contribution = std::vector<std::pair<index_t, std::vector<Entry>>>; // (tag, node-local entries)

    std::vector<Entry> block_contribution(BlockState& bs, const CscMatrix& border) {
        std::vector<index_t> nz;
        for (index_t j = 0; j < border.cols; ++j)
            if (border.col_ptr[static_cast<size_t>(j)] < border.col_ptr[static_cast<size_t>(j) + 1]) nz.push_back(j);
        std::vector<Entry> out;
        if (nz.empty()) return out;
        const index_t width = std::max<index_t>(1, std::min(cfg_.batch_width, static_cast<index_t>(nz.size())));
        for (size_t j0 = 0; j0 < nz.size(); j0 += static_cast<size_t>(width)) {
            const size_t j1 = std::min(nz.size(), j0 + static_cast<size_t>(width));
            linalg::DenseColumns rhs(border.rows, static_cast<index_t>(j1 - j0));
            for (size_t t = j0; t < j1; ++t) {
                double* col = rhs.col(static_cast<index_t>(t - j0));
                const index_t j = nz[t];
                for (index_t p = border.col_ptr[static_cast<size_t>(j)]; p < border.col_ptr[static_cast<size_t>(j) + 1]; ++p)
                    col[border.row_index[static_cast<size_t>(p)]] = border.values[static_cast<size_t>(p)];
            }
            linalg::DenseColumns z = linalg::solve_multi(bs.fact, rhs, cfg_.batch_width);
            for (size_t t = j0; t < j1; ++t) {
                const index_t j = nz[t];
                const double* zj = z.col(static_cast<index_t>(t - j0));
                for (index_t q : nz) {
                    if (q < j) continue;
                    double dot = 0.0;
                    for (index_t p = border.col_ptr[static_cast<size_t>(q)]; p < border.col_ptr[static_cast<size_t>(q) + 1]; ++p)
                        dot += border.values[static_cast<size_t>(p)] * zj[border.row_index[static_cast<size_t>(p)]];
                    out.push_back({q, j, dot});
                }
            }
        }
        std::sort(out.begin(), out.end(),
                  [](const Entry& a, const Entry& b) { return a.col != b.col ? a.col < b.col : a.row < b.row; });
        return out;
    }

    void assemble_and_factor(index_t id) {
        NodeState& ns = nodes_[static_cast<size_t>(id)];
        const TreeNode& n = tree_.node(id);
        // contributions were reduced into pending_ on the owner
        if (!ns.is_owner) {
            pending_.clear();
            return;
        }
        detail::ScopedTimer timer(times_.factor);
        const index_t dim = ns.dim;
        DenseSymMatrix acc(dim);
        std::vector<char> touched(static_cast<size_t>(dim) * static_cast<size_t>(std::max<index_t>(dim, 1)), 0);
        auto touch = [&](index_t r, index_t c, double v, bool subtract) {
            acc.at(r, c) += subtract ? -v : v;
            touched[static_cast<size_t>(r) * static_cast<size_t>(dim) + static_cast<size_t>(c)] = 1;
        };
        for (const Entry& e : node_self_entries(ns, n)) touch(e.row, e.col, e.value, false);

        // predicted pattern: Observation-style for a full corner, block
        // tridiagonal over the node's own group sequence for inner/leaf bands
        const bool band_node = n.kind == TreeNode::Kind::inner || n.kind == TreeNode::Kind::leaf;
        auto in_pattern = [&](index_t li, index_t lj) {
            if (band_node) {
                const index_t gi = ns.corner_group[static_cast<size_t>(li)];
                const index_t gj = ns.corner_group[static_cast<size_t>(lj)];
                return std::abs(gi - gj) <= 1;
            }
            return pattern_.contains(ns.corner_flat[static_cast<size_t>(li)], ns.corner_flat[static_cast<size_t>(lj)]);
        };
        std::sort(pending_.begin(), pending_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [tag, entries] : pending_) {
            for (const Entry& e : entries) {
                if (!in_pattern(e.row, e.col)) {
                    if (std::abs(e.value) > cfg_.drop_tol)
                        throw structure_error("complement fill outside the predicted pattern at node " +
                                              std::to_string(id));
                    continue;
                }
                touch(e.row, e.col, e.value, true);
            }
        }
        pending_.clear();

        // assembled entries & counts
        ns.s_entries.clear();
        index_t nnz_full = 0;
        for (index_t r = 0; r < dim; ++r)
            for (index_t c = 0; c <= r; ++c)
                if (touched[static_cast<size_t>(r) * static_cast<size_t>(dim) + static_cast<size_t>(c)]) {
                    ns.s_entries.push_back({r, c, acc.at(r, c)});
                    if (acc.at(r, c) != 0.0) nnz_full += r == c ? 1 : 2;
                }

        const double density =
            dim > 0 ? static_cast<double>(nnz_full) / (static_cast<double>(dim) * static_cast<double>(dim)) : 0.0;
        bool dense = n.kind == TreeNode::Kind::root || (n.kind == TreeNode::Kind::flat && density >= cfg_.dense_density);
        ns.dense_mode = dense;

        ns.stat.node = id;
        ns.stat.kind = n.kind == TreeNode::Kind::flat   ? "flat"
                       : n.kind == TreeNode::Kind::root ? "root"
                       : n.kind == TreeNode::Kind::inner ? "inner"
                                                          : "leaf";
        ns.stat.dim = dim;
        ns.stat.nnz = nnz_full;
        ns.stat.dense = dense;
        if (n.kind == TreeNode::Kind::root) {
            const std::uint64_t d = static_cast<std::uint64_t>(dim);
            ns.stat.bound = d * d;
        } else if (n.kind == TreeNode::Kind::flat) {
            ns.stat.bound = pattern_.bound;
        } else {
            ns.stat.bound = band_bound(ns.group_sizes);
        }

        const auto t0 = std::chrono::steady_clock::now();
        if (dense) {
            double ep = cfg_.reg_primal, ed = cfg_.reg_dual;
            for (;;) {
                DenseSymMatrix m(dim);
                for (const Entry& e : ns.s_entries) m.at(e.row, e.col) = e.value;
                for (index_t r = 0; r < dim; ++r)
                    m.at(r, r) += layout_.region(ns.corner_flat[static_cast<size_t>(r)]) == CornerLayout::Region::x0
                                      ? -ep
                                      : ed;
                try {
                    ns.dense_fact = dense_factor(m);
                    break;
                } catch (const singular_error&) {
                    const double next = std::max(ep, ed) == 0.0 ? 1e-10 : std::max(ep, ed) * 2.0;
                    if (cfg_.reg_cap > 0.0 && next <= cfg_.reg_cap) {
                        ep = ed = next;
                        continue;
                    }
                    throw;
                }
            }
        } else {
            SymSparseMatrix s = SymSparseMatrix::from_triplets(dim, ns.s_entries);
            linalg::FactorOptions fo;
            fo.pivot_threshold = cfg_.pivot_threshold;
            ns.sparse_fact = linalg::Factorization::compute(s, node_reg(ns), fo);
        }
        ns.stat.factor_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    void reduce_contributions(NodeState& ns, Contribution local) {
        detail::ScopedTimer timer(times_.reduce);
        auto merged = ns.comm.reduce(std::move(local),
                                     [](Contribution a, Contribution b) {
                                         for (auto& e : b) a.push_back(std::move(e));
                                         return a;
                                     },
                                     ns.owner_local);
        if (merged) pending_ = std::move(*merged);
    }

    void factor_leaf(index_t id) {
        NodeState& ns = nodes_[static_cast<size_t>(id)];
        Contribution contrib;
        {
            detail::ScopedTimer timer(times_.factor);
            for (index_t b : ns.my_blocks) {
                BlockState& bs = blocks_.at(b);
                linalg::Regularization reg;
                reg.primal = cfg_.reg_primal;
                reg.dual = cfg_.reg_dual;
                reg.escalation_cap = cfg_.reg_cap;
                reg.kinds = bs.sys.kinds;
                linalg::FactorOptions fo;
                fo.pivot_threshold = cfg_.pivot_threshold;
                fo.order_hint = &bs.sys.fill_order;
                try {
                    bs.fact = linalg::Factorization::compute(bs.sys.kmat, reg, fo);
                } catch (const singular_error& e) {
                    throw singular_error(e.pivot(), "block " + std::to_string(b) + ": " + e.what());
                }
                contrib.push_back({b, block_contribution(bs, bs.border_at.at(id))});
            }
        }
        reduce_contributions(ns, std::move(contrib));
        assemble_and_factor(id);
    }

    void factor_inner(index_t id) {
        NodeState& ns = nodes_[static_cast<size_t>(id)];
        const TreeNode& n = tree_.node(id);
        Contribution contrib;
        for (size_t ci = 0; ci < n.children.size(); ++ci) {
            const index_t child = n.children[ci];
            if (!std::binary_search(asg_.node_comm[static_cast<size_t>(child)].begin(),
                                    asg_.node_comm[static_cast<size_t>(child)].end(), me_))
                continue;
            const std::vector<char>& used = ns.child_col_used[ci];
            for (index_t j = 0; j < ns.dim; ++j) {
                if (!used[static_cast<size_t>(j)]) continue;
                WorkVec w;
                fill_border_column(id, child, j, w);
                node_solve(child, w);
                append_column_contribution(id, child, j, w, contrib);
            }
        }
        reduce_contributions(ns, std::move(contrib));
        assemble_and_factor(id);
    }

    /// rhs = column j of the node border restricted to the child's subtree:
    /// block border entries plus, for x_0 columns, the F_0 entries of 2-link
    /// rows whose dual lives inside the subtree.
    void fill_border_column(index_t id, index_t child, index_t j, WorkVec& w) {
        const TreeNode& cn = tree_.node(child);
        for (index_t b : nodes_[static_cast<size_t>(child)].my_blocks)
            w.blk[b].assign(static_cast<size_t>(blocks_.at(b).sys.order()), 0.0);
        for (index_t b : nodes_[static_cast<size_t>(child)].my_blocks) {
            const CscMatrix& border = blocks_.at(b).border_at.at(id);
            for (index_t p = border.col_ptr[static_cast<size_t>(j)]; p < border.col_ptr[static_cast<size_t>(j) + 1]; ++p)
                w.blk[b][static_cast<size_t>(border.row_index[static_cast<size_t>(p)])] = border.values[static_cast<size_t>(p)];
        }
        // corner segments of the subtree (including the child itself)
        std::vector<index_t> subtree = nodes_[static_cast<size_t>(child)].my_descendants;
        if (nodes_[static_cast<size_t>(child)].member) subtree.push_back(child);
        const index_t flat = nodes_[static_cast<size_t>(id)].corner_flat[static_cast<size_t>(j)];
        const bool x0col = layout_.region(flat) == CornerLayout::Region::x0;
        for (index_t d : subtree) {
            NodeState& ds = nodes_[static_cast<size_t>(d)];
            auto& seg = w.corner[d];
            seg.assign(static_cast<size_t>(ds.dim), 0.0);
            if (!x0col) continue;
            const index_t col = flat - layout_.x0_offset;
            for (const Entry& e : sp_.problem.blocks[0].link_eq.entries) {
                if (e.col != col) continue;
                const index_t pos = layout_.link_position[static_cast<size_t>(e.row)];
                for (size_t t = 0; t < ds.corner_flat.size(); ++t)
                    if (ds.corner_flat[t] == pos) seg[t] = e.value;
            }
        }
        (void)cn;
    }

    void append_column_contribution(index_t id, index_t child, index_t j, WorkVec& w, Contribution& contrib) {
        for (index_t b : nodes_[static_cast<size_t>(child)].my_blocks) {
            const CscMatrix& border = blocks_.at(b).border_at.at(id);
            std::vector<Entry> entries;
            for (index_t q = j; q < border.cols; ++q) {
                if (border.col_ptr[static_cast<size_t>(q)] == border.col_ptr[static_cast<size_t>(q) + 1]) continue;
                double dot = 0.0;
                for (index_t p = border.col_ptr[static_cast<size_t>(q)]; p < border.col_ptr[static_cast<size_t>(q) + 1]; ++p)
                    dot += border.values[static_cast<size_t>(p)] * w.blk[b][static_cast<size_t>(border.row_index[static_cast<size_t>(p)])];
                entries.push_back({q, j, dot});
            }
            if (!entries.empty()) contrib.push_back({b, std::move(entries)});
        }
        // group-row couplings (root only): F_0^T restricted to subtree groups
        std::vector<index_t> subtree = nodes_[static_cast<size_t>(child)].my_descendants;
        if (nodes_[static_cast<size_t>(child)].member) subtree.push_back(child);
        for (index_t d : subtree) {
            NodeState& ds = nodes_[static_cast<size_t>(d)];
            if (!ds.is_owner || ds.dim == 0) continue;
            std::vector<Entry> entries;
            for (size_t t = 0; t < ds.corner_flat.size(); ++t) {
                const index_t pos = ds.corner_flat[t];
                // row `pos` of F_0 couples x_0 columns of the parent corner
                for (const Entry& e : sp_.problem.blocks[0].link_eq.entries) {
                    if (layout_.link_position[static_cast<size_t>(e.row)] != pos) continue;
                    const index_t q = local_index(id, layout_.x0_offset + e.col);
                    if (q < 0 || q < j) continue;
                    entries.push_back({q, j, e.value * w.corner[d][t]});
                }
            }
            if (!entries.empty()) {
                std::sort(entries.begin(), entries.end(),
                          [](const Entry& a, const Entry& b) { return a.row < b.row; });
                contrib.push_back({tree_.num_blocks + 1 + d, std::move(entries)});
            }
        }
    }

    index_t local_index(index_t id, index_t flat) const {
        const auto& cf = nodes_[static_cast<size_t>(id)].corner_flat;
        for (size_t t = 0; t < cf.size(); ++t)
            if (cf[t] == flat) return static_cast<index_t>(t);
        return -1;
    }

    // ------------------------------------------------------------------ solves

    std::vector<double> complement_solve(NodeState& ns, std::vector<double> rhs) {
        detail::ScopedTimer timer(times_.corner_solve);
        if (ns.dense_mode)
            ns.dense_fact.solve_in_place(rhs);
        else if (ns.dim > 0)
            ns.sparse_fact.solve_in_place(rhs);
        return rhs;
    }

    void node_solve(index_t id, WorkVec& v) {
        NodeState& ns = nodes_[static_cast<size_t>(id)];
        const TreeNode& n = tree_.node(id);
        if (n.children.empty()) {
            leaf_solve(id, v);
            return;
        }

        // Alg. 3 over child subtrees: solve, reduce the corner rhs, solve the
        // complement at the owner, scatter, update and solve again.
        std::map<index_t, std::vector<double>> orig_blk;
        std::map<index_t, std::vector<double>> orig_corner;
        for (index_t b : ns.my_blocks) orig_blk[b] = v.blk.at(b);
        for (index_t d : ns.my_descendants) orig_corner[d] = v.corner.at(d);

        for (index_t c : ns.my_children) node_solve(c, v);

        using TaggedVecs = std::vector<std::pair<index_t, std::vector<double>>>;
        TaggedVecs partial;
        for (index_t b : ns.my_blocks) {
            std::vector<double> dot(static_cast<size_t>(ns.dim), 0.0);
            blocks_.at(b).border_at.at(id).multiply_transpose_add(v.blk.at(b), dot);
            partial.push_back({b, std::move(dot)});
        }
        for (index_t d : ns.my_descendants) {
            NodeState& ds = nodes_[static_cast<size_t>(d)];
            if (!ds.is_owner || ds.dim == 0) continue;
            std::vector<double> dot(static_cast<size_t>(ns.dim), 0.0);
            bool any = false;
            for (size_t t = 0; t < ds.corner_flat.size(); ++t) {
                const index_t pos = ds.corner_flat[t];
                for (const Entry& e : sp_.problem.blocks[0].link_eq.entries) {
                    if (layout_.link_position[static_cast<size_t>(e.row)] != pos) continue;
                    const index_t q = local_index(id, layout_.x0_offset + e.col);
                    if (q < 0) continue;
                    dot[static_cast<size_t>(q)] += e.value * v.corner.at(d)[t];
                    any = true;
                }
            }
            if (any) partial.push_back({tree_.num_blocks + 1 + d, std::move(dot)});
        }

        std::vector<double> u;
        {
            detail::ScopedTimer timer(times_.reduce);
            auto merged = ns.comm.reduce(std::move(partial),
                                         [](TaggedVecs a, TaggedVecs b) {
                                             for (auto& e : b) a.push_back(std::move(e));
                                             return a;
                                         },
                                         ns.owner_local);
            if (merged) {
                std::sort(merged->begin(), merged->end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });
                std::vector<double> bhat = v.corner.at(id);
                for (const auto& [tag, vec] : *merged)
                    for (size_t t = 0; t < vec.size(); ++t) bhat[t] -= vec[t];
                u = complement_solve(ns, std::move(bhat));
            }
            u = ns.comm.scatter(ns.owner_local, u);
        }
        v.corner.at(id) = u;

        {
            detail::ScopedTimer timer(times_.back_substitution);
            for (index_t b : ns.my_blocks) {
                v.blk.at(b) = orig_blk.at(b);
                blocks_.at(b).border_at.at(id).multiply_add(u, v.blk.at(b), -1.0);
            }
            for (index_t d : ns.my_descendants) {
                NodeState& ds = nodes_[static_cast<size_t>(d)];
                auto& seg = v.corner.at(d);
                seg = orig_corner.at(d);
                // F_0 coupling of the subtree's 2-link rows to the x_0 part of u
                for (size_t t = 0; t < ds.corner_flat.size(); ++t) {
                    const index_t pos = ds.corner_flat[t];
                    if (layout_.region(pos) != CornerLayout::Region::local) continue;
                    for (const Entry& e : sp_.problem.blocks[0].link_eq.entries) {
                        if (layout_.link_position[static_cast<size_t>(e.row)] != pos) continue;
                        const index_t q = local_index(id, layout_.x0_offset + e.col);
                        if (q < 0) continue;
                        seg[t] -= e.value * u[static_cast<size_t>(q)];
                    }
                }
            }
        }

        for (index_t c : ns.my_children) node_solve(c, v);
    }

    void leaf_solve(index_t id, WorkVec& v) {
        NodeState& ns = nodes_[static_cast<size_t>(id)];
        using TaggedVecs = std::vector<std::pair<index_t, std::vector<double>>>;
        TaggedVecs partial;
        {
            detail::ScopedTimer timer(times_.back_substitution);
            for (index_t b : ns.my_blocks) {
                std::vector<double> w = blocks_.at(b).fact.solve(v.blk.at(b));
                std::vector<double> dot(static_cast<size_t>(ns.dim), 0.0);
                blocks_.at(b).border_at.at(id).multiply_transpose_add(w, dot);
                partial.push_back({b, std::move(dot)});
            }
        }
        std::vector<double> u;
        {
            detail::ScopedTimer timer(times_.reduce);
            auto merged = ns.comm.reduce(std::move(partial),
                                         [](TaggedVecs a, TaggedVecs b) {
                                             for (auto& e : b) a.push_back(std::move(e));
                                             return a;
                                         },
                                         ns.owner_local);
            if (merged) {
                std::sort(merged->begin(), merged->end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });
                std::vector<double> bhat = v.corner.at(id);
                for (const auto& [tag, vec] : *merged)
                    for (size_t t = 0; t < vec.size(); ++t) bhat[t] -= vec[t];
                u = complement_solve(ns, std::move(bhat));
            }
            u = ns.comm.scatter(ns.owner_local, u);
        }
        v.corner.at(id) = u;
        {
            detail::ScopedTimer timer(times_.back_substitution);
            for (index_t b : ns.my_blocks) {
                auto& rhs = v.blk.at(b);
                blocks_.at(b).border_at.at(id).multiply_add(u, rhs, -1.0);
                rhs = blocks_.at(b).fact.solve(rhs);
            }
        }
    }

    // ------------------------------------------------------------------ rhs plumbing

    void gather_rhs(const ipm::BlockVec& rhs, WorkVec& v) {
        for (index_t b = 1; b <= tree_.num_blocks; ++b) {
            const int owner = static_cast<int>(asg_.block_owner[static_cast<size_t>(b)]);
            const int worker = static_cast<int>(asg_.block_worker[static_cast<size_t>(b)]);
            if (owner == me_ && worker != me_) {
                std::vector<double> seg(rhs.x.at(b));
                seg.insert(seg.end(), rhs.y.at(b).begin(), rhs.y.at(b).end());
                ctx_.send(worker, tag_rhs + b, std::move(seg));
            }
        }
        for (auto& [b, bs] : blocks_) {
            const int owner = static_cast<int>(asg_.block_owner[static_cast<size_t>(b)]);
            if (owner == me_) {
                std::vector<double> seg(rhs.x.at(b));
                seg.insert(seg.end(), rhs.y.at(b).begin(), rhs.y.at(b).end());
                v.blk[b] = std::move(seg);
            } else {
                v.blk[b] = ctx_.recv<std::vector<double>>(owner, tag_rhs + b);
            }
        }
        // replicated corner rhs in flat-layout order
        std::vector<double> flat(static_cast<size_t>(layout_.dim), 0.0);
        for (index_t r = 0; r < static_cast<index_t>(rhs.link.size()); ++r)
            flat[static_cast<size_t>(layout_.link_position[static_cast<size_t>(r)])] = rhs.link[static_cast<size_t>(r)];
        for (index_t j = 0; j < layout_.num_x0; ++j)
            flat[static_cast<size_t>(layout_.x0_offset + j)] = rhs.x.at(0)[static_cast<size_t>(j)];
        for (index_t r = 0; r < layout_.num_y0; ++r)
            flat[static_cast<size_t>(layout_.y0_offset + r)] = rhs.y.at(0)[static_cast<size_t>(r)];
        for (index_t id = 0; id < static_cast<index_t>(nodes_.size()); ++id) {
            NodeState& ns = nodes_[static_cast<size_t>(id)];
            if (!ns.member) continue;
            auto& seg = v.corner[id];
            seg.resize(static_cast<size_t>(ns.dim));
            for (size_t t = 0; t < ns.corner_flat.size(); ++t)
                seg[t] = flat[static_cast<size_t>(ns.corner_flat[t])];
        }
    }

    void scatter_solution(ipm::BlockVec& rhs, WorkVec& v) {
        // corner solution: every node owner publishes its segment
        using Tagged = std::vector<std::pair<index_t, std::vector<double>>>;
        Tagged local;
        for (index_t id = 0; id < static_cast<index_t>(nodes_.size()); ++id) {
            NodeState& ns = nodes_[static_cast<size_t>(id)];
            if (ns.member && ns.is_owner && ns.dim > 0) local.push_back({id, v.corner.at(id)});
        }
        Tagged all = world_.allreduce(std::move(local), [](Tagged a, Tagged b) {
            for (auto& e : b) a.push_back(std::move(e));
            return a;
        });
        std::vector<double> flat(static_cast<size_t>(layout_.dim), 0.0);
        for (const auto& [id, seg] : all) {
            const auto& cf = nodes_[static_cast<size_t>(id)].corner_flat;
            for (size_t t = 0; t < cf.size(); ++t) flat[static_cast<size_t>(cf[t])] = seg[t];
        }
        for (index_t r = 0; r < static_cast<index_t>(rhs.link.size()); ++r)
            rhs.link[static_cast<size_t>(r)] = flat[static_cast<size_t>(layout_.link_position[static_cast<size_t>(r)])];
        for (index_t j = 0; j < layout_.num_x0; ++j)
            rhs.x.at(0)[static_cast<size_t>(j)] = flat[static_cast<size_t>(layout_.x0_offset + j)];
        for (index_t r = 0; r < layout_.num_y0; ++r)
            rhs.y.at(0)[static_cast<size_t>(r)] = flat[static_cast<size_t>(layout_.y0_offset + r)];

        for (auto& [b, bs] : blocks_) {
            const int owner = static_cast<int>(asg_.block_owner[static_cast<size_t>(b)]);
            if (owner == me_) {
                const auto& seg = v.blk.at(b);
                const index_t nv = bs.sys.num_vars;
                rhs.x.at(b).assign(seg.begin(), seg.begin() + nv);
                rhs.y.at(b).assign(seg.begin() + nv, seg.end());
            } else {
                ctx_.send(owner, tag_delta + b, v.blk.at(b));
            }
        }
        for (index_t b = 1; b <= tree_.num_blocks; ++b) {
            const int owner = static_cast<int>(asg_.block_owner[static_cast<size_t>(b)]);
            const int worker = static_cast<int>(asg_.block_worker[static_cast<size_t>(b)]);
            if (owner == me_ && worker != me_) {
                auto seg = ctx_.recv<std::vector<double>>(worker, tag_delta + b);
                const index_t nv = static_cast<index_t>(rhs.x.at(b).size());
                rhs.x.at(b).assign(seg.begin(), seg.begin() + nv);
                rhs.y.at(b).assign(seg.begin() + nv, seg.end());
            }
        }
    }

    static constexpr std::int64_t tag_sigma = 0x10000;
    static constexpr std::int64_t tag_rhs = 0x20000;
    static constexpr std::int64_t tag_delta = 0x30000;

    runtime::RankContext& ctx_;
    const StandardArrowhead& sp_;
    const SchurTree& tree_;
    const Assignment& asg_;
    SolverConfig cfg_;
    int me_ = 0;
    CornerLayout layout_;
    SchurPattern pattern_;
    CornerSystem corner_self_;
    std::vector<double> sigma0_;
    runtime::Comm world_;
    std::vector<NodeState> nodes_;
    std::map<index_t, BlockState> blocks_;
    std::map<index_t, std::vector<double>> sigma_buf_;
    Contribution pending_;
    PhaseTimes times_;
};

} // namespace ahlp::schur
