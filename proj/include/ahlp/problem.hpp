#pragma once

#include <optional>
#include <string>

#include "ahlp/core.hpp"
#include "ahlp/sparse.hpp"

namespace ahlp {

/// One block of an arrowhead LP. Block 0 carries the linking variables x_0; its
/// rows live in border_eq/border_ineq (columns over x_0) and it has no diagonal
/// matrices. Blocks 1..N have diagonal matrices over their own variables plus
/// border columns over x_0.
struct BlockData {
    index_t num_vars = 0;
    index_t num_eq = 0;
    index_t num_ineq = 0;

    std::vector<double> objective;  // size num_vars
    std::vector<double> lower;      // size num_vars, -inf allowed
    std::vector<double> upper;      // size num_vars, +inf allowed
    std::vector<double> rhs_eq;     // size num_eq
    std::vector<double> ineq_lower; // size num_ineq
    std::vector<double> ineq_upper; // size num_ineq

    SparseBlock border_eq;   // A_i: num_eq x n_0
    SparseBlock diag_eq;     // B_i: num_eq x num_vars, blocks >= 1 only
    SparseBlock border_ineq; // C_i: num_ineq x n_0
    SparseBlock diag_ineq;   // D_i: num_ineq x num_vars, blocks >= 1 only
    SparseBlock link_eq;     // F_i: link eq rows x num_vars
    SparseBlock link_ineq;   // G_i: link ineq rows x num_vars

    friend bool operator==(const BlockData&, const BlockData&) = default;
};

struct ArrowheadProblem {
    std::vector<BlockData> blocks;      // size N + 1, block 0 first
    std::vector<double> link_rhs_eq;    // b_{N+1}
    std::vector<double> link_ineq_lower; // d_{N+1}
    std::vector<double> link_ineq_upper; // f_{N+1}

    index_t num_blocks() const { return static_cast<index_t>(blocks.size()) - 1; } // N
    index_t num_linking_vars() const { return blocks.empty() ? 0 : blocks[0].num_vars; }
    index_t num_link_eq() const { return static_cast<index_t>(link_rhs_eq.size()); }
    index_t num_link_ineq() const { return static_cast<index_t>(link_ineq_lower.size()); }

    index_t total_vars() const {
        index_t n = 0;
        for (const auto& b : blocks) n += b.num_vars;
        return n;
    }
    index_t total_rows() const {
        index_t m = 0;
        for (const auto& b : blocks) m += b.num_eq + b.num_ineq;
        return m + num_link_eq() + num_link_ineq();
    }

    friend bool operator==(const ArrowheadProblem&, const ArrowheadProblem&) = default;
};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    index_t block = -1; // -1: problem-level / linking section
    std::string field;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

namespace detail {

inline void check_matrix(ValidationReport& rep, index_t block, const char* name, const SparseBlock& m,
                         index_t want_rows, index_t want_cols) {
    if (m.rows != want_rows || m.cols != want_cols) {
        rep.violations.push_back({block, name,
                                  "declared " + std::to_string(m.rows) + "x" + std::to_string(m.cols) + ", expected " +
                                      std::to_string(want_rows) + "x" + std::to_string(want_cols)});
        return;
    }
    std::vector<Entry> sorted = m.entries;
    std::sort(sorted.begin(), sorted.end(),
              [](const Entry& a, const Entry& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
    for (size_t t = 0; t < sorted.size(); ++t) {
        const Entry& e = sorted[t];
        if (e.row < 0 || e.row >= m.rows || e.col < 0 || e.col >= m.cols) {
            rep.violations.push_back({block, name,
                                      "entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                                          ") outside declared dimensions"});
            continue;
        }
        if (!finite(e.value) || e.value == 0.0)
            rep.violations.push_back({block, name,
                                      "entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                                          ") must be finite and nonzero"});
        if (t > 0 && sorted[t - 1].row == e.row && sorted[t - 1].col == e.col)
            rep.violations.push_back({block, name,
                                      "duplicate entry at (" + std::to_string(e.row) + "," + std::to_string(e.col) + ")"});
    }
}

} // namespace detail

/// Checks every structural invariant and reports all violations; never throws.
inline ValidationReport validate(const ArrowheadProblem& p) {
    ValidationReport rep;
    if (p.blocks.size() < 2) {
        rep.violations.push_back({-1, "blocks", "need block 0 plus at least one diagonal block (N >= 1)"});
        return rep;
    }
    const index_t n0 = p.num_linking_vars();
    const index_t link_eq = p.num_link_eq();
    const index_t link_ineq = p.num_link_ineq();
    if (static_cast<index_t>(p.link_ineq_upper.size()) != link_ineq)
        rep.violations.push_back({-1, "link ranges", "lower/upper length mismatch"});

    for (index_t i = 0; i <= p.num_blocks(); ++i) {
        const BlockData& b = p.blocks[static_cast<size_t>(i)];
        auto want = [&](const char* field, size_t got, index_t n) {
            if (static_cast<index_t>(got) != n)
                rep.violations.push_back({i, field, "length " + std::to_string(got) + ", expected " + std::to_string(n)});
        };
        want("objective", b.objective.size(), b.num_vars);
        want("lower", b.lower.size(), b.num_vars);
        want("upper", b.upper.size(), b.num_vars);
        want("rhs_eq", b.rhs_eq.size(), b.num_eq);
        want("ineq_lower", b.ineq_lower.size(), b.num_ineq);
        want("ineq_upper", b.ineq_upper.size(), b.num_ineq);

        for (size_t j = 0; j < b.lower.size() && j < b.upper.size(); ++j)
            if (!(b.lower[j] <= b.upper[j]))
                rep.violations.push_back({i, "bounds", "lower > upper at variable " + std::to_string(j)});
        for (size_t j = 0; j < b.ineq_lower.size() && j < b.ineq_upper.size(); ++j)
            if (!(b.ineq_lower[j] <= b.ineq_upper[j]))
                rep.violations.push_back({i, "ineq range", "lower > upper at row " + std::to_string(j)});

        detail::check_matrix(rep, i, "A", b.border_eq, b.num_eq, n0);
        detail::check_matrix(rep, i, "C", b.border_ineq, b.num_ineq, n0);
        if (i == 0) {
            if (!b.diag_eq.empty() || !b.diag_ineq.empty())
                rep.violations.push_back({i, "B/D", "block 0 must not carry diagonal matrices"});
        } else {
            detail::check_matrix(rep, i, "B", b.diag_eq, b.num_eq, b.num_vars);
            detail::check_matrix(rep, i, "D", b.diag_ineq, b.num_ineq, b.num_vars);
        }
        detail::check_matrix(rep, i, "F", b.link_eq, link_eq, b.num_vars);
        detail::check_matrix(rep, i, "G", b.link_ineq, link_ineq, b.num_vars);
    }
    for (size_t j = 0; j < p.link_ineq_lower.size() && j < p.link_ineq_upper.size(); ++j)
        if (!(p.link_ineq_lower[j] <= p.link_ineq_upper[j]))
            rep.violations.push_back({-1, "link range", "lower > upper at row " + std::to_string(j)});
    return rep;
}

// ---------------------------------------------------------------------------
// Standard form

/// An arrowhead problem whose inequality rows have all been converted to
/// equalities with bounded slacks. Slacks of block-local rows join that block;
/// slacks of local linking rows join the first linked block, slacks of global
/// linking rows join x_0, so the 2-link pattern is preserved exactly.
struct StandardArrowhead {
    ArrowheadProblem problem;
    std::vector<index_t> original_num_vars; // per block, prefix of the standard variables

    /// Original variable values are the prefix of each standard block.
    std::vector<std::vector<double>> restrict_to_original(const std::vector<std::vector<double>>& x) const {
        std::vector<std::vector<double>> out(x.size());
        for (size_t i = 0; i < x.size(); ++i)
            out[i].assign(x[i].begin(), x[i].begin() + static_cast<long>(original_num_vars[i]));
        return out;
    }
};

namespace detail {

inline std::vector<index_t> row_support(const ArrowheadProblem& p, const SparseBlock BlockData::*mat, index_t row) {
    std::vector<index_t> support;
    for (index_t i = 1; i <= p.num_blocks(); ++i) {
        const SparseBlock& m = p.blocks[static_cast<size_t>(i)].*mat;
        for (const Entry& e : m.entries)
            if (e.row == row) {
                support.push_back(i);
                break;
            }
    }
    return support;
}

} // namespace detail

inline StandardArrowhead to_standard_form(const ArrowheadProblem& orig) {
    StandardArrowhead out;
    out.problem = orig;
    ArrowheadProblem& p = out.problem;
    const index_t nblocks = p.num_blocks();
    out.original_num_vars.resize(static_cast<size_t>(nblocks) + 1);
    for (index_t i = 0; i <= nblocks; ++i)
        out.original_num_vars[static_cast<size_t>(i)] = p.blocks[static_cast<size_t>(i)].num_vars;

    auto append_slack = [&](BlockData& b, double lo, double hi) -> index_t {
        const index_t col = b.num_vars++;
        b.objective.push_back(0.0);
        b.lower.push_back(lo);
        b.upper.push_back(hi);
        return col;
    };

    // block-local inequality rows
    for (index_t i = 0; i <= nblocks; ++i) {
        BlockData& b = p.blocks[static_cast<size_t>(i)];
        for (index_t r = 0; r < b.num_ineq; ++r) {
            const double lo = b.ineq_lower[static_cast<size_t>(r)];
            const double hi = b.ineq_upper[static_cast<size_t>(r)];
            if (lo == -kInf && hi == kInf)
                throw invalid_argument_error("free inequality row " + std::to_string(r) + " in block " +
                                             std::to_string(i));
            const index_t new_row = b.num_eq + r;
            for (const Entry& e : b.border_ineq.entries)
                if (e.row == r) b.border_eq.add(new_row, e.col, e.value);
            if (i > 0)
                for (const Entry& e : b.diag_ineq.entries)
                    if (e.row == r) b.diag_eq.add(new_row, e.col, e.value);
            const index_t slack = append_slack(b, lo, hi);
            if (i == 0)
                b.border_eq.add(new_row, slack, -1.0);
            else
                b.diag_eq.add(new_row, slack, -1.0);
            b.rhs_eq.push_back(0.0);
        }
        b.num_eq += b.num_ineq;
        b.num_ineq = 0;
        b.ineq_lower.clear();
        b.ineq_upper.clear();
        b.border_ineq = SparseBlock(0, p.num_linking_vars());
        b.diag_ineq = SparseBlock(0, i == 0 ? 0 : b.num_vars);
        b.border_eq.rows = b.num_eq;
        b.diag_eq.rows = b.num_eq;
    }

    // linking inequality rows
    const index_t link_eq0 = p.num_link_eq();
    const index_t link_ineq = p.num_link_ineq();
    for (index_t r = 0; r < link_ineq; ++r) {
        const double lo = p.link_ineq_lower[static_cast<size_t>(r)];
        const double hi = p.link_ineq_upper[static_cast<size_t>(r)];
        if (lo == -kInf && hi == kInf)
            throw invalid_argument_error("free linking inequality row " + std::to_string(r));
        const index_t new_row = link_eq0 + r;
        for (index_t i = 0; i <= nblocks; ++i) {
            BlockData& b = p.blocks[static_cast<size_t>(i)];
            for (const Entry& e : b.link_ineq.entries)
                if (e.row == r) b.link_eq.add(new_row, e.col, e.value);
        }
        const std::vector<index_t> support = detail::row_support(orig, &BlockData::link_ineq, r);
        const bool local = !support.empty() && support.back() - support.front() <= 1;
        const index_t slack_block = local ? support.front() : 0;
        const index_t slack = append_slack(p.blocks[static_cast<size_t>(slack_block)], lo, hi);
        p.blocks[static_cast<size_t>(slack_block)].link_eq.add(new_row, slack, -1.0);
        p.link_rhs_eq.push_back(0.0);
    }
    p.link_ineq_lower.clear();
    p.link_ineq_upper.clear();

    // final dimension fixups after slack columns were appended
    const index_t n0 = p.num_linking_vars();
    for (index_t i = 0; i <= nblocks; ++i) {
        BlockData& b = p.blocks[static_cast<size_t>(i)];
        b.border_eq.cols = n0;
        b.border_ineq = SparseBlock(0, n0);
        if (i > 0) {
            b.diag_eq.cols = b.num_vars;
            b.diag_ineq = SparseBlock(0, b.num_vars);
        }
        b.link_eq.rows = p.num_link_eq();
        b.link_eq.cols = b.num_vars;
        b.link_ineq = SparseBlock(0, b.num_vars);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Link classification

enum class LinkKind : std::uint8_t { local, global };

/// Per linking row: Local(g) when the support over blocks 1..N is nonempty and
/// fits inside {g, g+1}; Global otherwise. Rows supported only in F_0 (or N = 1)
/// are Global and handled in the dense layer; single-block rows take the first
/// feasible pair. The permutation groups local rows by pair and puts global
/// rows last, in the layout the Schur pattern expects.
struct LinkClassification {
    index_t num_blocks = 0;
    std::vector<LinkKind> kind;
    std::vector<index_t> local_group;  // pair index g in [1, N-1]; -1 for global rows
    std::vector<index_t> local_counts; // l_g at position g-1, size max(N-1, 0)
    index_t num_global = 0;            // m_F
    std::vector<index_t> order;        // order[new_pos] = original row
    std::vector<index_t> position;     // position[original row] = new_pos

    index_t num_local() const {
        index_t s = 0;
        for (index_t l : local_counts) s += l;
        return s;
    }
    index_t num_rows() const { return static_cast<index_t>(kind.size()); }
};

inline LinkClassification classify_links(const StandardArrowhead& sp) {
    const ArrowheadProblem& p = sp.problem;
    const index_t nblocks = p.num_blocks();
    const index_t rows = p.num_link_eq();
    LinkClassification cls;
    cls.num_blocks = nblocks;
    cls.kind.assign(static_cast<size_t>(rows), LinkKind::global);
    cls.local_group.assign(static_cast<size_t>(rows), -1);
    cls.local_counts.assign(static_cast<size_t>(std::max<index_t>(nblocks - 1, 0)), 0);

    std::vector<index_t> lo(static_cast<size_t>(rows), -1), hi(static_cast<size_t>(rows), -1);
    for (index_t i = 1; i <= nblocks; ++i) {
        for (const Entry& e : p.blocks[static_cast<size_t>(i)].link_eq.entries) {
            auto r = static_cast<size_t>(e.row);
            if (lo[r] < 0) lo[r] = i;
            hi[r] = std::max(hi[r], i);
            lo[r] = std::min(lo[r], i);
        }
    }
    for (index_t r = 0; r < rows; ++r) {
        const index_t a = lo[static_cast<size_t>(r)], b = hi[static_cast<size_t>(r)];
        if (a < 0 || nblocks < 2 || b - a > 1) continue; // global
        cls.kind[static_cast<size_t>(r)] = LinkKind::local;
        const index_t g = std::min(a, nblocks - 1);
        cls.local_group[static_cast<size_t>(r)] = g;
        ++cls.local_counts[static_cast<size_t>(g - 1)];
    }
    cls.num_global = 0;
    for (LinkKind k : cls.kind)
        if (k == LinkKind::global) ++cls.num_global;

    cls.order.reserve(static_cast<size_t>(rows));
    for (index_t g = 1; g <= nblocks - 1; ++g)
        for (index_t r = 0; r < rows; ++r)
            if (cls.local_group[static_cast<size_t>(r)] == g) cls.order.push_back(r);
    for (index_t r = 0; r < rows; ++r)
        if (cls.kind[static_cast<size_t>(r)] == LinkKind::global) cls.order.push_back(r);
    cls.position.assign(static_cast<size_t>(rows), 0);
    for (index_t pnew = 0; pnew < rows; ++pnew)
        cls.position[static_cast<size_t>(cls.order[static_cast<size_t>(pnew)])] = pnew;
    return cls;
}

// ---------------------------------------------------------------------------
// Block merging

/// Coarsens the block structure: ceil(N/factor) groups of `factor` consecutive
/// blocks (last group smaller when factor does not divide N). Linking rows whose
/// block support falls inside one multi-block group become ordinary rows of the
/// merged block; the feasible set is unchanged up to variable reordering.
inline ArrowheadProblem merge_blocks(const ArrowheadProblem& p, index_t factor) {
    if (factor < 1) throw invalid_argument_error("merge_blocks: factor must be >= 1");
    const index_t nblocks = p.num_blocks();
    const index_t groups = (nblocks + factor - 1) / factor;

    auto group_of = [&](index_t block) { return (block - 1) / factor; }; // blocks are 1-based
    auto group_range = [&](index_t g) {
        const index_t a = g * factor + 1;
        const index_t b = std::min(nblocks, a + factor - 1);
        return std::pair<index_t, index_t>(a, b);
    };

    ArrowheadProblem out;
    out.blocks.resize(static_cast<size_t>(groups) + 1);
    out.blocks[0] = p.blocks[0];
    const index_t n0 = p.num_linking_vars();

    // variable/row offsets of old blocks inside their group
    std::vector<index_t> var_off(static_cast<size_t>(nblocks) + 1, 0);
    std::vector<index_t> eq_off(static_cast<size_t>(nblocks) + 1, 0);
    std::vector<index_t> ineq_off(static_cast<size_t>(nblocks) + 1, 0);
    for (index_t g = 0; g < groups; ++g) {
        auto [a, b] = group_range(g);
        index_t v = 0, me = 0, mi = 0;
        for (index_t i = a; i <= b; ++i) {
            var_off[static_cast<size_t>(i)] = v;
            eq_off[static_cast<size_t>(i)] = me;
            ineq_off[static_cast<size_t>(i)] = mi;
            const BlockData& blk = p.blocks[static_cast<size_t>(i)];
            v += blk.num_vars;
            me += blk.num_eq;
            mi += blk.num_ineq;
        }
    }

    // decide which linking rows are absorbed
    auto absorbed_group = [&](const SparseBlock BlockData::*mat, index_t row) -> index_t {
        const std::vector<index_t> support = detail::row_support(p, mat, row);
        if (support.empty()) return -1;
        const index_t g = group_of(support.front());
        if (g != group_of(support.back())) return -1;
        auto [a, b] = group_range(g);
        return b > a ? g : -1; // singleton groups keep their links untouched
    };

    std::vector<index_t> eq_absorbed(static_cast<size_t>(p.num_link_eq()));
    std::vector<index_t> ineq_absorbed(static_cast<size_t>(p.num_link_ineq()));
    for (index_t r = 0; r < p.num_link_eq(); ++r)
        eq_absorbed[static_cast<size_t>(r)] = absorbed_group(&BlockData::link_eq, r);
    for (index_t r = 0; r < p.num_link_ineq(); ++r)
        ineq_absorbed[static_cast<size_t>(r)] = absorbed_group(&BlockData::link_ineq, r);

    std::vector<index_t> surviving_eq, surviving_ineq;
    std::vector<index_t> eq_new_row(static_cast<size_t>(p.num_link_eq()), -1);
    std::vector<index_t> ineq_new_row(static_cast<size_t>(p.num_link_ineq()), -1);
    for (index_t r = 0; r < p.num_link_eq(); ++r)
        if (eq_absorbed[static_cast<size_t>(r)] < 0) {
            eq_new_row[static_cast<size_t>(r)] = static_cast<index_t>(surviving_eq.size());
            surviving_eq.push_back(r);
        }
    for (index_t r = 0; r < p.num_link_ineq(); ++r)
        if (ineq_absorbed[static_cast<size_t>(r)] < 0) {
            ineq_new_row[static_cast<size_t>(r)] = static_cast<index_t>(surviving_ineq.size());
            surviving_ineq.push_back(r);
        }

    for (index_t g = 0; g < groups; ++g) {
        auto [a, b] = group_range(g);
        BlockData& nb = out.blocks[static_cast<size_t>(g) + 1];
        for (index_t i = a; i <= b; ++i) {
            const BlockData& ob = p.blocks[static_cast<size_t>(i)];
            nb.num_vars += ob.num_vars;
            nb.num_eq += ob.num_eq;
            nb.num_ineq += ob.num_ineq;
            nb.objective.insert(nb.objective.end(), ob.objective.begin(), ob.objective.end());
            nb.lower.insert(nb.lower.end(), ob.lower.begin(), ob.lower.end());
            nb.upper.insert(nb.upper.end(), ob.upper.begin(), ob.upper.end());
            nb.rhs_eq.insert(nb.rhs_eq.end(), ob.rhs_eq.begin(), ob.rhs_eq.end());
            nb.ineq_lower.insert(nb.ineq_lower.end(), ob.ineq_lower.begin(), ob.ineq_lower.end());
            nb.ineq_upper.insert(nb.ineq_upper.end(), ob.ineq_upper.begin(), ob.ineq_upper.end());
        }
        const index_t base_eq = nb.num_eq;
        const index_t base_ineq = nb.num_ineq;
        // absorbed linking rows append to the merged block, original order
        std::vector<index_t> abs_eq, abs_ineq;
        for (index_t r = 0; r < p.num_link_eq(); ++r)
            if (eq_absorbed[static_cast<size_t>(r)] == g) {
                abs_eq.push_back(r);
                nb.rhs_eq.push_back(p.link_rhs_eq[static_cast<size_t>(r)]);
            }
        for (index_t r = 0; r < p.num_link_ineq(); ++r)
            if (ineq_absorbed[static_cast<size_t>(r)] == g) {
                abs_ineq.push_back(r);
                nb.ineq_lower.push_back(p.link_ineq_lower[static_cast<size_t>(r)]);
                nb.ineq_upper.push_back(p.link_ineq_upper[static_cast<size_t>(r)]);
            }
        nb.num_eq += static_cast<index_t>(abs_eq.size());
        nb.num_ineq += static_cast<index_t>(abs_ineq.size());

        nb.border_eq = SparseBlock(nb.num_eq, n0);
        nb.diag_eq = SparseBlock(nb.num_eq, nb.num_vars);
        nb.border_ineq = SparseBlock(nb.num_ineq, n0);
        nb.diag_ineq = SparseBlock(nb.num_ineq, nb.num_vars);
        nb.link_eq = SparseBlock(static_cast<index_t>(surviving_eq.size()), nb.num_vars);
        nb.link_ineq = SparseBlock(static_cast<index_t>(surviving_ineq.size()), nb.num_vars);

        for (index_t i = a; i <= b; ++i) {
            const BlockData& ob = p.blocks[static_cast<size_t>(i)];
            const index_t vo = var_off[static_cast<size_t>(i)];
            const index_t eo = eq_off[static_cast<size_t>(i)];
            const index_t io = ineq_off[static_cast<size_t>(i)];
            for (const Entry& e : ob.border_eq.entries) nb.border_eq.add(e.row + eo, e.col, e.value);
            for (const Entry& e : ob.diag_eq.entries) nb.diag_eq.add(e.row + eo, e.col + vo, e.value);
            for (const Entry& e : ob.border_ineq.entries) nb.border_ineq.add(e.row + io, e.col, e.value);
            for (const Entry& e : ob.diag_ineq.entries) nb.diag_ineq.add(e.row + io, e.col + vo, e.value);
            for (const Entry& e : ob.link_eq.entries) {
                const index_t r = e.row;
                if (eq_absorbed[static_cast<size_t>(r)] == g) {
                    const auto it = std::find(abs_eq.begin(), abs_eq.end(), r);
                    nb.diag_eq.add(base_eq + static_cast<index_t>(it - abs_eq.begin()), e.col + vo, e.value);
                } else if (eq_absorbed[static_cast<size_t>(r)] < 0) {
                    nb.link_eq.add(eq_new_row[static_cast<size_t>(r)], e.col + vo, e.value);
                }
            }
            for (const Entry& e : ob.link_ineq.entries) {
                const index_t r = e.row;
                if (ineq_absorbed[static_cast<size_t>(r)] == g) {
                    const auto it = std::find(abs_ineq.begin(), abs_ineq.end(), r);
                    nb.diag_ineq.add(base_ineq + static_cast<index_t>(it - abs_ineq.begin()), e.col + vo, e.value);
                } else if (ineq_absorbed[static_cast<size_t>(r)] < 0) {
                    nb.link_ineq.add(ineq_new_row[static_cast<size_t>(r)], e.col + vo, e.value);
                }
            }
        }
        nb.border_eq.sort_canonical();
        nb.diag_eq.sort_canonical();
        nb.border_ineq.sort_canonical();
        nb.diag_ineq.sort_canonical();
        nb.link_eq.sort_canonical();
        nb.link_ineq.sort_canonical();
    }

    // block 0: absorbed rows cannot touch it (their F_0 part moves into the border)
    BlockData& b0 = out.blocks[0];
    {
        // rebuild block 0 linking matrices over the surviving rows
        SparseBlock f0(static_cast<index_t>(surviving_eq.size()), b0.num_vars);
        SparseBlock g0(static_cast<index_t>(surviving_ineq.size()), b0.num_vars);
        for (const Entry& e : p.blocks[0].link_eq.entries) {
            if (eq_absorbed[static_cast<size_t>(e.row)] < 0)
                f0.add(eq_new_row[static_cast<size_t>(e.row)], e.col, e.value);
        }
        for (const Entry& e : p.blocks[0].link_ineq.entries) {
            if (ineq_absorbed[static_cast<size_t>(e.row)] < 0)
                g0.add(ineq_new_row[static_cast<size_t>(e.row)], e.col, e.value);
        }
        b0.link_eq = std::move(f0);
        b0.link_ineq = std::move(g0);
        b0.link_eq.sort_canonical();
        b0.link_ineq.sort_canonical();
    }
    // absorbed rows with x_0 entries land in the merged blocks' border matrices
    for (const Entry& e : p.blocks[0].link_eq.entries) {
        const index_t g = eq_absorbed[static_cast<size_t>(e.row)];
        if (g < 0) continue;
        BlockData& nb = out.blocks[static_cast<size_t>(g) + 1];
        index_t local_row = 0;
        for (index_t r = 0; r < e.row; ++r)
            if (eq_absorbed[static_cast<size_t>(r)] == g) ++local_row;
        index_t base = 0;
        auto [a, b] = group_range(g);
        for (index_t i = a; i <= b; ++i) base += p.blocks[static_cast<size_t>(i)].num_eq;
        nb.border_eq.add(base + local_row, e.col, e.value);
    }
    for (const Entry& e : p.blocks[0].link_ineq.entries) {
        const index_t g = ineq_absorbed[static_cast<size_t>(e.row)];
        if (g < 0) continue;
        BlockData& nb = out.blocks[static_cast<size_t>(g) + 1];
        index_t local_row = 0;
        for (index_t r = 0; r < e.row; ++r)
            if (ineq_absorbed[static_cast<size_t>(r)] == g) ++local_row;
        index_t base = 0;
        auto [a, b] = group_range(g);
        for (index_t i = a; i <= b; ++i) base += p.blocks[static_cast<size_t>(i)].num_ineq;
        nb.border_ineq.add(base + local_row, e.col, e.value);
    }
    for (index_t g = 0; g < groups; ++g) {
        out.blocks[static_cast<size_t>(g) + 1].border_eq.sort_canonical();
        out.blocks[static_cast<size_t>(g) + 1].border_ineq.sort_canonical();
    }

    for (index_t r : surviving_eq) out.link_rhs_eq.push_back(p.link_rhs_eq[static_cast<size_t>(r)]);
    for (index_t r : surviving_ineq) {
        out.link_ineq_lower.push_back(p.link_ineq_lower[static_cast<size_t>(r)]);
        out.link_ineq_upper.push_back(p.link_ineq_upper[static_cast<size_t>(r)]);
    }
    return out;
}

} // namespace ahlp
