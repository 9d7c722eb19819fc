#pragma once

#include "ahlp/ldlt.hpp"
#include "ahlp/problem.hpp"

namespace ahlp::schur {

/// Index layout of the full Schur-complement corner:
///   [ local link groups g = 1..N-1 | global links | x_0 | y_0 ]
/// Local rows are grouped by pair index via the classification permutation, so
/// the assembled complement exhibits the block-tridiagonal-plus-dense-border
/// structure the sparsity prediction is built on.
struct CornerLayout {
    index_t num_blocks = 0;
    std::vector<index_t> group_offset; // offset of group g at [g-1]; size max(N-1, 0)
    std::vector<index_t> group_size;   // l_g at [g-1]
    index_t locals_total = 0;
    index_t globals_offset = 0;
    index_t num_globals = 0;
    index_t x0_offset = 0;
    index_t num_x0 = 0;
    index_t y0_offset = 0;
    index_t num_y0 = 0;
    index_t dim = 0;
    std::vector<index_t> link_position; // original link row -> corner index

    enum class Region : std::uint8_t { local, global, x0, y0 };

    Region region(index_t i) const {
        if (i < locals_total) return Region::local;
        if (i < x0_offset) return Region::global;
        if (i < y0_offset) return Region::x0;
        return Region::y0;
    }

    index_t group_of(index_t i) const { // valid for local region indices
        index_t g = 1;
        while (g < static_cast<index_t>(group_offset.size()) &&
               i >= group_offset[static_cast<size_t>(g)] )
            ++g;
        return g;
    }
};

inline CornerLayout make_corner_layout(const LinkClassification& cls, index_t n0, index_t m0) {
    CornerLayout c;
    c.num_blocks = cls.num_blocks;
    const index_t ngroups = std::max<index_t>(cls.num_blocks - 1, 0);
    c.group_offset.resize(static_cast<size_t>(ngroups));
    c.group_size.resize(static_cast<size_t>(ngroups));
    index_t off = 0;
    for (index_t g = 1; g <= ngroups; ++g) {
        c.group_offset[static_cast<size_t>(g - 1)] = off;
        c.group_size[static_cast<size_t>(g - 1)] = cls.local_counts[static_cast<size_t>(g - 1)];
        off += cls.local_counts[static_cast<size_t>(g - 1)];
    }
    c.locals_total = off;
    c.globals_offset = off;
    c.num_globals = cls.num_global;
    c.x0_offset = c.globals_offset + c.num_globals;
    c.num_x0 = n0;
    c.y0_offset = c.x0_offset + n0;
    c.num_y0 = m0;
    c.dim = c.y0_offset + m0;
    // classification order is exactly locals-grouped-then-globals
    c.link_position = cls.position;
    return c;
}

/// Predicted sparsity of the assembled Schur complement. The nonzero bound
/// covers the contribution region (everything outside the y_0 rows); the y_0
/// rows hold only the copied A_0 entries plus the regularized diagonal.
struct SchurPattern {
    CornerLayout layout;
    std::uint64_t bound = 0; // contribution-region nonzero bound

    bool contains(index_t i, index_t j) const {
        using R = CornerLayout::Region;
        if (i == j) return true;
        const R ri = layout.region(i), rj = layout.region(j);
        if (ri == R::y0 || rj == R::y0) {
            // only the x_0 coupling (A_0) lives in the y_0 border
            return (ri == R::y0 && rj == R::x0) || (ri == R::x0 && rj == R::y0);
        }
        if (ri == R::local && rj == R::local) {
            const index_t gi = layout.group_of(i), gj = layout.group_of(j);
            return std::abs(gi - gj) <= 1;
        }
        return true; // local x dense border, and the dense corner itself
    }

    bool in_contribution_region(index_t i, index_t j) const {
        using R = CornerLayout::Region;
        return layout.region(i) != R::y0 && layout.region(j) != R::y0;
    }
};

/// Observation-style bound over the group size list (band part of a complement
/// whose groups appear in this order).
inline std::uint64_t band_bound(const std::vector<index_t>& sizes) {
    std::uint64_t b = 0;
    for (size_t i = 0; i < sizes.size(); ++i) {
        b += static_cast<std::uint64_t>(sizes[i]) * static_cast<std::uint64_t>(sizes[i]);
        if (i + 1 < sizes.size())
            b += 2ull * static_cast<std::uint64_t>(sizes[i]) * static_cast<std::uint64_t>(sizes[i + 1]);
    }
    return b;
}

inline SchurPattern predict_sparsity(const LinkClassification& cls, index_t n0, index_t m0) {
    SchurPattern p;
    p.layout = make_corner_layout(cls, n0, m0);
    const auto& l = cls.local_counts;
    const std::uint64_t dense_dim = static_cast<std::uint64_t>(cls.num_global + n0);
    std::uint64_t bound = dense_dim * dense_dim;
    for (size_t i = 0; i < l.size(); ++i) {
        bound += static_cast<std::uint64_t>(l[i]) * static_cast<std::uint64_t>(l[i]);
        if (i + 1 < l.size()) bound += 2ull * static_cast<std::uint64_t>(l[i]) * static_cast<std::uint64_t>(l[i + 1]);
        bound += 2ull * static_cast<std::uint64_t>(l[i]) * dense_dim;
    }
    p.bound = bound;
    return p;
}

/// One diagonal system K_i = [[Sigma_i, B_i^T],[B_i, 0]] with its border
/// L_i = [[0 0 F_i^T],[A_i 0 0]] laid out over the corner. The symbolic part
/// (patterns, fill order) is built once; only the Sigma diagonal changes
/// between factorizations.
struct BlockSystem {
    index_t block = 0;
    index_t num_vars = 0;
    index_t num_rows = 0;
    SymSparseMatrix kmat;                // lower triangle, Sigma slots patched per iteration
    std::vector<index_t> sigma_slot;     // value index of Sigma_jj in kmat
    CscMatrix border;                    // (num_vars + num_rows) x corner dim
    std::vector<linalg::RowKind> kinds;  // x rows primal, y rows dual
    std::vector<index_t> fill_order;     // cached fill-reducing order

    index_t order() const { return num_vars + num_rows; }
};

inline BlockSystem build_block_system(const StandardArrowhead& sp, const CornerLayout& corner, index_t block) {
    const BlockData& b = sp.problem.blocks[static_cast<size_t>(block)];
    BlockSystem sys;
    sys.block = block;
    sys.num_vars = b.num_vars;
    sys.num_rows = b.num_eq;

    std::vector<Entry> trip;
    trip.reserve(static_cast<size_t>(b.num_vars) + b.diag_eq.entries.size());
    for (index_t j = 0; j < b.num_vars; ++j) trip.push_back({j, j, 1.0}); // Sigma placeholder
    for (const Entry& e : b.diag_eq.entries) trip.push_back({b.num_vars + e.row, e.col, e.value});
    sys.kmat = SymSparseMatrix::from_triplets(sys.order(), std::move(trip));

    sys.sigma_slot.assign(static_cast<size_t>(b.num_vars), -1);
    for (index_t j = 0; j < b.num_vars; ++j)
        for (index_t p = sys.kmat.col_ptr[static_cast<size_t>(j)]; p < sys.kmat.col_ptr[static_cast<size_t>(j) + 1]; ++p)
            if (sys.kmat.row_index[static_cast<size_t>(p)] == j) sys.sigma_slot[static_cast<size_t>(j)] = p;

    SparseBlock border(sys.order(), corner.dim);
    for (const Entry& e : b.link_eq.entries)
        border.add(e.col, corner.link_position[static_cast<size_t>(e.row)], e.value); // F_i^T into x rows
    for (const Entry& e : b.border_eq.entries)
        border.add(b.num_vars + e.row, corner.x0_offset + e.col, e.value); // A_i into y rows
    border.sort_canonical();
    sys.border = CscMatrix::from_block(border);

    sys.kinds.assign(static_cast<size_t>(sys.order()), linalg::RowKind::dual);
    for (index_t j = 0; j < b.num_vars; ++j) sys.kinds[static_cast<size_t>(j)] = linalg::RowKind::primal;
    sys.fill_order = linalg::fill_reducing_order(sys.kmat);
    return sys;
}

inline void set_sigma(BlockSystem& sys, std::span<const double> sigma) {
    for (index_t j = 0; j < sys.num_vars; ++j)
        sys.kmat.values[static_cast<size_t>(sys.sigma_slot[static_cast<size_t>(j)])] = sigma[static_cast<size_t>(j)];
}

/// Corner self matrix K_0 = [[Sigma_0, A_0^T, F_0^T],[A_0, 0, 0],[F_0, 0, 0]]
/// in corner layout (lower triangle). Sigma_0 slots patched per iteration.
struct CornerSystem {
    SymSparseMatrix kmat;
    std::vector<index_t> sigma_slot; // per x_0 variable
    std::vector<linalg::RowKind> kinds;
};

inline CornerSystem build_corner_system(const StandardArrowhead& sp, const CornerLayout& corner) {
    const BlockData& b0 = sp.problem.blocks[0];
    CornerSystem sys;
    std::vector<Entry> trip;
    for (index_t j = 0; j < corner.num_x0; ++j) trip.push_back({corner.x0_offset + j, corner.x0_offset + j, 1.0});
    for (const Entry& e : b0.border_eq.entries)
        trip.push_back({corner.y0_offset + e.row, corner.x0_offset + e.col, e.value}); // A_0 (lower: y0 after x0)
    for (const Entry& e : b0.link_eq.entries)
        trip.push_back({corner.x0_offset + e.col, corner.link_position[static_cast<size_t>(e.row)], e.value}); // F_0^T
    sys.kmat = SymSparseMatrix::from_triplets(corner.dim, std::move(trip));
    sys.sigma_slot.assign(static_cast<size_t>(corner.num_x0), -1);
    for (index_t j = 0; j < corner.num_x0; ++j) {
        const index_t col = corner.x0_offset + j;
        for (index_t p = sys.kmat.col_ptr[static_cast<size_t>(col)]; p < sys.kmat.col_ptr[static_cast<size_t>(col) + 1]; ++p)
            if (sys.kmat.row_index[static_cast<size_t>(p)] == col) sys.sigma_slot[static_cast<size_t>(j)] = p;
    }
    sys.kinds.assign(static_cast<size_t>(corner.dim), linalg::RowKind::dual);
    for (index_t j = 0; j < corner.num_x0; ++j)
        sys.kinds[static_cast<size_t>(corner.x0_offset + j)] = linalg::RowKind::primal;
    return sys;
}

/// The permuted block view of the augmented system, all blocks materialized.
/// Used directly by tests and the single-process paths; the distributed solver
/// builds the same pieces per rank.
struct BlockKkt {
    CornerLayout corner;
    std::vector<BlockSystem> blocks; // index 0 unused placeholder, blocks 1..N
    CornerSystem corner_system;
};

inline BlockKkt assemble_block_kkt(const StandardArrowhead& sp, const std::vector<std::vector<double>>& sigma,
                                   const LinkClassification& cls) {
    const index_t nblocks = sp.problem.num_blocks();
    BlockKkt kkt;
    kkt.corner = make_corner_layout(cls, sp.problem.num_linking_vars(), sp.problem.blocks[0].num_eq);
    kkt.blocks.resize(static_cast<size_t>(nblocks) + 1);
    for (index_t i = 1; i <= nblocks; ++i) {
        kkt.blocks[static_cast<size_t>(i)] = build_block_system(sp, kkt.corner, i);
        set_sigma(kkt.blocks[static_cast<size_t>(i)], sigma[static_cast<size_t>(i)]);
    }
    kkt.corner_system = build_corner_system(sp, kkt.corner);
    for (index_t j = 0; j < kkt.corner.num_x0; ++j)
        kkt.corner_system.kmat.values[static_cast<size_t>(kkt.corner_system.sigma_slot[static_cast<size_t>(j)])] =
            sigma[0][static_cast<size_t>(j)];
    return kkt;
}

/// Dense reconstruction of the permuted system plus the permutation to the
/// natural ordering (x_0, x_1.., y_0, y_1.., y_link), for exactness tests.
struct DenseReassembly {
    DenseSymMatrix matrix;       // permuted ordering: z_1, .., z_N, corner
    std::vector<index_t> to_natural; // permuted index -> natural index
};

inline DenseReassembly densify_block_kkt(const BlockKkt& kkt, const StandardArrowhead& sp,
                                         const LinkClassification& cls) {
    const index_t nblocks = sp.problem.num_blocks();
    index_t dim = kkt.corner.dim;
    std::vector<index_t> z_off(static_cast<size_t>(nblocks) + 1, 0);
    for (index_t i = 1; i <= nblocks; ++i) {
        z_off[static_cast<size_t>(i)] = (i == 1) ? 0 : z_off[static_cast<size_t>(i - 1)] + kkt.blocks[static_cast<size_t>(i - 1)].order();
    }
    const index_t corner_off = z_off[static_cast<size_t>(nblocks)] + kkt.blocks[static_cast<size_t>(nblocks)].order();
    dim += corner_off;

    DenseReassembly out;
    out.matrix = DenseSymMatrix(dim);
    auto put = [&](index_t i, index_t j, double v) {
        if (i >= j)
            out.matrix.at(i, j) += v;
        else
            out.matrix.at(j, i) += v;
    };
    for (index_t i = 1; i <= nblocks; ++i) {
        const BlockSystem& b = kkt.blocks[static_cast<size_t>(i)];
        const index_t off = z_off[static_cast<size_t>(i)];
        for (index_t j = 0; j < b.order(); ++j)
            for (index_t p = b.kmat.col_ptr[static_cast<size_t>(j)]; p < b.kmat.col_ptr[static_cast<size_t>(j) + 1]; ++p)
                put(off + b.kmat.row_index[static_cast<size_t>(p)], off + j, b.kmat.values[static_cast<size_t>(p)]);
        for (index_t j = 0; j < b.border.cols; ++j)
            for (index_t p = b.border.col_ptr[static_cast<size_t>(j)]; p < b.border.col_ptr[static_cast<size_t>(j) + 1]; ++p)
                put(off + b.border.row_index[static_cast<size_t>(p)], corner_off + j, b.border.values[static_cast<size_t>(p)]);
    }
    const SymSparseMatrix& k0 = kkt.corner_system.kmat;
    for (index_t j = 0; j < k0.order; ++j)
        for (index_t p = k0.col_ptr[static_cast<size_t>(j)]; p < k0.col_ptr[static_cast<size_t>(j) + 1]; ++p)
            put(corner_off + k0.row_index[static_cast<size_t>(p)], corner_off + j, k0.values[static_cast<size_t>(p)]);

    // natural order: x_0, x_1..x_N, y_0, y_1..y_N, y_link
    std::vector<index_t> var_nat(static_cast<size_t>(nblocks) + 1, 0);
    index_t acc = sp.problem.blocks[0].num_vars;
    for (index_t i = 1; i <= nblocks; ++i) {
        var_nat[static_cast<size_t>(i)] = acc;
        acc += sp.problem.blocks[static_cast<size_t>(i)].num_vars;
    }
    const index_t y0_nat = acc;
    std::vector<index_t> row_nat(static_cast<size_t>(nblocks) + 1, 0);
    acc += sp.problem.blocks[0].num_eq;
    for (index_t i = 1; i <= nblocks; ++i) {
        row_nat[static_cast<size_t>(i)] = acc;
        acc += sp.problem.blocks[static_cast<size_t>(i)].num_eq;
    }
    const index_t link_nat = acc;

    out.to_natural.assign(static_cast<size_t>(dim), -1);
    for (index_t i = 1; i <= nblocks; ++i) {
        const BlockSystem& b = kkt.blocks[static_cast<size_t>(i)];
        for (index_t j = 0; j < b.num_vars; ++j)
            out.to_natural[static_cast<size_t>(z_off[static_cast<size_t>(i)] + j)] = var_nat[static_cast<size_t>(i)] + j;
        for (index_t r = 0; r < b.num_rows; ++r)
            out.to_natural[static_cast<size_t>(z_off[static_cast<size_t>(i)] + b.num_vars + r)] =
                row_nat[static_cast<size_t>(i)] + r;
    }
    for (index_t r = 0; r < static_cast<index_t>(cls.order.size()); ++r)
        out.to_natural[static_cast<size_t>(corner_off + r)] = link_nat + cls.order[static_cast<size_t>(r)];
    for (index_t j = 0; j < kkt.corner.num_x0; ++j)
        out.to_natural[static_cast<size_t>(corner_off + kkt.corner.x0_offset + j)] = j;
    for (index_t r = 0; r < kkt.corner.num_y0; ++r)
        out.to_natural[static_cast<size_t>(corner_off + kkt.corner.y0_offset + r)] = y0_nat + r;
    return out;
}

} // namespace ahlp::schur
