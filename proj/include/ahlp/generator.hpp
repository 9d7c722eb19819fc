#pragma once

#include "ahlp/problem.hpp"

namespace ahlp {

struct GeneratorParams {
    index_t num_blocks = 2;          // N
    index_t block_rows = 4;          // equality rows per diagonal block
    index_t block_cols = 6;          // variables per diagonal block
    index_t num_linking_vars = 0;    // n_0
    std::vector<index_t> local_links; // l_g per consecutive pair, size N-1 (empty: none)
    index_t global_links = 0;        // m_F
    double density = 0.3;
    std::uint64_t seed = 0;

    static GeneratorParams uniform(index_t n, index_t rows, index_t cols, index_t n0, index_t links_per_pair,
                                   index_t globals, double density, std::uint64_t seed) {
        GeneratorParams p;
        p.num_blocks = n;
        p.block_rows = rows;
        p.block_cols = cols;
        p.num_linking_vars = n0;
        if (n >= 2) p.local_links.assign(static_cast<size_t>(n - 1), links_per_pair);
        p.global_links = globals;
        p.density = density;
        p.seed = seed;
        return p;
    }
};

/// A generated problem together with the primal-dual pair it was built around.
/// The planted point satisfies the KKT conditions exactly (up to roundoff), so
/// planted_objective is the optimal value and serves as ground truth in tests.
struct GeneratedInstance {
    ArrowheadProblem problem;
    std::vector<std::vector<double>> planted_primal; // per block, including block 0
    double planted_objective = 0.0;
};

namespace detail {

inline void check_params(const GeneratorParams& g) {
    auto reject = [](const std::string& m) { throw invalid_argument_error("generator: " + m); };
    if (g.num_blocks < 1) reject("need at least one diagonal block");
    if (g.block_rows < 0 || g.block_cols < 1 || g.num_linking_vars < 0 || g.global_links < 0)
        reject("negative dimension");
    if (g.block_rows > g.block_cols) reject("block_rows must not exceed block_cols (full row rank)");
    if (!(g.density > 0.0 && g.density <= 1.0)) reject("density must lie in (0, 1]");
    if (!g.local_links.empty() && static_cast<index_t>(g.local_links.size()) != g.num_blocks - 1)
        reject("local_links must have one count per consecutive block pair");
    for (index_t l : g.local_links)
        if (l < 0) reject("negative local link count");
    if (g.num_blocks < 2 && !g.local_links.empty()) reject("local links need at least two blocks");
    if (g.global_links > 0 && g.num_blocks < 3 && g.num_linking_vars < 1)
        reject("global links need either a block gap (N >= 3) or linking variables");
}

} // namespace detail

inline GeneratedInstance generate(const GeneratorParams& g) {
    detail::check_params(g);
    Rng rng(g.seed * 0x51f1u + 17);
    const index_t nblocks = g.num_blocks;
    const index_t n0 = g.num_linking_vars;

    GeneratedInstance out;
    ArrowheadProblem& p = out.problem;
    p.blocks.resize(static_cast<size_t>(nblocks) + 1);

    p.blocks[0].num_vars = n0;
    p.blocks[0].num_eq = 0;
    for (index_t i = 1; i <= nblocks; ++i) {
        p.blocks[static_cast<size_t>(i)].num_vars = g.block_cols;
        p.blocks[static_cast<size_t>(i)].num_eq = g.block_rows;
    }

    auto rnd_coeff = [&] {
        const double v = rng.uniform(0.4, 1.6);
        return rng.uniform() < 0.5 ? -v : v;
    };

    // planted primal point
    out.planted_primal.resize(static_cast<size_t>(nblocks) + 1);
    for (index_t i = 0; i <= nblocks; ++i) {
        auto& x = out.planted_primal[static_cast<size_t>(i)];
        x.resize(static_cast<size_t>(p.blocks[static_cast<size_t>(i)].num_vars));
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
    }

    // diagonal blocks: a full-row-rank spine plus density-driven extras
    for (index_t i = 1; i <= nblocks; ++i) {
        BlockData& b = p.blocks[static_cast<size_t>(i)];
        b.diag_eq = SparseBlock(b.num_eq, b.num_vars);
        std::vector<index_t> spine(static_cast<size_t>(b.num_vars));
        for (index_t c = 0; c < b.num_vars; ++c) spine[static_cast<size_t>(c)] = c;
        for (index_t c = b.num_vars - 1; c > 0; --c) std::swap(spine[static_cast<size_t>(c)], spine[static_cast<size_t>(rng.below(c + 1))]);
        for (index_t r = 0; r < b.num_eq; ++r) {
            const index_t pivot_col = spine[static_cast<size_t>(r)];
            b.diag_eq.add(r, pivot_col, rnd_coeff());
            for (index_t c = 0; c < b.num_vars; ++c)
                if (c != pivot_col && rng.uniform() < g.density) b.diag_eq.add(r, c, rnd_coeff());
        }
        b.border_eq = SparseBlock(b.num_eq, n0);
        for (index_t r = 0; r < b.num_eq; ++r)
            for (index_t c = 0; c < n0; ++c)
                if (rng.uniform() < g.density) b.border_eq.add(r, c, rnd_coeff());
        b.border_ineq = SparseBlock(0, n0);
        b.diag_ineq = SparseBlock(0, b.num_vars);
    }
    p.blocks[0].border_eq = SparseBlock(0, n0);
    p.blocks[0].border_ineq = SparseBlock(0, n0);

    // linking rows: locals first in a scratch list, then globals, then shuffled
    struct LinkRow {
        std::vector<std::pair<index_t, std::pair<index_t, double>>> entries; // (block, (col, value)); block 0 = F_0
    };
    std::vector<LinkRow> rows;
    for (index_t gidx = 1; gidx <= nblocks - 1; ++gidx) {
        const index_t count = g.local_links.empty() ? 0 : g.local_links[static_cast<size_t>(gidx - 1)];
        for (index_t t = 0; t < count; ++t) {
            LinkRow row;
            for (index_t side = 0; side < 2; ++side) {
                const index_t blk = gidx + side;
                const index_t ncols = p.blocks[static_cast<size_t>(blk)].num_vars;
                const index_t first = rng.below(ncols);
                row.entries.push_back({blk, {first, rnd_coeff()}});
                for (index_t c = 0; c < ncols; ++c)
                    if (c != first && rng.uniform() < g.density * 0.5) row.entries.push_back({blk, {c, rnd_coeff()}});
            }
            for (index_t c = 0; c < n0; ++c)
                if (rng.uniform() < g.density * 0.5) row.entries.push_back({0, {c, rnd_coeff()}});
            rows.push_back(std::move(row));
        }
    }
    for (index_t t = 0; t < g.global_links; ++t) {
        LinkRow row;
        if (nblocks >= 3) {
            const index_t bi = 1 + rng.below(nblocks - 2);       // in [1, N-2]
            const index_t bj = bi + 2 + rng.below(nblocks - bi - 1); // in [bi+2, N]
            for (index_t blk : {bi, bj}) {
                const index_t ncols = p.blocks[static_cast<size_t>(blk)].num_vars;
                row.entries.push_back({blk, {rng.below(ncols), rnd_coeff()}});
            }
            for (index_t c = 0; c < n0; ++c)
                if (rng.uniform() < g.density * 0.5) row.entries.push_back({0, {c, rnd_coeff()}});
        } else {
            // no admissible block gap: support only in F_0 (global by convention)
            const index_t first = rng.below(n0);
            row.entries.push_back({0, {first, rnd_coeff()}});
            for (index_t c = 0; c < n0; ++c)
                if (c != first && rng.uniform() < g.density) row.entries.push_back({0, {c, rnd_coeff()}});
        }
        rows.push_back(std::move(row));
    }
    for (size_t r = rows.size(); r > 1; --r)
        std::swap(rows[r - 1], rows[static_cast<size_t>(rng.below(static_cast<index_t>(r)))]);

    const index_t link_rows = static_cast<index_t>(rows.size());
    p.link_rhs_eq.assign(static_cast<size_t>(link_rows), 0.0);
    for (index_t i = 0; i <= nblocks; ++i) {
        p.blocks[static_cast<size_t>(i)].link_eq = SparseBlock(link_rows, p.blocks[static_cast<size_t>(i)].num_vars);
        p.blocks[static_cast<size_t>(i)].link_ineq = SparseBlock(0, p.blocks[static_cast<size_t>(i)].num_vars);
    }
    for (index_t r = 0; r < link_rows; ++r)
        for (const auto& [blk, cv] : rows[static_cast<size_t>(r)].entries)
            p.blocks[static_cast<size_t>(blk)].link_eq.add(r, cv.first, cv.second);

    // duals
    std::vector<std::vector<double>> y(static_cast<size_t>(nblocks) + 1);
    for (index_t i = 1; i <= nblocks; ++i) {
        y[static_cast<size_t>(i)].resize(static_cast<size_t>(g.block_rows));
        for (double& v : y[static_cast<size_t>(i)]) v = rng.uniform(-1.0, 1.0);
    }
    std::vector<double> y_link(static_cast<size_t>(link_rows));
    for (double& v : y_link) v = rng.uniform(-1.0, 1.0);

    // bounds with a strictly complementary active subset; gamma_net = gamma_l - gamma_u
    std::vector<std::vector<double>> gamma_net(static_cast<size_t>(nblocks) + 1);
    for (index_t i = 0; i <= nblocks; ++i) {
        BlockData& b = p.blocks[static_cast<size_t>(i)];
        auto& x = out.planted_primal[static_cast<size_t>(i)];
        auto& gn = gamma_net[static_cast<size_t>(i)];
        b.lower.assign(static_cast<size_t>(b.num_vars), -kInf);
        b.upper.assign(static_cast<size_t>(b.num_vars), kInf);
        gn.assign(static_cast<size_t>(b.num_vars), 0.0);
        for (index_t j = 0; j < b.num_vars; ++j) {
            const double roll = rng.uniform();
            const bool has_lower = roll < 0.70;
            const bool has_upper = roll >= 0.45 && roll < 0.85; // overlap gives two-sided
            const bool active = rng.uniform() < 0.25 && (has_lower || has_upper);
            const bool at_lower = active && (has_lower && (!has_upper || rng.uniform() < 0.5));
            const bool at_upper = active && !at_lower && has_upper;
            auto margin = [&] { return rng.uniform(0.4, 1.6); };
            if (has_lower) b.lower[static_cast<size_t>(j)] = at_lower ? x[static_cast<size_t>(j)] : x[static_cast<size_t>(j)] - margin();
            if (has_upper) b.upper[static_cast<size_t>(j)] = at_upper ? x[static_cast<size_t>(j)] : x[static_cast<size_t>(j)] + margin();
            if (at_lower) gn[static_cast<size_t>(j)] = rng.uniform(0.2, 1.2);
            if (at_upper) gn[static_cast<size_t>(j)] = -rng.uniform(0.2, 1.2);
        }
    }

    // right-hand sides from the planted point
    for (index_t i = 1; i <= nblocks; ++i) {
        BlockData& b = p.blocks[static_cast<size_t>(i)];
        b.rhs_eq.assign(static_cast<size_t>(b.num_eq), 0.0);
        b.border_eq.multiply_add(out.planted_primal[0], b.rhs_eq);
        b.diag_eq.multiply_add(out.planted_primal[static_cast<size_t>(i)], b.rhs_eq);
    }
    for (index_t i = 0; i <= nblocks; ++i)
        p.blocks[static_cast<size_t>(i)].link_eq.multiply_add(out.planted_primal[static_cast<size_t>(i)], p.link_rhs_eq);

    // objective from stationarity: c = A^T y + gamma
    for (index_t i = 0; i <= nblocks; ++i) {
        BlockData& b = p.blocks[static_cast<size_t>(i)];
        b.objective = gamma_net[static_cast<size_t>(i)];
        b.link_eq.multiply_transpose_add(y_link, b.objective);
        if (i >= 1) b.diag_eq.multiply_transpose_add(y[static_cast<size_t>(i)], b.objective);
    }
    for (index_t i = 1; i <= nblocks; ++i)
        p.blocks[static_cast<size_t>(i)].border_eq.multiply_transpose_add(y[static_cast<size_t>(i)], p.blocks[0].objective);

    for (index_t i = 0; i <= nblocks; ++i) {
        const BlockData& b = p.blocks[static_cast<size_t>(i)];
        for (index_t j = 0; j < b.num_vars; ++j)
            out.planted_objective += b.objective[static_cast<size_t>(j)] * out.planted_primal[static_cast<size_t>(i)][static_cast<size_t>(j)];
        p.blocks[static_cast<size_t>(i)].border_eq.sort_canonical();
        p.blocks[static_cast<size_t>(i)].diag_eq.sort_canonical();
        p.blocks[static_cast<size_t>(i)].link_eq.sort_canonical();
    }
    return out;
}

} // namespace ahlp
