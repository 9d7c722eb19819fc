#pragma once

#include <algorithm>
#include <cassert>

#include "ahlp/core.hpp"
#include "ahlp/sparse.hpp"

namespace ahlp::linalg {

/// Fill-reducing ordering of a symmetric pattern: quotient-graph minimum degree
/// with element absorption. Computed once per symbolic pattern and reused across
/// refactorizations. Ties break on the smallest index, so the result is
/// deterministic for a given pattern.
inline std::vector<index_t> fill_reducing_order(const SymSparseMatrix& m) {
    const index_t n = m.order;
    std::vector<std::vector<index_t>> avars(static_cast<size_t>(n)); // live variable adjacency
    std::vector<std::vector<index_t>> elems(static_cast<size_t>(n)); // adjacent element ids (pivot ids)
    std::vector<std::vector<index_t>> element_vars(static_cast<size_t>(n)); // L_e for eliminated pivots

    for (index_t j = 0; j < n; ++j) {
        for (index_t p = m.col_ptr[static_cast<size_t>(j)]; p < m.col_ptr[static_cast<size_t>(j) + 1]; ++p) {
            const index_t i = m.row_index[static_cast<size_t>(p)];
            if (i == j) continue;
            avars[static_cast<size_t>(i)].push_back(j);
            avars[static_cast<size_t>(j)].push_back(i);
        }
    }

    std::vector<char> alive(static_cast<size_t>(n), 1);
    std::vector<char> element_alive(static_cast<size_t>(n), 0);
    std::vector<index_t> degree(static_cast<size_t>(n), 0);
    std::vector<index_t> mark(static_cast<size_t>(n), -1);

    auto compute_degree = [&](index_t i, index_t stamp) {
        index_t d = 0;
        mark[static_cast<size_t>(i)] = stamp;
        for (index_t v : avars[static_cast<size_t>(i)])
            if (alive[static_cast<size_t>(v)] && mark[static_cast<size_t>(v)] != stamp) {
                mark[static_cast<size_t>(v)] = stamp;
                ++d;
            }
        for (index_t e : elems[static_cast<size_t>(i)]) {
            if (!element_alive[static_cast<size_t>(e)]) continue;
            for (index_t v : element_vars[static_cast<size_t>(e)])
                if (alive[static_cast<size_t>(v)] && mark[static_cast<size_t>(v)] != stamp) {
                    mark[static_cast<size_t>(v)] = stamp;
                    ++d;
                }
        }
        return d;
    };

    index_t stamp = n;
    for (index_t i = 0; i < n; ++i) degree[static_cast<size_t>(i)] = compute_degree(i, stamp++);

    std::vector<index_t> order;
    order.reserve(static_cast<size_t>(n));

    for (index_t step = 0; step < n; ++step) {
        index_t best = -1;
        for (index_t i = 0; i < n; ++i)
            if (alive[static_cast<size_t>(i)] && (best < 0 || degree[static_cast<size_t>(i)] < degree[static_cast<size_t>(best)]))
                best = i;
        const index_t p = best;
        order.push_back(p);
        alive[static_cast<size_t>(p)] = 0;

        // new element: reach of p through its variables and absorbed elements
        std::vector<index_t> reach;
        const index_t s = stamp++;
        mark[static_cast<size_t>(p)] = s;
        for (index_t v : avars[static_cast<size_t>(p)])
            if (alive[static_cast<size_t>(v)] && mark[static_cast<size_t>(v)] != s) {
                mark[static_cast<size_t>(v)] = s;
                reach.push_back(v);
            }
        for (index_t e : elems[static_cast<size_t>(p)]) {
            if (!element_alive[static_cast<size_t>(e)]) continue;
            for (index_t v : element_vars[static_cast<size_t>(e)])
                if (alive[static_cast<size_t>(v)] && mark[static_cast<size_t>(v)] != s) {
                    mark[static_cast<size_t>(v)] = s;
                    reach.push_back(v);
                }
            element_alive[static_cast<size_t>(e)] = 0; // absorbed
        }
        std::sort(reach.begin(), reach.end());
        element_alive[static_cast<size_t>(p)] = 1;
        element_vars[static_cast<size_t>(p)] = reach;

        for (index_t i : reach) {
            // edges inside the element become redundant
            auto& ai = avars[static_cast<size_t>(i)];
            ai.erase(std::remove_if(ai.begin(), ai.end(),
                                    [&](index_t v) {
                                        return !alive[static_cast<size_t>(v)] || mark[static_cast<size_t>(v)] == s;
                                    }),
                     ai.end());
            auto& ei = elems[static_cast<size_t>(i)];
            ei.erase(std::remove_if(ei.begin(), ei.end(),
                                    [&](index_t e) { return !element_alive[static_cast<size_t>(e)]; }),
                     ei.end());
            ei.push_back(p);
            degree[static_cast<size_t>(i)] = compute_degree(i, stamp++);
        }
    }
    return order;
}

} // namespace ahlp::linalg
