#pragma once

#include <functional>
#include <unordered_map>

#include "ahlp/core.hpp"
#include "ahlp/dense.hpp"
#include "ahlp/ordering.hpp"
#include "ahlp/sparse.hpp"

namespace ahlp::linalg {

enum class RowKind : std::uint8_t { primal, dual };

/// Static diagonal regularization. Primal rows are shifted by -primal, dual rows
/// by +dual, which keeps IPM augmented systems quasi-definite (the primal block
/// carries a negative diagonal in this codebase). On pivot failure the shifts are
/// doubled up to escalation_cap, then the factorization aborts.
struct Regularization {
    double primal = 0.0;
    double dual = 0.0;
    double escalation_cap = 0.0;
    std::vector<RowKind> kinds; // per row; empty means all primal

    static Regularization none() { return {}; }

    static Regularization standard(std::vector<RowKind> kinds_) {
        Regularization r;
        r.primal = 1e-10;
        r.dual = 1e-10;
        r.escalation_cap = 1e-6;
        r.kinds = std::move(kinds_);
        return r;
    }
};

struct FactorOptions {
    double pivot_threshold = 0.01; // Bunch-Kaufman-style acceptance threshold
    double singular_tol = 1e-13;   // relative to the largest entry magnitude
    const std::vector<index_t>* order_hint = nullptr;
};

/// Sparse symmetric indefinite L D L^T with dynamic 1x1/2x2 diagonal pivoting.
/// Pivot candidates are visited in fill-reducing order; candidates failing the
/// threshold test are deferred to a later pass. Immutable after construction and
/// safe to share across workers; solves only read the factors.
class Factorization {
public:
    Factorization() = default;

    static Factorization compute(const SymSparseMatrix& k, const Regularization& reg = {},
                                 const FactorOptions& opts = {}) {
        Factorization f;
        f.n_ = k.order;
        double ep = reg.primal;
        double ed = reg.dual;
        for (;;) {
            try {
                f.attempt(k, reg.kinds, ep, ed, opts);
                f.applied_primal_ = ep;
                f.applied_dual_ = ed;
                return f;
            } catch (const singular_error&) {
                const double cur = std::max(ep, ed);
                const double next = cur == 0.0 ? 1e-10 : cur * 2.0;
                if (reg.escalation_cap > 0.0 && next <= reg.escalation_cap) {
                    ep = ep == 0.0 ? next : ep * 2.0;
                    ed = ed == 0.0 ? next : ed * 2.0;
                    continue;
                }
                throw;
            }
        }
    }

    index_t order() const { return n_; }
    const Inertia& inertia() const { return inertia_; }
    double applied_primal_reg() const { return applied_primal_; }
    double applied_dual_reg() const { return applied_dual_; }
    index_t num_2x2_pivots() const { return two_by_two_; }

    void solve_in_place(std::span<double> b) const {
        assert(static_cast<index_t>(b.size()) == n_);
        // forward: L z = b (unit diagonal blocks)
        for (const Pivot& piv : pivots_) {
            if (piv.two) {
                const double bp = b[static_cast<size_t>(piv.p)];
                const double bq = b[static_cast<size_t>(piv.q)];
                for (size_t t = piv.col_begin; t < piv.col_mid; ++t)
                    b[static_cast<size_t>(l_rows_[t])] -= l_vals_[t] * bp;
                for (size_t t = piv.col_mid; t < piv.col_end; ++t)
                    b[static_cast<size_t>(l_rows_[t])] -= l_vals_[t] * bq;
            } else {
                const double bp = b[static_cast<size_t>(piv.p)];
                for (size_t t = piv.col_begin; t < piv.col_end; ++t)
                    b[static_cast<size_t>(l_rows_[t])] -= l_vals_[t] * bp;
            }
        }
        // diagonal blocks
        for (const Pivot& piv : pivots_) {
            if (piv.two) {
                const double zp = b[static_cast<size_t>(piv.p)];
                const double zq = b[static_cast<size_t>(piv.q)];
                const double det = piv.d1 * piv.d2 - piv.b * piv.b;
                b[static_cast<size_t>(piv.p)] = (piv.d2 * zp - piv.b * zq) / det;
                b[static_cast<size_t>(piv.q)] = (piv.d1 * zq - piv.b * zp) / det;
            } else {
                b[static_cast<size_t>(piv.p)] /= piv.d1;
            }
        }
        // backward: L^T x = z
        for (auto it = pivots_.rbegin(); it != pivots_.rend(); ++it) {
            const Pivot& piv = *it;
            if (piv.two) {
                double sp = b[static_cast<size_t>(piv.p)];
                double sq = b[static_cast<size_t>(piv.q)];
                for (size_t t = piv.col_begin; t < piv.col_mid; ++t)
                    sp -= l_vals_[t] * b[static_cast<size_t>(l_rows_[t])];
                for (size_t t = piv.col_mid; t < piv.col_end; ++t)
                    sq -= l_vals_[t] * b[static_cast<size_t>(l_rows_[t])];
                b[static_cast<size_t>(piv.p)] = sp;
                b[static_cast<size_t>(piv.q)] = sq;
            } else {
                double s = b[static_cast<size_t>(piv.p)];
                for (size_t t = piv.col_begin; t < piv.col_end; ++t)
                    s -= l_vals_[t] * b[static_cast<size_t>(l_rows_[t])];
                b[static_cast<size_t>(piv.p)] = s;
            }
        }
    }

    std::vector<double> solve(std::span<const double> rhs) const {
        std::vector<double> b(rhs.begin(), rhs.end());
        solve_in_place(b);
        return b;
    }

    /// Column-major multi-right-hand-side solve. Columns are independent, so the
    /// result is bitwise identical to one-at-a-time solves for any batching.
    void solve_multi(double* data, index_t num_cols, index_t lead) const {
        for (index_t j = 0; j < num_cols; ++j)
            solve_in_place(std::span<double>(data + static_cast<size_t>(j) * static_cast<size_t>(lead),
                                             static_cast<size_t>(n_)));
    }

private:
    struct Pivot {
        index_t p = 0;
        index_t q = -1;
        bool two = false;
        double d1 = 0.0, d2 = 0.0, b = 0.0;
        size_t col_begin = 0, col_mid = 0, col_end = 0; // ranges into l_rows_/l_vals_
    };

    index_t n_ = 0;
    std::vector<Pivot> pivots_;
    std::vector<index_t> l_rows_;
    std::vector<double> l_vals_;
    Inertia inertia_;
    index_t two_by_two_ = 0;
    double applied_primal_ = 0.0;
    double applied_dual_ = 0.0;

    using Col = std::unordered_map<index_t, double>;

    static double shift_for(index_t row, const std::vector<RowKind>& kinds, double ep, double ed) {
        const RowKind k = kinds.empty() ? RowKind::primal : kinds[static_cast<size_t>(row)];
        return k == RowKind::primal ? -ep : ed;
    }

    void attempt(const SymSparseMatrix& k, const std::vector<RowKind>& kinds, double ep, double ed,
                 const FactorOptions& opts) {
        pivots_.clear();
        l_rows_.clear();
        l_vals_.clear();
        inertia_ = {};
        two_by_two_ = 0;

        std::vector<Col> cols(static_cast<size_t>(n_));
        std::vector<double> diag(static_cast<size_t>(n_), 0.0);
        // singularity floors are per column: the diagonal of an interior-point
        // system legitimately spans many orders of magnitude
        std::vector<double> floor(static_cast<size_t>(n_), 0.0);
        for (index_t j = 0; j < n_; ++j) {
            for (index_t t = k.col_ptr[static_cast<size_t>(j)]; t < k.col_ptr[static_cast<size_t>(j) + 1]; ++t) {
                const index_t i = k.row_index[static_cast<size_t>(t)];
                const double v = k.values[static_cast<size_t>(t)];
                floor[static_cast<size_t>(j)] = std::max(floor[static_cast<size_t>(j)], std::abs(v));
                floor[static_cast<size_t>(i)] = std::max(floor[static_cast<size_t>(i)], std::abs(v));
                if (i == j) {
                    diag[static_cast<size_t>(j)] += v;
                } else {
                    cols[static_cast<size_t>(j)][i] = v;
                    cols[static_cast<size_t>(i)][j] = v;
                }
            }
        }
        for (index_t i = 0; i < n_; ++i) {
            diag[static_cast<size_t>(i)] += shift_for(i, kinds, ep, ed);
            floor[static_cast<size_t>(i)] =
                opts.singular_tol * std::max({floor[static_cast<size_t>(i)], std::abs(diag[static_cast<size_t>(i)]), 1e-300});
        }

        std::vector<index_t> queue;
        if (opts.order_hint) {
            queue = *opts.order_hint;
        } else {
            queue = fill_reducing_order(k);
        }

        std::vector<char> alive(static_cast<size_t>(n_), 1);
        index_t live = n_;
        const double kappa = opts.pivot_threshold;

        auto column_max = [&](index_t c, index_t skip) {
            double g = 0.0;
            index_t at = -1;
            for (const auto& [i, v] : cols[static_cast<size_t>(c)]) {
                if (i == skip) continue;
                const double av = std::abs(v);
                if (av > g || (av == g && at >= 0 && i < at)) {
                    g = av;
                    at = i;
                }
            }
            return std::pair<double, index_t>(g, at);
        };

        auto eliminate_1x1 = [&](index_t p) {
            const double d = diag[static_cast<size_t>(p)];
            Col& cp = cols[static_cast<size_t>(p)];
            std::vector<std::pair<index_t, double>> pat(cp.begin(), cp.end());
            std::sort(pat.begin(), pat.end());
            Pivot piv;
            piv.p = p;
            piv.d1 = d;
            piv.col_begin = l_rows_.size();
            for (const auto& [i, v] : pat) {
                l_rows_.push_back(i);
                l_vals_.push_back(v / d);
            }
            piv.col_mid = piv.col_end = l_rows_.size();
            for (const auto& [a, va] : pat) {
                const double wa = va / d;
                diag[static_cast<size_t>(a)] -= wa * va;
                Col& ca = cols[static_cast<size_t>(a)];
                ca.erase(p);
                for (const auto& [b, vb] : pat)
                    if (b != a) ca[b] -= wa * vb;
            }
            cp.clear();
            alive[static_cast<size_t>(p)] = 0;
            --live;
            if (d > 0.0)
                ++inertia_.positive;
            else
                ++inertia_.negative;
            pivots_.push_back(piv);
        };

        auto eliminate_2x2 = [&](index_t p, index_t q) {
            const double dp = diag[static_cast<size_t>(p)];
            const double dq = diag[static_cast<size_t>(q)];
            Col& cp = cols[static_cast<size_t>(p)];
            Col& cq = cols[static_cast<size_t>(q)];
            const double bpq = cp.count(q) ? cp.at(q) : 0.0;
            const double det = dp * dq - bpq * bpq;

            std::vector<index_t> uni;
            for (const auto& [i, v] : cp)
                if (i != q) uni.push_back(i);
            for (const auto& [i, v] : cq)
                if (i != p && !cp.count(i)) uni.push_back(i);
            std::sort(uni.begin(), uni.end());

            Pivot piv;
            piv.p = p;
            piv.q = q;
            piv.two = true;
            piv.d1 = dp;
            piv.d2 = dq;
            piv.b = bpq;

            std::vector<double> vp(uni.size()), vq(uni.size()), wp(uni.size()), wq(uni.size());
            for (size_t t = 0; t < uni.size(); ++t) {
                auto ip = cp.find(uni[t]);
                auto iq = cq.find(uni[t]);
                vp[t] = ip == cp.end() ? 0.0 : ip->second;
                vq[t] = iq == cq.end() ? 0.0 : iq->second;
                wp[t] = (dq * vp[t] - bpq * vq[t]) / det;
                wq[t] = (dp * vq[t] - bpq * vp[t]) / det;
            }
            piv.col_begin = l_rows_.size();
            for (size_t t = 0; t < uni.size(); ++t) {
                l_rows_.push_back(uni[t]);
                l_vals_.push_back(wp[t]);
            }
            piv.col_mid = l_rows_.size();
            for (size_t t = 0; t < uni.size(); ++t) {
                l_rows_.push_back(uni[t]);
                l_vals_.push_back(wq[t]);
            }
            piv.col_end = l_rows_.size();

            for (size_t a = 0; a < uni.size(); ++a) {
                const index_t ia = uni[a];
                diag[static_cast<size_t>(ia)] -= wp[a] * vp[a] + wq[a] * vq[a];
                Col& ca = cols[static_cast<size_t>(ia)];
                ca.erase(p);
                ca.erase(q);
                for (size_t c = 0; c < uni.size(); ++c) {
                    if (c == a) continue;
                    ca[uni[c]] -= wp[a] * vp[c] + wq[a] * vq[c];
                }
            }
            cp.clear();
            cq.clear();
            alive[static_cast<size_t>(p)] = 0;
            alive[static_cast<size_t>(q)] = 0;
            live -= 2;
            if (det < 0.0) {
                ++inertia_.positive;
                ++inertia_.negative;
            } else if (dp + dq > 0.0) {
                inertia_.positive += 2;
            } else {
                inertia_.negative += 2;
            }
            ++two_by_two_;
            pivots_.push_back(piv);
        };

        auto try_pivot = [&](index_t c) -> bool {
            const double d = diag[static_cast<size_t>(c)];
            auto [gamma, r] = column_max(c, -1);
            if (std::max(std::abs(d), gamma) <= floor[static_cast<size_t>(c)]) return false;
            if (std::abs(d) > floor[static_cast<size_t>(c)] && std::abs(d) >= kappa * gamma) {
                eliminate_1x1(c);
                return true;
            }
            if (r >= 0) {
                const double dr = diag[static_cast<size_t>(r)];
                const double b = cols[static_cast<size_t>(c)].at(r);
                const double det = d * dr - b * b;
                if (std::abs(det) > floor[static_cast<size_t>(c)] * floor[static_cast<size_t>(r)]) {
                    const double inv_norm = std::max(std::abs(dr) + std::abs(b), std::abs(d) + std::abs(b)) / std::abs(det);
                    auto [gr, rr] = column_max(r, c);
                    const double gmax = std::max(gamma, gr);
                    if (gmax == 0.0 || inv_norm * gmax <= 1.0 / kappa) {
                        eliminate_2x2(c, r);
                        return true;
                    }
                }
            }
            return false;
        };

        std::vector<index_t> pending = queue;
        while (live > 0) {
            std::vector<index_t> deferred;
            bool progressed = false;
            for (index_t c : pending) {
                if (!alive[static_cast<size_t>(c)]) continue;
                if (try_pivot(c))
                    progressed = true;
                else
                    deferred.push_back(c);
            }
            deferred.erase(std::remove_if(deferred.begin(), deferred.end(),
                                          [&](index_t c) { return !alive[static_cast<size_t>(c)]; }),
                           deferred.end());
            if (!progressed && !deferred.empty()) {
                // forced pivot: the strongest remaining column, 2x2 with its
                // largest partner when the diagonal alone is unusable
                index_t best = -1;
                double best_score = 0.0;
                for (index_t c : deferred) {
                    auto [g, r] = column_max(c, -1);
                    const double score = std::max(std::abs(diag[static_cast<size_t>(c)]), g);
                    if (best < 0 || score > best_score) {
                        best = c;
                        best_score = score;
                    }
                }
                if (best_score <= floor[static_cast<size_t>(best)])
                    throw singular_error(best, "sparse factorization: singular");
                auto [g, r] = column_max(best, -1);
                const double d = diag[static_cast<size_t>(best)];
                bool done = false;
                if (r >= 0) {
                    const double det = d * diag[static_cast<size_t>(r)] - g * g;
                    if (std::abs(det) > floor[static_cast<size_t>(best)] * floor[static_cast<size_t>(r)]) {
                        eliminate_2x2(best, r);
                        done = true;
                    }
                }
                if (!done) {
                    if (std::abs(d) <= floor[static_cast<size_t>(best)])
                        throw singular_error(best, "sparse factorization: singular 2x2 block");
                    eliminate_1x1(best);
                }
                deferred.erase(std::remove_if(deferred.begin(), deferred.end(),
                                              [&](index_t c) { return !alive[static_cast<size_t>(c)]; }),
                               deferred.end());
            }
            pending = std::move(deferred);
            if (pending.empty() && live > 0) {
                // should not happen: every live column is either queued or deferred
                throw singular_error(-1, "sparse factorization: lost pivot candidates");
            }
        }
    }
};

inline Factorization factor_indefinite(const SymSparseMatrix& k, const Regularization& reg = {},
                                       const FactorOptions& opts = {}) {
    return Factorization::compute(k, reg, opts);
}

/// Dense column block (column-major) for multi-right-hand-side solves.
struct DenseColumns {
    index_t rows = 0;
    index_t cols = 0;
    std::vector<double> data; // column-major, lead = rows

    DenseColumns() = default;
    DenseColumns(index_t r, index_t c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

    double* col(index_t j) { return data.data() + static_cast<size_t>(j) * static_cast<size_t>(rows); }
    const double* col(index_t j) const { return data.data() + static_cast<size_t>(j) * static_cast<size_t>(rows); }
};

inline DenseColumns solve_multi(const Factorization& f, const DenseColumns& b, index_t batch_width = 64) {
    if (b.rows != f.order()) throw invalid_argument_error("solve_multi: dimension mismatch");
    DenseColumns z = b;
    const index_t width = std::max<index_t>(1, std::min(batch_width, b.cols));
    for (index_t j0 = 0; j0 < b.cols; j0 += width) {
        const index_t w = std::min(width, b.cols - j0);
        f.solve_multi(z.col(j0), w, z.rows);
    }
    return z;
}

/// S = K0 - L^T K^{-1} L, computed column-wise over the structurally nonzero
/// columns of L (batched). With a pattern predicate, entries outside the pattern
/// must vanish up to drop_tol; anything larger trips a structure_error.
inline DenseSymMatrix schur_complement(const Factorization& k_fact, const CscMatrix& l, const SymSparseMatrix& k0,
                                       const std::function<bool(index_t, index_t)>& pattern = nullptr,
                                       double drop_tol = 1e-12) {
    if (l.rows != k_fact.order() || k0.order != l.cols)
        throw invalid_argument_error("schur_complement: dimension mismatch");
    const index_t c = l.cols;
    DenseSymMatrix s(c);
    for (index_t j = 0; j < c; ++j)
        for (index_t p = k0.col_ptr[static_cast<size_t>(j)]; p < k0.col_ptr[static_cast<size_t>(j) + 1]; ++p)
            s.at(k0.row_index[static_cast<size_t>(p)], j) += k0.values[static_cast<size_t>(p)];

    std::vector<index_t> nz_cols;
    for (index_t j = 0; j < c; ++j)
        if (l.col_ptr[static_cast<size_t>(j)] < l.col_ptr[static_cast<size_t>(j) + 1]) nz_cols.push_back(j);

    const index_t batch = std::max<index_t>(1, std::min<index_t>(64, static_cast<index_t>(nz_cols.size())));
    for (size_t j0 = 0; j0 < nz_cols.size(); j0 += static_cast<size_t>(batch)) {
        const size_t j1 = std::min(nz_cols.size(), j0 + static_cast<size_t>(batch));
        DenseColumns rhs(l.rows, static_cast<index_t>(j1 - j0));
        for (size_t t = j0; t < j1; ++t) {
            const index_t j = nz_cols[t];
            double* col = rhs.col(static_cast<index_t>(t - j0));
            for (index_t p = l.col_ptr[static_cast<size_t>(j)]; p < l.col_ptr[static_cast<size_t>(j) + 1]; ++p)
                col[l.row_index[static_cast<size_t>(p)]] = l.values[static_cast<size_t>(p)];
        }
        DenseColumns z = solve_multi(k_fact, rhs);
        for (size_t t = j0; t < j1; ++t) {
            const index_t j = nz_cols[t];
            const double* zj = z.col(static_cast<index_t>(t - j0));
            for (index_t q : nz_cols) {
                if (q < j) continue; // lower triangle only
                double dot = 0.0;
                for (index_t p = l.col_ptr[static_cast<size_t>(q)]; p < l.col_ptr[static_cast<size_t>(q) + 1]; ++p)
                    dot += l.values[static_cast<size_t>(p)] * zj[l.row_index[static_cast<size_t>(p)]];
                if (pattern && !pattern(q, j)) {
                    if (std::abs(dot) > drop_tol)
                        throw structure_error("schur_complement: fill outside the predicted pattern");
                    continue;
                }
                s.at(q, j) -= dot;
            }
        }
    }
    return s;
}

} // namespace ahlp::linalg
