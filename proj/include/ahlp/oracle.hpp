#pragma once

#include "ahlp/dense.hpp"
#include "ahlp/ipm.hpp"
#include "ahlp/problem.hpp"

namespace ahlp::oracle {

/// Whole augmented system as one dense symmetric matrix in the natural
/// ordering (x_0, x_1.., x_N, y_0, y_1.., y_N, y_link). Ground truth for the
/// structured paths; shares no assembly or elimination code with them.
struct DenseSystem {
    index_t order = 0;
    DenseSymMatrix matrix;
    std::vector<index_t> var_offset; // per block 0..N
    std::vector<index_t> row_offset; // per block 0..N
    index_t link_offset = 0;
};

inline DenseSystem assemble_dense(const StandardArrowhead& sp, const std::map<index_t, std::vector<double>>& sigma,
                                  double reg_primal = 0.0, double reg_dual = 0.0, index_t order_cap = 5000) {
    const ArrowheadProblem& p = sp.problem;
    const index_t nblocks = p.num_blocks();
    DenseSystem sys;
    sys.var_offset.resize(static_cast<size_t>(nblocks) + 1);
    sys.row_offset.resize(static_cast<size_t>(nblocks) + 1);
    index_t off = 0;
    for (index_t i = 0; i <= nblocks; ++i) {
        sys.var_offset[static_cast<size_t>(i)] = off;
        off += p.blocks[static_cast<size_t>(i)].num_vars;
    }
    for (index_t i = 0; i <= nblocks; ++i) {
        sys.row_offset[static_cast<size_t>(i)] = off;
        off += p.blocks[static_cast<size_t>(i)].num_eq;
    }
    sys.link_offset = off;
    sys.order = off + p.num_link_eq();
    if (sys.order > order_cap)
        throw invalid_argument_error("dense oracle: order " + std::to_string(sys.order) + " exceeds cap " +
                                     std::to_string(order_cap));

    sys.matrix = DenseSymMatrix(sys.order);
    auto put = [&](index_t i, index_t j, double v) {
        if (i >= j)
            sys.matrix.at(i, j) += v;
        else
            sys.matrix.at(j, i) += v;
    };
    for (index_t i = 0; i <= nblocks; ++i) {
        const BlockData& b = p.blocks[static_cast<size_t>(i)];
        const auto& sg = sigma.at(i);
        for (index_t j = 0; j < b.num_vars; ++j)
            put(sys.var_offset[static_cast<size_t>(i)] + j, sys.var_offset[static_cast<size_t>(i)] + j,
                sg[static_cast<size_t>(j)] - reg_primal);
        for (const Entry& e : b.border_eq.entries)
            put(sys.row_offset[static_cast<size_t>(i)] + e.row, sys.var_offset[0] + e.col, e.value);
        if (i > 0)
            for (const Entry& e : b.diag_eq.entries)
                put(sys.row_offset[static_cast<size_t>(i)] + e.row, sys.var_offset[static_cast<size_t>(i)] + e.col,
                    e.value);
        for (const Entry& e : b.link_eq.entries)
            put(sys.link_offset + e.row, sys.var_offset[static_cast<size_t>(i)] + e.col, e.value);
        if (reg_dual != 0.0)
            for (index_t r = 0; r < b.num_eq; ++r)
                put(sys.row_offset[static_cast<size_t>(i)] + r, sys.row_offset[static_cast<size_t>(i)] + r, reg_dual);
    }
    if (reg_dual != 0.0)
        for (index_t r = 0; r < p.num_link_eq(); ++r) put(sys.link_offset + r, sys.link_offset + r, reg_dual);
    sys.matrix.symmetrize();
    return sys;
}

/// Plain LU with partial pivoting on full storage; deliberately a different
/// elimination than anything in the structured path.
class DenseLu {
public:
    DenseLu() = default;

    static DenseLu compute(const DenseSymMatrix& m) {
        DenseLu f;
        f.n_ = m.order;
        f.a_ = m.data;
        f.perm_.resize(static_cast<size_t>(f.n_));
        for (index_t i = 0; i < f.n_; ++i) f.perm_[static_cast<size_t>(i)] = i;
        for (index_t k = 0; k < f.n_; ++k) {
            index_t piv = k;
            double best = std::abs(f.a(k, k));
            for (index_t i = k + 1; i < f.n_; ++i)
                if (std::abs(f.a(i, k)) > best) {
                    best = std::abs(f.a(i, k));
                    piv = i;
                }
            if (best == 0.0) throw singular_error(k, "dense LU: zero pivot column");
            if (piv != k) {
                for (index_t j = 0; j < f.n_; ++j) std::swap(f.a(k, j), f.a(piv, j));
                std::swap(f.perm_[static_cast<size_t>(k)], f.perm_[static_cast<size_t>(piv)]);
            }
            const double d = 1.0 / f.a(k, k);
            for (index_t i = k + 1; i < f.n_; ++i) {
                const double l = f.a(i, k) * d;
                if (l == 0.0) continue;
                f.a(i, k) = l;
                for (index_t j = k + 1; j < f.n_; ++j) f.a(i, j) -= l * f.a(k, j);
            }
        }
        return f;
    }

    std::vector<double> solve(std::span<const double> rhs) const {
        std::vector<double> b(static_cast<size_t>(n_));
        for (index_t i = 0; i < n_; ++i) b[static_cast<size_t>(i)] = rhs[static_cast<size_t>(perm_[static_cast<size_t>(i)])];
        for (index_t i = 0; i < n_; ++i)
            for (index_t j = 0; j < i; ++j) b[static_cast<size_t>(i)] -= a(i, j) * b[static_cast<size_t>(j)];
        for (index_t i = n_ - 1; i >= 0; --i) {
            for (index_t j = i + 1; j < n_; ++j) b[static_cast<size_t>(i)] -= a(i, j) * b[static_cast<size_t>(j)];
            b[static_cast<size_t>(i)] /= a(i, i);
        }
        return b;
    }

private:
    index_t n_ = 0;
    std::vector<double> a_;
    std::vector<index_t> perm_;

    double& a(index_t i, index_t j) { return a_[static_cast<size_t>(i) * static_cast<size_t>(n_) + static_cast<size_t>(j)]; }
    double a(index_t i, index_t j) const { return a_[static_cast<size_t>(i) * static_cast<size_t>(n_) + static_cast<size_t>(j)]; }
};

inline std::vector<double> dense_kkt_solve(const DenseSystem& sys, std::span<const double> rhs) {
    return DenseLu::compute(sys.matrix).solve(rhs);
}

/// Single-rank KKT backend over the dense assembly: the reference the
/// structured solvers are measured against.
class DenseOracleKkt : public ipm::KktSolver {
public:
    explicit DenseOracleKkt(const StandardArrowhead& sp, double reg_primal = 1e-10, double reg_dual = 1e-10,
                            index_t order_cap = 5000)
        : sp_(sp), reg_primal_(reg_primal), reg_dual_(reg_dual), cap_(order_cap) {}

    void update_and_factor(const std::map<index_t, std::vector<double>>& sigma) override {
        sys_ = assemble_dense(sp_, sigma, reg_primal_, reg_dual_, cap_);
        lu_ = DenseLu::compute(sys_.matrix);
    }

    void solve_in_place(ipm::BlockVec& rhs) override {
        std::vector<double> flat(static_cast<size_t>(sys_.order), 0.0);
        const index_t nblocks = sp_.problem.num_blocks();
        for (index_t i = 0; i <= nblocks; ++i) {
            const auto& x = rhs.x.at(i);
            const auto& y = rhs.y.at(i);
            std::copy(x.begin(), x.end(), flat.begin() + sys_.var_offset[static_cast<size_t>(i)]);
            std::copy(y.begin(), y.end(), flat.begin() + sys_.row_offset[static_cast<size_t>(i)]);
        }
        std::copy(rhs.link.begin(), rhs.link.end(), flat.begin() + sys_.link_offset);
        const std::vector<double> sol = lu_.solve(flat);
        for (index_t i = 0; i <= nblocks; ++i) {
            auto& x = rhs.x.at(i);
            auto& y = rhs.y.at(i);
            std::copy(sol.begin() + sys_.var_offset[static_cast<size_t>(i)],
                      sol.begin() + sys_.var_offset[static_cast<size_t>(i)] + static_cast<index_t>(x.size()), x.begin());
            std::copy(sol.begin() + sys_.row_offset[static_cast<size_t>(i)],
                      sol.begin() + sys_.row_offset[static_cast<size_t>(i)] + static_cast<index_t>(y.size()), y.begin());
        }
        std::copy(sol.begin() + sys_.link_offset, sol.end(), rhs.link.begin());
    }

private:
    const StandardArrowhead& sp_;
    double reg_primal_, reg_dual_;
    index_t cap_;
    DenseSystem sys_;
    DenseLu lu_;
};

struct OracleSolve {
    SolveReport report;
    std::vector<std::vector<double>> primal; // per block, standard variables
};

/// Unstructured reference IPM: the same loop, dense linear algebra throughout.
inline OracleSolve dense_ipm_solve(const StandardArrowhead& sp, ipm::IpmOptions opts = [] {
    ipm::IpmOptions o;
    o.tol = 1e-8;
    return o;
}()) {
    auto results = runtime::spawn(1, [&](runtime::RankContext& ctx) {
        ipm::Partition part;
        for (index_t b = 1; b <= sp.problem.num_blocks(); ++b) part.owned.push_back(b);
        part.counts_corner = true;
        ipm::IpmRun run(sp, part, ctx.world(), opts);
        DenseOracleKkt kkt(sp);
        OracleSolve out;
        out.report = run.run(kkt);
        for (index_t i = 0; i <= sp.problem.num_blocks(); ++i) out.primal.push_back(run.final_iterate().z.x.at(i));
        return out;
    });
    return results[0];
}

} // namespace ahlp::oracle
