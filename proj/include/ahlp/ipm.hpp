#pragma once

#include <chrono>
#include <map>

#include "ahlp/problem.hpp"
#include "ahlp/report.hpp"
#include "ahlp/runtime.hpp"

namespace ahlp::ipm {

/// Distributed vector in the augmented-system layout. Keys are block ids; key 0
/// (the linking variables / block-0 rows) is replicated on every rank, keys
/// >= 1 exist only on the owning rank. `link` (linking-row duals, natural row
/// order) is replicated everywhere.
struct BlockVec {
    std::map<index_t, std::vector<double>> x;
    std::map<index_t, std::vector<double>> y;
    std::vector<double> link;
};

/// Per-rank ownership of the iterate.
struct Partition {
    std::vector<index_t> owned;  // blocks >= 1 owned by this rank, ascending
    bool counts_corner = false;  // exactly one rank contributes block-0 partial sums
};

/// Augmented-system backend: one factorization per IPM iteration, shared by the
/// predictor, corrector and centrality corrector solves.
class KktSolver {
public:
    virtual ~KktSolver() = default;
    /// sigma[0] is the corner diagonal, sigma[i] the diagonal of block i.
    virtual void update_and_factor(const std::map<index_t, std::vector<double>>& sigma) = 0;
    virtual void solve_in_place(BlockVec& rhs) = 0;
    virtual void collect_stats(SchurStats& stats, PhaseTimes& times) { (void)stats, (void)times; }
};

struct IpmOptions {
    double tol = 1e-6;
    int max_iter = 200;
    int max_gondzio = 3;              // additional centrality correctors
    double gondzio_margin = 0.1;      // both steps must grow by margin*(1-alpha)
    double boundary_fraction = 0.99995;
    double free_sigma = 1e-10;        // |Sigma| for variables without finite bounds
    double divergence_factor = 1e4;
    bool collect_log = true;
};

struct Iterate {
    BlockVec z;                                     // x, y, link duals
    std::map<index_t, std::vector<double>> gl, gu;  // bound duals (0 where no finite bound)
};

struct Residuals {
    std::map<index_t, std::vector<double>> rx; // c - A^T y - gamma
    std::map<index_t, std::vector<double>> ry; // b - A x
    std::vector<double> rlink;
    double dual_inf = 0.0;
    double primal_inf = 0.0;
    double comp_inf = 0.0; // max complementarity product
    double comp_gap = 0.0; // sum of complementarity products
    double rel_gap = 0.0;
    double objective = 0.0;
};

struct Delta {
    BlockVec z;
    std::map<index_t, std::vector<double>> gl, gu;
};

struct StepOutcome {
    double alpha_primal = 0.0;
    double alpha_dual = 0.0;
    double sigma = 0.0;
    double mu = 0.0;
    int correctors = 0;
};

using TaggedScalars = std::vector<std::pair<index_t, double>>;
using TaggedVectors = std::vector<std::pair<index_t, std::vector<double>>>;

namespace detail {

template <class T>
std::vector<std::pair<index_t, T>> concat_tagged(std::vector<std::pair<index_t, T>> a,
                                                 std::vector<std::pair<index_t, T>>& b) {
    for (auto& e : b) a.push_back(std::move(e));
    return a;
}

} // namespace detail

/// Canonical distributed sum: partials fold in ascending tag order at every
/// rank, so the value is bitwise independent of the rank count.
inline double sum_tagged(runtime::Comm& comm, TaggedScalars local) {
    TaggedScalars all = comm.allreduce(std::move(local), [](TaggedScalars a, TaggedScalars b) {
        return detail::concat_tagged(std::move(a), b);
    });
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double s = 0.0;
    for (const auto& [t, v] : all) s += v;
    return s;
}

inline std::vector<double> sum_tagged_vectors(runtime::Comm& comm, TaggedVectors local, index_t dim) {
    TaggedVectors all = comm.allreduce(std::move(local), [](TaggedVectors a, TaggedVectors b) {
        return detail::concat_tagged(std::move(a), b);
    });
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<double> s(static_cast<size_t>(dim), 0.0);
    for (const auto& [t, v] : all)
        for (size_t j = 0; j < v.size(); ++j) s[j] += v[j];
    return s;
}

inline double max_all(runtime::Comm& comm, double local) {
    return comm.allreduce(local, [](double a, double b) { return std::max(a, b); });
}

inline double min_all(runtime::Comm& comm, double local) {
    return comm.allreduce(local, [](double a, double b) { return std::min(a, b); });
}

/// Per-rank engine for the infeasible primal-dual interior-point method with
/// Mehrotra predictor-corrector and Gondzio centrality correctors. Runs SPMD:
/// every member executes the same loop; reduced quantities are bitwise
/// identical across members, which keeps the control flow in lockstep.
class IpmRun {
public:
    IpmRun(const StandardArrowhead& sp, Partition part, runtime::Comm world, IpmOptions opts = {})
        : sp_(sp), part_(std::move(part)), world_(std::move(world)), opts_(opts) {
        keys_.push_back(0);
        for (index_t b : part_.owned) keys_.push_back(b);
        norm_b_ = 0.0;
        for (const BlockData& b : sp_.problem.blocks)
            for (double v : b.rhs_eq) norm_b_ = std::max(norm_b_, std::abs(v));
        for (double v : sp_.problem.link_rhs_eq) norm_b_ = std::max(norm_b_, std::abs(v));
        norm_c_ = 0.0;
        for (const BlockData& b : sp_.problem.blocks)
            for (double v : b.objective) norm_c_ = std::max(norm_c_, std::abs(v));
        pairs_ = 0;
        for (const BlockData& b : sp_.problem.blocks)
            for (index_t j = 0; j < b.num_vars; ++j) {
                if (b.lower[static_cast<size_t>(j)] != -kInf) ++pairs_;
                if (b.upper[static_cast<size_t>(j)] != kInf) ++pairs_;
            }
    }

    const std::vector<index_t>& keys() const { return keys_; }
    index_t complementarity_pairs() const { return pairs_; }

    BlockVec zero_vec() const {
        BlockVec v;
        for (index_t k : keys_) {
            const BlockData& b = block(k);
            v.x[k].assign(static_cast<size_t>(b.num_vars), 0.0);
            v.y[k].assign(static_cast<size_t>(b.num_eq), 0.0);
        }
        v.link.assign(static_cast<size_t>(sp_.problem.num_link_eq()), 0.0);
        return v;
    }

    std::map<index_t, std::vector<double>> zero_bound_duals() const {
        std::map<index_t, std::vector<double>> g;
        for (index_t k : keys_) g[k].assign(static_cast<size_t>(block(k).num_vars), 0.0);
        return g;
    }

    // ------------------------------------------------------------------ residuals

    Residuals residuals(const Iterate& it) {
        Residuals r;
        const ArrowheadProblem& p = sp_.problem;
        const index_t n0 = p.num_linking_vars();

        TaggedVectors border_partial, link_partial;
        for (index_t k : keys_) {
            if (k == 0) continue;
            const BlockData& b = p.blocks[static_cast<size_t>(k)];
            std::vector<double> bp(static_cast<size_t>(n0), 0.0);
            b.border_eq.multiply_transpose_add(it.z.y.at(k), bp);
            border_partial.push_back({k, std::move(bp)});
            std::vector<double> lp(static_cast<size_t>(p.num_link_eq()), 0.0);
            b.link_eq.multiply_add(it.z.x.at(k), lp);
            link_partial.push_back({k, std::move(lp)});
        }
        const std::vector<double> border_sum = sum_tagged_vectors(world_, std::move(border_partial), n0);
        const std::vector<double> link_sum =
            sum_tagged_vectors(world_, std::move(link_partial), p.num_link_eq());

        for (index_t k : keys_) {
            const BlockData& b = p.blocks[static_cast<size_t>(k)];
            std::vector<double> rx = b.objective;
            b.link_eq.multiply_transpose_add(it.z.link, rx, -1.0);
            if (k == 0) {
                b.border_eq.multiply_transpose_add(it.z.y.at(0), rx, -1.0); // A_0^T y_0
                for (index_t j = 0; j < n0; ++j) rx[static_cast<size_t>(j)] -= border_sum[static_cast<size_t>(j)];
            } else {
                b.diag_eq.multiply_transpose_add(it.z.y.at(k), rx, -1.0);
            }
            const auto& gl = it.gl.at(k);
            const auto& gu = it.gu.at(k);
            for (index_t j = 0; j < b.num_vars; ++j)
                rx[static_cast<size_t>(j)] -= gl[static_cast<size_t>(j)] - gu[static_cast<size_t>(j)];
            r.rx[k] = std::move(rx);

            std::vector<double> ry = b.rhs_eq;
            b.border_eq.multiply_add(it.z.x.at(0), ry, -1.0);
            if (k != 0) b.diag_eq.multiply_add(it.z.x.at(k), ry, -1.0);
            r.ry[k] = std::move(ry);
        }
        r.rlink = p.link_rhs_eq;
        p.blocks[0].link_eq.multiply_add(it.z.x.at(0), r.rlink, -1.0);
        for (size_t j = 0; j < r.rlink.size(); ++j) r.rlink[j] -= link_sum[j];

        double dual = 0.0, primal = 0.0, comp = 0.0;
        for (index_t k : keys_) {
            dual = std::max(dual, inf_norm(r.rx.at(k)));
            primal = std::max(primal, inf_norm(r.ry.at(k)));
        }
        primal = std::max(primal, inf_norm(r.rlink));
        TaggedScalars gap_partial, obj_partial;
        for (index_t k : keys_) {
            if (k == 0 && !part_.counts_corner) continue;
            const BlockData& b = block(k);
            double gap = 0.0, obj = 0.0;
            for (index_t j = 0; j < b.num_vars; ++j) {
                const double xj = it.z.x.at(k)[static_cast<size_t>(j)];
                obj += b.objective[static_cast<size_t>(j)] * xj;
                if (b.lower[static_cast<size_t>(j)] != -kInf) {
                    const double pr = (xj - b.lower[static_cast<size_t>(j)]) * it.gl.at(k)[static_cast<size_t>(j)];
                    gap += pr;
                    comp = std::max(comp, std::abs(pr));
                }
                if (b.upper[static_cast<size_t>(j)] != kInf) {
                    const double pr = (b.upper[static_cast<size_t>(j)] - xj) * it.gu.at(k)[static_cast<size_t>(j)];
                    gap += pr;
                    comp = std::max(comp, std::abs(pr));
                }
            }
            gap_partial.push_back({k, gap});
            obj_partial.push_back({k, obj});
        }
        r.dual_inf = max_all(world_, dual);
        r.primal_inf = max_all(world_, primal);
        r.comp_inf = max_all(world_, comp);
        r.comp_gap = sum_tagged(world_, std::move(gap_partial));
        r.objective = sum_tagged(world_, std::move(obj_partial));
        r.rel_gap = r.comp_gap / (1.0 + std::abs(r.objective));
        return r;
    }

    bool optimal(const Residuals& r, double tol) const {
        return r.primal_inf / (1.0 + norm_b_) <= tol && r.dual_inf / (1.0 + norm_c_) <= tol && r.rel_gap <= tol;
    }

    // ------------------------------------------------------------------ sigma

    /// Sigma_jj = -(gl/(x-l) + gu/(u-x)); free variables get the pure
    /// regularization value so the diagonal block stays quasi-definite.
    std::map<index_t, std::vector<double>> assemble_sigma(const Iterate& it) const {
        std::map<index_t, std::vector<double>> sigma;
        for (index_t k : keys_) {
            const BlockData& b = block(k);
            std::vector<double> s(static_cast<size_t>(b.num_vars), 0.0);
            for (index_t j = 0; j < b.num_vars; ++j) {
                double v = 0.0;
                bool finite_side = false;
                if (b.lower[static_cast<size_t>(j)] != -kInf) {
                    v -= it.gl.at(k)[static_cast<size_t>(j)] /
                         (it.z.x.at(k)[static_cast<size_t>(j)] - b.lower[static_cast<size_t>(j)]);
                    finite_side = true;
                }
                if (b.upper[static_cast<size_t>(j)] != kInf) {
                    v -= it.gu.at(k)[static_cast<size_t>(j)] /
                         (b.upper[static_cast<size_t>(j)] - it.z.x.at(k)[static_cast<size_t>(j)]);
                    finite_side = true;
                }
                s[static_cast<size_t>(j)] = finite_side ? v : -opts_.free_sigma;
            }
            sigma[k] = std::move(s);
        }
        return sigma;
    }

    // ------------------------------------------------------------------ steps

    std::pair<double, double> step_lengths(const Iterate& it, const Delta& d) {
        double ap = kInf, ad = kInf;
        for (index_t k : keys_) {
            const BlockData& b = block(k);
            for (index_t j = 0; j < b.num_vars; ++j) {
                const double dx = d.z.x.at(k)[static_cast<size_t>(j)];
                const double xj = it.z.x.at(k)[static_cast<size_t>(j)];
                if (b.lower[static_cast<size_t>(j)] != -kInf) {
                    if (dx < 0.0) ap = std::min(ap, (xj - b.lower[static_cast<size_t>(j)]) / -dx);
                    const double dg = d.gl.at(k)[static_cast<size_t>(j)];
                    if (dg < 0.0) ad = std::min(ad, it.gl.at(k)[static_cast<size_t>(j)] / -dg);
                }
                if (b.upper[static_cast<size_t>(j)] != kInf) {
                    if (dx > 0.0) ap = std::min(ap, (b.upper[static_cast<size_t>(j)] - xj) / dx);
                    const double dg = d.gu.at(k)[static_cast<size_t>(j)];
                    if (dg < 0.0) ad = std::min(ad, it.gu.at(k)[static_cast<size_t>(j)] / -dg);
                }
            }
        }
        ap = min_all(world_, ap);
        ad = min_all(world_, ad);
        return {std::min(1.0, opts_.boundary_fraction * ap), std::min(1.0, opts_.boundary_fraction * ad)};
    }

    // ------------------------------------------------------------------ newton solves

    /// Builds the reduced augmented rhs for complementarity targets
    ///   rcl = tau - sl.gl - dxa.dgla,  rcu = tau - su.gu + dxa.dgua,
    /// solves, and recovers the bound-dual steps.
    Delta newton_step(KktSolver& kkt, const Iterate& it, const Residuals* res, double tau, const Delta* affine) {
        std::map<index_t, std::vector<double>> rcl = zero_bound_duals(), rcu = zero_bound_duals();
        BlockVec rhs = zero_vec();
        for (index_t k : keys_) {
            const BlockData& b = block(k);
            auto& rx = rhs.x[k];
            if (res) rx = res->rx.at(k);
            for (index_t j = 0; j < b.num_vars; ++j) {
                const double xj = it.z.x.at(k)[static_cast<size_t>(j)];
                if (b.lower[static_cast<size_t>(j)] != -kInf) {
                    const double sl = xj - b.lower[static_cast<size_t>(j)];
                    double v = tau - sl * it.gl.at(k)[static_cast<size_t>(j)];
                    if (affine)
                        v -= affine->z.x.at(k)[static_cast<size_t>(j)] * affine->gl.at(k)[static_cast<size_t>(j)];
                    rcl[k][static_cast<size_t>(j)] = v;
                    rx[static_cast<size_t>(j)] -= v / sl;
                }
                if (b.upper[static_cast<size_t>(j)] != kInf) {
                    const double su = b.upper[static_cast<size_t>(j)] - xj;
                    double v = tau - su * it.gu.at(k)[static_cast<size_t>(j)];
                    if (affine)
                        v += affine->z.x.at(k)[static_cast<size_t>(j)] * affine->gu.at(k)[static_cast<size_t>(j)];
                    rcu[k][static_cast<size_t>(j)] = v;
                    rx[static_cast<size_t>(j)] += v / su;
                }
            }
            if (res) rhs.y[k] = res->ry.at(k);
        }
        if (res) rhs.link = res->rlink;
        kkt.solve_in_place(rhs);
        return expand_delta(it, std::move(rhs), rcl, rcu);
    }

    /// Centrality corrector: pure complementarity adjustment (t - v).
    Delta corrector_step(KktSolver& kkt, const Iterate& it, const std::map<index_t, std::vector<double>>& rcl,
                         const std::map<index_t, std::vector<double>>& rcu) {
        BlockVec rhs = zero_vec();
        for (index_t k : keys_) {
            const BlockData& b = block(k);
            for (index_t j = 0; j < b.num_vars; ++j) {
                const double xj = it.z.x.at(k)[static_cast<size_t>(j)];
                if (b.lower[static_cast<size_t>(j)] != -kInf)
                    rhs.x[k][static_cast<size_t>(j)] -=
                        rcl.at(k)[static_cast<size_t>(j)] / (xj - b.lower[static_cast<size_t>(j)]);
                if (b.upper[static_cast<size_t>(j)] != kInf)
                    rhs.x[k][static_cast<size_t>(j)] +=
                        rcu.at(k)[static_cast<size_t>(j)] / (b.upper[static_cast<size_t>(j)] - xj);
            }
        }
        kkt.solve_in_place(rhs);
        return expand_delta(it, std::move(rhs), rcl, rcu);
    }

    // ------------------------------------------------------------------ predictor-corrector

    StepOutcome predictor_corrector_iteration(Iterate& it, KktSolver& kkt, const Residuals& res) {
        StepOutcome out;
        kkt.update_and_factor(assemble_sigma(it));

        // affine predictor aims at tau = 0
        Delta aff = newton_step(kkt, it, &res, 0.0, nullptr);
        auto [apa, ada] = step_lengths(it, aff);
        const double gap_aff = trial_gap(it, aff, apa, ada);
        const double mu = pairs_ > 0 ? res.comp_gap / static_cast<double>(pairs_) : 0.0;
        double sigma = 0.0;
        if (pairs_ > 0 && res.comp_gap > 0.0) {
            const double ratio = std::max(0.0, gap_aff / res.comp_gap);
            sigma = std::min(1.0, ratio * ratio * ratio);
        }
        const double tau = sigma * mu;
        out.sigma = sigma;
        out.mu = mu;

        // combined predictor-corrector step
        Delta step = newton_step(kkt, it, &res, tau, &aff);
        auto [ap, ad] = step_lengths(it, step);

        for (int c = 0; c < opts_.max_gondzio; ++c) {
            if (pairs_ == 0) break;
            const double trial_ap = std::min(1.0, 1.5 * ap + 0.3);
            const double trial_ad = std::min(1.0, 1.5 * ad + 0.3);
            std::map<index_t, std::vector<double>> rcl = zero_bound_duals(), rcu = zero_bound_duals();
            for (index_t k : keys_) {
                const BlockData& b = block(k);
                for (index_t j = 0; j < b.num_vars; ++j) {
                    const double xj = it.z.x.at(k)[static_cast<size_t>(j)] +
                                      trial_ap * step.z.x.at(k)[static_cast<size_t>(j)];
                    if (b.lower[static_cast<size_t>(j)] != -kInf) {
                        const double g = it.gl.at(k)[static_cast<size_t>(j)] +
                                         trial_ad * step.gl.at(k)[static_cast<size_t>(j)];
                        const double v = (xj - b.lower[static_cast<size_t>(j)]) * g;
                        rcl[k][static_cast<size_t>(j)] = std::min(std::max(v, 0.1 * tau), 10.0 * tau) - v;
                    }
                    if (b.upper[static_cast<size_t>(j)] != kInf) {
                        const double g = it.gu.at(k)[static_cast<size_t>(j)] +
                                         trial_ad * step.gu.at(k)[static_cast<size_t>(j)];
                        const double v = (b.upper[static_cast<size_t>(j)] - xj) * g;
                        rcu[k][static_cast<size_t>(j)] = std::min(std::max(v, 0.1 * tau), 10.0 * tau) - v;
                    }
                }
            }
            Delta corr = corrector_step(kkt, it, rcl, rcu);
            Delta merged = step;
            add_delta(merged, corr);
            auto [ap2, ad2] = step_lengths(it, merged);
            const double need_p = ap + opts_.gondzio_margin * (1.0 - ap) - 1e-12;
            const double need_d = ad + opts_.gondzio_margin * (1.0 - ad) - 1e-12;
            if (ap2 >= need_p && ad2 >= need_d) {
                step = std::move(merged);
                ap = ap2;
                ad = ad2;
                ++out.correctors;
            } else {
                break;
            }
        }

        apply_step(it, step, ap, ad);
        out.alpha_primal = ap;
        out.alpha_dual = ad;
        return out;
    }

    // ------------------------------------------------------------------ starting point

    /// Least-squares-like starting point: min-norm primal and least-squares
    /// duals from two solves with Sigma = -I, then a shift into the strict
    /// interior by max(-1.5 min slack, 0) + 0.1 (1 + balance).
    Iterate starting_point(KktSolver& kkt) {
        std::map<index_t, std::vector<double>> sigma;
        for (index_t k : keys_) sigma[k].assign(static_cast<size_t>(block(k).num_vars), -1.0);
        kkt.update_and_factor(sigma);

        BlockVec sa = zero_vec();
        for (index_t k : keys_) sa.y[k] = block(k).rhs_eq;
        sa.link = sp_.problem.link_rhs_eq;
        kkt.solve_in_place(sa); // x part: min-norm primal

        BlockVec sb = zero_vec();
        for (index_t k : keys_) {
            sb.x[k] = block(k).objective;
            for (double& v : sb.x[k]) v = -v;
        }
        kkt.solve_in_place(sb); // x part: c - A^T y_ls, y part: -y_ls

        Iterate it;
        it.z = zero_vec();
        it.gl = zero_bound_duals();
        it.gu = zero_bound_duals();
        for (index_t k : keys_) {
            it.z.y[k] = sb.y[k];
            for (double& v : it.z.y[k]) v = -v;
        }
        it.z.link = sb.link;
        for (double& v : it.z.link) v = -v;

        // slack statistics of the least-squares point
        double min_slack = kInf;
        TaggedScalars gsum_partial;
        for (index_t k : keys_) {
            const BlockData& b = block(k);
            double gsum = 0.0;
            for (index_t j = 0; j < b.num_vars; ++j) {
                const double xt = sa.x[k][static_cast<size_t>(j)];
                const double gt = sb.x[k][static_cast<size_t>(j)];
                if (b.lower[static_cast<size_t>(j)] != -kInf) {
                    min_slack = std::min(min_slack, xt - b.lower[static_cast<size_t>(j)]);
                    gsum += std::max(gt, 0.0);
                }
                if (b.upper[static_cast<size_t>(j)] != kInf) {
                    min_slack = std::min(min_slack, b.upper[static_cast<size_t>(j)] - xt);
                    gsum += std::max(-gt, 0.0);
                }
            }
            if (k != 0 || part_.counts_corner) gsum_partial.push_back({k, gsum});
        }
        min_slack = min_all(world_, min_slack);
        const double gsum = sum_tagged(world_, std::move(gsum_partial));

        const double shift = std::max(min_slack == kInf ? 0.0 : -1.5 * min_slack, 0.0) +
                             0.1 * (1.0 + gsum / (1.0 + static_cast<double>(std::max<index_t>(pairs_, 1))));
        const double dual_floor = 0.1 * (1.0 + shift);

        for (index_t k : keys_) {
            const BlockData& b = block(k);
            for (index_t j = 0; j < b.num_vars; ++j) {
                double xj = sa.x[k][static_cast<size_t>(j)];
                const double lo = b.lower[static_cast<size_t>(j)];
                const double hi = b.upper[static_cast<size_t>(j)];
                const double gt = sb.x[k][static_cast<size_t>(j)];
                if (lo != -kInf && hi != kInf) {
                    const double m = std::min(shift, 0.4 * (hi - lo));
                    xj = std::min(std::max(xj, lo + m), hi - m);
                    it.gl[k][static_cast<size_t>(j)] = std::max(gt, 0.0) + dual_floor;
                    it.gu[k][static_cast<size_t>(j)] = std::max(-gt, 0.0) + dual_floor;
                } else if (lo != -kInf) {
                    xj = std::max(xj, lo + shift);
                    it.gl[k][static_cast<size_t>(j)] = std::max(gt, 0.0) + dual_floor;
                } else if (hi != kInf) {
                    xj = std::min(xj, hi - shift);
                    it.gu[k][static_cast<size_t>(j)] = std::max(-gt, 0.0) + dual_floor;
                }
                it.z.x[k][static_cast<size_t>(j)] = xj;
            }
        }
        return it;
    }

    // ------------------------------------------------------------------ full solve

    SolveReport run(KktSolver& kkt) {
        SolveReport rep;
        const auto t0 = std::chrono::steady_clock::now();
        final_iterate_.z = zero_vec();
        final_iterate_.gl = zero_bound_duals();
        final_iterate_.gu = zero_bound_duals();
        try {
            Iterate it = starting_point(kkt);
            double best = kInf;
            for (int k = 0; k < opts_.max_iter; ++k) {
                Residuals res = residuals(it);
                rep.res_primal = res.primal_inf / (1.0 + norm_b_);
                rep.res_dual = res.dual_inf / (1.0 + norm_c_);
                rep.gap = res.rel_gap;
                rep.objective = res.objective;
                if (optimal(res, opts_.tol)) {
                    rep.status = SolveStatus::optimal;
                    break;
                }
                const double total = std::max({rep.res_primal, rep.res_dual, rep.gap});
                best = std::min(best, total);
                if (k > 10 && total > opts_.divergence_factor * best) {
                    rep.status = SolveStatus::numerical_failure;
                    break;
                }
                StepOutcome so = predictor_corrector_iteration(it, kkt, res);
                rep.iterations = k + 1;
                rep.status = SolveStatus::max_iterations;
                if (opts_.collect_log) {
                    IterationRecord rec;
                    rec.iteration = k + 1;
                    rec.res_primal = rep.res_primal;
                    rec.res_dual = rep.res_dual;
                    rec.gap = rep.gap;
                    rec.mu = so.mu;
                    rec.alpha_primal = so.alpha_primal;
                    rec.alpha_dual = so.alpha_dual;
                    rec.sigma = so.sigma;
                    rec.correctors = so.correctors;
                    rec.objective = rep.objective;
                    rep.log.push_back(rec);
                }
                if (k + 1 == opts_.max_iter) {
                    Residuals fin = residuals(it);
                    rep.res_primal = fin.primal_inf / (1.0 + norm_b_);
                    rep.res_dual = fin.dual_inf / (1.0 + norm_c_);
                    rep.gap = fin.rel_gap;
                    rep.objective = fin.objective;
                    if (optimal(fin, opts_.tol)) rep.status = SolveStatus::optimal;
                }
            }
            final_iterate_ = std::move(it);
        } catch (const singular_error&) {
            // in a multi-rank run the failure must abort every rank, or the
            // survivors block in the next collective
            if (world_.size() > 1) throw;
            rep.status = SolveStatus::numerical_failure;
        }
        rep.times.total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        kkt.collect_stats(rep.schur, rep.times);
        rep.times.factor = max_all(world_, rep.times.factor);
        rep.times.reduce = max_all(world_, rep.times.reduce);
        rep.times.corner_solve = max_all(world_, rep.times.corner_solve);
        rep.times.back_substitution = max_all(world_, rep.times.back_substitution);
        return rep;
    }

    const Iterate& final_iterate() const { return final_iterate_; }

private:
    const StandardArrowhead& sp_;
    Partition part_;
    runtime::Comm world_;
    IpmOptions opts_;
    std::vector<index_t> keys_;
    double norm_b_ = 0.0, norm_c_ = 0.0;
    index_t pairs_ = 0;
    Iterate final_iterate_;

    const BlockData& block(index_t k) const { return sp_.problem.blocks[static_cast<size_t>(k)]; }

    Delta expand_delta(const Iterate& it, BlockVec&& solved, const std::map<index_t, std::vector<double>>& rcl,
                       const std::map<index_t, std::vector<double>>& rcu) {
        Delta d;
        d.z = std::move(solved);
        d.gl = zero_bound_duals();
        d.gu = zero_bound_duals();
        for (index_t k : keys_) {
            const BlockData& b = block(k);
            for (index_t j = 0; j < b.num_vars; ++j) {
                const double dx = d.z.x.at(k)[static_cast<size_t>(j)];
                const double xj = it.z.x.at(k)[static_cast<size_t>(j)];
                if (b.lower[static_cast<size_t>(j)] != -kInf) {
                    const double sl = xj - b.lower[static_cast<size_t>(j)];
                    d.gl[k][static_cast<size_t>(j)] =
                        (rcl.at(k)[static_cast<size_t>(j)] - it.gl.at(k)[static_cast<size_t>(j)] * dx) / sl;
                }
                if (b.upper[static_cast<size_t>(j)] != kInf) {
                    const double su = b.upper[static_cast<size_t>(j)] - xj;
                    d.gu[k][static_cast<size_t>(j)] =
                        (rcu.at(k)[static_cast<size_t>(j)] + it.gu.at(k)[static_cast<size_t>(j)] * dx) / su;
                }
            }
        }
        return d;
    }

    double trial_gap(const Iterate& it, const Delta& d, double ap, double ad) {
        TaggedScalars partial;
        for (index_t k : keys_) {
            if (k == 0 && !part_.counts_corner) continue;
            const BlockData& b = block(k);
            double gap = 0.0;
            for (index_t j = 0; j < b.num_vars; ++j) {
                const double xj = it.z.x.at(k)[static_cast<size_t>(j)] + ap * d.z.x.at(k)[static_cast<size_t>(j)];
                if (b.lower[static_cast<size_t>(j)] != -kInf)
                    gap += (xj - b.lower[static_cast<size_t>(j)]) *
                           (it.gl.at(k)[static_cast<size_t>(j)] + ad * d.gl.at(k)[static_cast<size_t>(j)]);
                if (b.upper[static_cast<size_t>(j)] != kInf)
                    gap += (b.upper[static_cast<size_t>(j)] - xj) *
                           (it.gu.at(k)[static_cast<size_t>(j)] + ad * d.gu.at(k)[static_cast<size_t>(j)]);
            }
            partial.push_back({k, gap});
        }
        return sum_tagged(world_, std::move(partial));
    }

    static void add_delta(Delta& a, const Delta& b) {
        for (auto& [k, v] : a.z.x)
            for (size_t j = 0; j < v.size(); ++j) v[j] += b.z.x.at(k)[j];
        for (auto& [k, v] : a.z.y)
            for (size_t j = 0; j < v.size(); ++j) v[j] += b.z.y.at(k)[j];
        for (size_t j = 0; j < a.z.link.size(); ++j) a.z.link[j] += b.z.link[j];
        for (auto& [k, v] : a.gl)
            for (size_t j = 0; j < v.size(); ++j) v[j] += b.gl.at(k)[j];
        for (auto& [k, v] : a.gu)
            for (size_t j = 0; j < v.size(); ++j) v[j] += b.gu.at(k)[j];
    }

    void apply_step(Iterate& it, const Delta& d, double ap, double ad) {
        for (index_t k : keys_) {
            auto& x = it.z.x.at(k);
            auto& y = it.z.y.at(k);
            for (size_t j = 0; j < x.size(); ++j) x[j] += ap * d.z.x.at(k)[j];
            for (size_t j = 0; j < y.size(); ++j) y[j] += ad * d.z.y.at(k)[j];
            auto& gl = it.gl.at(k);
            auto& gu = it.gu.at(k);
            for (size_t j = 0; j < gl.size(); ++j) gl[j] += ad * d.gl.at(k)[j];
            for (size_t j = 0; j < gu.size(); ++j) gu[j] += ad * d.gu.at(k)[j];
        }
        for (size_t j = 0; j < it.z.link.size(); ++j) it.z.link[j] += ad * d.z.link[j];
    }
};

} // namespace ahlp::ipm
