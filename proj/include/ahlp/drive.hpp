#pragma once

#include "ahlp/oracle.hpp"
#include "ahlp/solver.hpp"

namespace ahlp {

struct SolveOptions {
    double tol = 1e-6;
    int max_iter = 200;
    int layers = 1;
    int ranks = 0;   // 0: one per block
    int workers = 0; // 0: one per rank
    bool deterministic = true;
    std::uint64_t fuzz_seed = 0;
    std::vector<index_t> partition; // explicit top-level cuts (cut after block i)
    int max_gondzio = 3;
    bool collect_log = true;
    schur::SolverConfig solver;
};

struct SolveOutcome {
    SolveReport report;
    std::vector<std::vector<double>> primal; // per block, standard-space variables (rank 0 view)
};

namespace detail {

struct RankResult {
    SolveReport report;
    std::vector<std::vector<double>> primal;
};

} // namespace detail

inline ipm::IpmOptions ipm_options(const SolveOptions& opt) {
    ipm::IpmOptions io;
    io.tol = opt.tol;
    io.max_iter = opt.max_iter;
    io.max_gondzio = opt.max_gondzio;
    io.collect_log = opt.collect_log;
    return io;
}

/// End-to-end structured solve: classification, hierarchy, rank assignment,
/// then an SPMD interior-point run over the simulated runtime.
inline SolveOutcome solve_standard(const StandardArrowhead& sp, const SolveOptions& opt) {
    const index_t nblocks = sp.problem.num_blocks();
    const LinkClassification cls = classify_links(sp);
    schur::HierarchyConfig hc;
    hc.layers = opt.layers;
    hc.top_partition = opt.partition;
    const schur::SchurTree tree = schur::build_hierarchy(cls, nblocks, hc);
    const int ranks = opt.ranks > 0 ? std::min<int>(opt.ranks, static_cast<int>(nblocks))
                                    : static_cast<int>(nblocks);
    const schur::Assignment asg = schur::assign(tree, ranks);

    runtime::Config rc;
    rc.workers = opt.workers;
    rc.deterministic = opt.deterministic;
    rc.fuzz_seed = opt.fuzz_seed;

    std::vector<detail::RankResult> results;
    try {
        results = runtime::spawn(ranks, rc, [&](runtime::RankContext& ctx) {
        schur::StructuredKkt kkt(ctx, sp, cls, tree, asg, opt.solver);
        ipm::Partition part;
        for (index_t b = 1; b <= nblocks; ++b)
            if (asg.block_owner[static_cast<size_t>(b)] == ctx.rank()) part.owned.push_back(b);
        part.counts_corner = ctx.rank() == 0;
        ipm::IpmRun run(sp, part, ctx.world(), ipm_options(opt));
        detail::RankResult rr;
        rr.report = run.run(kkt);
        // gather the primal point on rank 0
        constexpr std::int64_t tag_gather = 0x40000;
        if (ctx.rank() == 0) {
            rr.primal.resize(static_cast<size_t>(nblocks) + 1);
            rr.primal[0] = run.final_iterate().z.x.at(0);
            for (index_t b = 1; b <= nblocks; ++b) {
                const int owner = static_cast<int>(asg.block_owner[static_cast<size_t>(b)]);
                rr.primal[static_cast<size_t>(b)] =
                    owner == 0 ? run.final_iterate().z.x.at(b)
                               : ctx.recv<std::vector<double>>(owner, tag_gather + b);
            }
        } else {
            for (index_t b : part.owned) ctx.send(0, tag_gather + b, run.final_iterate().z.x.at(b));
        }
        return rr;
        });
    } catch (const runtime::abort_error& e) {
        // a rank hit a linear-algebra failure mid-collective; surface it as a
        // numerical failure of the whole solve
        SolveOutcome out;
        out.report.status = SolveStatus::numerical_failure;
        out.report.message = e.what();
        return out;
    }

    SolveOutcome out;
    out.report = std::move(results[0].report);
    out.primal = std::move(results[0].primal);
    return out;
}

inline SolveOutcome solve_arrowhead(const ArrowheadProblem& p, const SolveOptions& opt) {
    const StandardArrowhead sp = to_standard_form(p);
    return solve_standard(sp, opt);
}

} // namespace ahlp
