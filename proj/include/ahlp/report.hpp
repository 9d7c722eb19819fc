#pragma once

#include <string>
#include <vector>

#include "ahlp/core.hpp"

namespace ahlp {

enum class SolveStatus { optimal, max_iterations, numerical_failure };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::max_iterations: return "max-iterations";
        default: return "numerical-failure";
    }
}

struct PhaseTimes {
    double factor = 0.0;            // block + complement factorizations
    double reduce = 0.0;            // contribution assembly and reductions
    double corner_solve = 0.0;      // complement solves at node owners
    double back_substitution = 0.0; // block sweeps
    double total = 0.0;
};

struct NodeStat {
    index_t node = 0;
    std::string kind;       // flat | root | inner | leaf
    index_t dim = 0;        // complement order
    index_t nnz = 0;        // assembled nonzeros (both triangles)
    std::uint64_t bound = 0; // predicted nonzero bound for this complement
    bool dense = false;     // factored densely
    double factor_seconds = 0.0;
};

struct SchurStats {
    index_t corner_dim = 0;       // top-level complement order
    index_t corner_nnz = 0;
    std::uint64_t predicted_bound = 0; // Observation-style bound (contribution region)
    double density = 0.0;
    bool dense_root = false;
    std::vector<NodeStat> nodes;
};

struct IterationRecord {
    int iteration = 0;
    double res_primal = 0.0;
    double res_dual = 0.0;
    double gap = 0.0; // relative duality gap
    double mu = 0.0;
    double alpha_primal = 0.0;
    double alpha_dual = 0.0;
    double sigma = 0.0;
    int correctors = 0;
    double objective = 0.0;
};

struct SolveReport {
    SolveStatus status = SolveStatus::numerical_failure;
    std::string message; // failure detail, empty on success
    int iterations = 0;
    double objective = 0.0;
    double res_primal = 0.0;
    double res_dual = 0.0;
    double gap = 0.0;
    PhaseTimes times;
    SchurStats schur;
    std::vector<IterationRecord> log;
};

} // namespace ahlp
