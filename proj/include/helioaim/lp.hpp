#pragma once

#include <limits>
#include <utility>
#include <vector>

namespace helioaim::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { LessEqual, Equal, GreaterEqual };

struct Row {
    std::vector<std::pair<int, double>> terms;
    Sense sense = Sense::LessEqual;
    double rhs = 0.0;
};

/// maximize objective^T x  s.t.  rows,  lower <= x <= upper.
struct Problem {
    std::vector<double> objective;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<Row> rows;

    int num_vars() const { return static_cast<int>(objective.size()); }
    int add_var(double lb, double ub, double cost = 0.0);
    void add_row(std::vector<std::pair<int, double>> terms, Sense sense, double rhs);
};

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(Status s) noexcept;

struct Result {
    Status status = Status::Infeasible;
    std::vector<double> x;
    double objective = 0.0;
    int iterations = 0;
};

struct Options {
    double feasibility_tol = 1e-9;
    double optimality_tol = 1e-9;
    int max_iterations = 0;  // 0: automatic
};

/// Dense bounded-variable primal simplex (two phases, Harris ratio test,
/// Bland's rule on stalling). Final basic values are recomputed from an LU
/// factorisation of the basis.
Result solve(const Problem& problem, const Options& options = {});

}  // namespace helioaim::lp
