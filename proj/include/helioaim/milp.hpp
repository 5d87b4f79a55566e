#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "helioaim/flux.hpp"
#include "helioaim/lp.hpp"
#include "helioaim/surrogate.hpp"

namespace helioaim {

struct KBounds {
    double k_min = 0.0;
    double k_max = 3.0;
};

/// Training inputs (scaled to the unit box) whose convex hull, dilated by an
/// infinity-norm ball of radius epsilon, bounds where the surrogate is trusted.
struct TrustRegion {
    Eigen::MatrixXd points;  // N x n0
    double epsilon = 0.0;

    /// Scales the dataset inputs with the model's input scaler. With
    /// max_rows > 0 and more rows than that, the points are replaced by
    /// k-means centroids (a subset of the hull).
    static TrustRegion from_dataset(const Dataset& data, const InputScaler& scaler, double epsilon,
                                    int max_rows = 0, std::uint64_t seed = 0);

    /// Throws Error(InvalidTrustRegion).
    void validate(int dimension) const;
};

/// Lloyd k-means with a seeded shuffle initialisation.
Eigen::MatrixXd kmeans_centroids(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int iterations = 10);

struct MilpVariable {
    std::string name;
    double lb = 0.0;
    double ub = lp::kInf;
    bool binary = false;
};

struct MilpConstraint {
    std::string name;
    std::vector<std::pair<int, double>> terms;
    lp::Sense sense = lp::Sense::LessEqual;
    double rhs = 0.0;
};

/// The surrogate-embedded aiming problem: maximize the network output over
/// the k box intersected with the epsilon-hull trust region. Works in scaled
/// units; solutions are unscaled by solve().
struct MilpModel {
    std::vector<MilpVariable> variables;
    std::vector<MilpConstraint> constraints;
    std::vector<std::pair<int, double>> objective;  // maximized

    // Variable layout. a[0] holds the input ties a_0_j; a, z, sigma are
    // indexed [layer][neuron] with layer 1..L+1 in z and 1..L in a/sigma
    // (index 0 of z and sigma unused).
    std::vector<int> x;
    std::vector<std::vector<int>> a;
    std::vector<std::vector<int>> z;
    std::vector<std::vector<int>> sigma;
    std::vector<int> beta;
    std::vector<int> s;
    int qs = -1;

    std::shared_ptr<const SurrogateModel> surrogate;
    std::shared_ptr<const TrustRegion> trust_region;
    KBounds k_bounds;
    Eigen::VectorXd x_lo;  // scaled box
    Eigen::VectorXd x_hi;

    int add_variable(std::string name, double lb, double ub, bool binary = false);
    int binary_count() const;
    bool box_infeasible() const;

    /// LP relaxation (binaries in [0, 1]).
    lp::Problem relaxation() const;

    /// CPLEX LP text format.
    void write_lp(std::ostream& out) const;

    double objective_value(const std::vector<double>& values) const;
};

/// Builds the mixed-integer program for a bounded model. Throws
/// Error(Encoding) when the model lacks preactivation bounds and
/// Error(InvalidTrustRegion) for a negative epsilon or empty data.
MilpModel encode(const SurrogateModel& model, const TrustRegion& tr, KBounds k_bounds);

enum class SolveStatus { Optimal, Feasible, Infeasible, Timeout };

const char* to_string(SolveStatus s) noexcept;

struct SolveOptions {
    double time_limit = 300.0;  // seconds
    double relative_gap = 1e-4;
    double absolute_gap = 1e-9;
};

struct BackendResult {
    SolveStatus status = SolveStatus::Infeasible;
    std::vector<double> values;  // one per model variable, empty if none found
    double gap = std::numeric_limits<double>::infinity();
};

class SolverBackend {
public:
    virtual ~SolverBackend() = default;
    virtual std::string name() const = 0;
    virtual BackendResult solve(const MilpModel& model, const SolveOptions& options) = 0;
};

/// Writes the model as an LP file, runs an external CBC executable and reads
/// its solution file. Throws Error(Backend) if the executable cannot be run.
class ExternalLpBackend : public SolverBackend {
public:
    explicit ExternalLpBackend(std::string executable, std::string work_dir = {});

    std::string name() const override { return "external:" + executable_; }
    BackendResult solve(const MilpModel& model, const SolveOptions& options) override;

    /// Parses a CBC solution file into per-variable values.
    static BackendResult parse_solution(std::istream& in, const MilpModel& model);

    /// Returns the executable if it exists and can be executed.
    static std::optional<std::string> locate(const std::string& executable);

private:
    std::string executable_;
    std::string work_dir_;
};

/// In-process best-first branch and bound over the rectifier binaries with a
/// forward-pass primal heuristic at every node.
class BranchAndBoundBackend : public SolverBackend {
public:
    std::string name() const override { return "branch-and-bound"; }
    BackendResult solve(const MilpModel& model, const SolveOptions& options) override;

    int nodes_explored() const { return nodes_; }

private:
    int nodes_ = 0;
};

/// Exhaustive activation-pattern enumeration, usable as a backend for small
/// networks.
class EnumerationBackend : public SolverBackend {
public:
    std::string name() const override { return "enumeration"; }
    BackendResult solve(const MilpModel& model, const SolveOptions& options) override;
};

struct MilpSolution {
    SolveStatus status = SolveStatus::Infeasible;
    AimVector x;                 // unscaled aiming factors
    Eigen::VectorXd x_scaled;
    double objective = 0.0;      // unscaled quality score
    double objective_scaled = 0.0;
    std::vector<std::vector<int>> pattern;  // [hidden layer][neuron]
    Eigen::VectorXd beta;
    Eigen::VectorXd s;
    std::vector<double> values;  // full assignment in model variable order
    double gap = std::numeric_limits<double>::infinity();
    std::string backend;
    double seconds = 0.0;

    bool has_solution() const { return status == SolveStatus::Optimal || status == SolveStatus::Feasible; }
};

/// Solves with the backend, then re-optimises the continuous part for the
/// returned activation pattern (exact for a fixed pattern), unscales, and
/// checks pattern consistency. Infeasibility is reported as a status.
MilpSolution solve(const MilpModel& model, SolverBackend& backend, const SolveOptions& options);
MilpSolution solve(const MilpModel& model, SolverBackend& backend, double time_limit);

/// Optimum of the surrogate over {box, trust region, fixed activation
/// pattern}; nullopt when that polytope is empty.
struct PatternOptimum {
    Eigen::VectorXd x_scaled;
    Eigen::VectorXd beta;
    Eigen::VectorXd s;
    double objective_scaled = 0.0;
};
std::optional<PatternOptimum> optimize_pattern(const SurrogateModel& model, const TrustRegion& tr,
                                               const Eigen::VectorXd& x_lo, const Eigen::VectorXd& x_hi,
                                               const std::vector<std::vector<int>>& pattern);

/// Exact optimum by enumerating every activation pattern. Refuses networks
/// with more than max_neurons hidden neurons (Error(Usage)).
MilpSolution enumerate_oracle(const SurrogateModel& model, const TrustRegion& tr, KBounds k_bounds,
                              int max_neurons = 15);

/// Scaled box of the k bounds under the model's input scaler.
std::pair<Eigen::VectorXd, Eigen::VectorXd> scaled_box(const SurrogateModel& model, KBounds k_bounds);

}  // namespace helioaim
