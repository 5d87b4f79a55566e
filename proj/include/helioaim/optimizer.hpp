#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "helioaim/milp.hpp"
#include "helioaim/scoring.hpp"
#include "helioaim/surrogate.hpp"

namespace helioaim {

struct SamplerConfig {
    enum class Mode { Uniform, Normal };

    Mode mode = Mode::Uniform;  // first iteration
    std::optional<double> a;    // uniform limits, default the k bounds
    std::optional<double> b;
    double mu = 1.5;            // first-iteration normal mode
    double sigma = 0.25;        // refinement std around the incumbent, k units
    int base_size = 3000;
    int size_step = 1000;

    /// N_t = base_size + size_step * (t - 1).
    int size(int t) const { return base_size + size_step * (t - 1); }
    void validate(KBounds k) const;
};

/// Samples aiming vectors and scores each with the evaluator. Sample i uses
/// its own stream derived from (seed, i), so the dataset does not depend on
/// the thread count. Throws Error(Usage) for t > 1 without an incumbent.
Dataset generate_data(int t, int n, const AimVector* incumbent, const SamplerConfig& cfg,
                      const QualityEvaluator& evaluator, KBounds k, std::uint64_t seed, int threads = 0);

/// Scores many aim vectors in parallel with a deterministic join.
std::vector<double> score_all(const QualityEvaluator& evaluator, const Eigen::MatrixXd& X, int threads = 0);

/// True if the profile has two local maxima separated by a dip deeper than
/// dip_fraction of the peak.
bool is_bimodal(const std::vector<double>& profile, double dip_fraction = 0.01);

/// Per sector, lowers a shared k from k_max until the sector's panel profile
/// turns bimodal and keeps the last unimodal value. Sectors that never turn
/// bimodal get k_min and a message in warnings.
AimVector sweep_baseline(const Field& field, const SunState& sun, const PlantConfig& config, double step = 0.1,
                         std::vector<std::string>* warnings = nullptr);

AimVector equatorial_baseline(int n0, double k_max = 3.0);

struct Candidate {
    double epsilon = 0.0;
    SolveStatus status = SolveStatus::Infeasible;
    AimVector x;
    double predicted = 0.0;
    double true_score = 0.0;
    MetricsReport metrics;
    double seconds = 0.0;
    std::string error;
};

struct IterationRecord {
    int t = 0;
    int dataset_size = 0;
    TrainReport training;
    std::vector<Candidate> candidates;
    bool failed = false;
    AimVector incumbent;
    double incumbent_score = 0.0;
    MetricsReport metrics;
    double seconds = 0.0;

    /// One JSON object on a single line.
    std::string to_json() const;
};

struct RunParams {
    int iterations = 6;
    std::vector<double> epsilons{0.0, 0.05, 0.1, 0.2, 0.5};
    SamplerConfig sampler;
    TrainParams training;
    SolveOptions solver;
    KBounds k;
    std::uint64_t seed = 0;
    double stop_tolerance = 0.005;
    int stop_patience = 2;  // 0 disables early stopping
    int trust_region_rows = 0;  // >0 enables k-means subsampling
    int threads = 0;

    void validate() const;
};

struct RunResult {
    AimVector best;
    double best_score = 0.0;
    MetricsReport metrics;
    std::vector<IterationRecord> history;
};

/// Sample, train, encode and solve once per epsilon, keep the candidate with
/// the best true score. Throws Error(Run) if every iteration failed.
RunResult run(const QualityEvaluator& evaluator, const RunParams& params, SolverBackend& backend,
              const std::function<void(const IterationRecord&)>& on_iteration = {});

}  // namespace helioaim
