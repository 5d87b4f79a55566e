#pragma once

#include <span>
#include <utility>
#include <vector>

#include "helioaim/flux.hpp"

namespace helioaim {

inline constexpr double kDefaultCentralFraction = 0.5;

struct ScoreBreakdown {
    std::vector<double> energy;           // E_p, suns*m
    std::vector<double> distribution;     // mean distribution difference per panel, [0, 1]
    std::vector<double> panel_score;      // QS_p = E_p - lambda * dd_p
    std::vector<int> weights;             // heliostats per panel
    double score = 0.0;                   // heliostat-weighted mean of QS_p
    double lambda = 0.0;
};

struct MetricsReport {
    double collected_energy = 0.0;
    double distribution_difference = 0.0;
    double spl = 0.0;
    double max_suns = 0.0;
};

/// Composite trapezoid with uniform spacing dv. Throws Error(InvalidMesh)
/// for fewer than two samples.
double panel_energy(std::span<const double> profile, double dv);

/// Mean over the horizontal nodes of one panel, bottom to top.
std::vector<double> vertical_profile(const FluxMap& flux, int panel);

/// Central window [first, last) of the vertical nodes covering the given
/// fraction, kept symmetric about the panel middle.
std::pair<int, int> central_window(int vertical, double central_fraction);

/// Aiming quality score of a flux map. Panels with zero weight are skipped;
/// flat profiles (max == min) count as perfectly uniform.
ScoreBreakdown quality_score(const FluxMap& flux, double lambda, std::span<const int> panel_weights,
                             double central_fraction = kDefaultCentralFraction);

/// Collected energy and distribution difference are the heliostat-weighted
/// means of E_p and dd_p; SPL follows the interception balance.
MetricsReport metrics(const FluxMap& flux, const Field& field, const SunState& sun, const PlantConfig& config,
                      double central_fraction = kDefaultCentralFraction);

/// Same as metrics() when the spillage denominator is already known.
MetricsReport metrics(const FluxMap& flux, std::span<const int> panel_weights, double reflected_power,
                      double central_fraction = kDefaultCentralFraction);

/// Aiming factors -> flux map -> quality score, for a fixed field, sun and
/// plant. Thread-safe: evaluation is const and allocates per call.
class QualityEvaluator {
public:
    QualityEvaluator(const Field& field, const SunState& sun, const PlantConfig& config, double lambda,
                     double central_fraction = kDefaultCentralFraction);

    struct Evaluation {
        FluxMap flux;
        ScoreBreakdown score;
        MetricsReport metrics;
    };

    double score(std::span<const double> k) const;
    /// Score and metrics computed from the same flux map instance.
    Evaluation evaluate(std::span<const double> k) const;

    int dimension() const { return model_.field().group_count(); }
    double lambda() const { return lambda_; }
    double central_fraction() const { return central_fraction_; }
    const FluxModel& model() const { return model_; }
    const std::vector<int>& panel_weights() const { return weights_; }

private:
    FluxModel model_;
    std::vector<int> weights_;
    double lambda_;
    double central_fraction_;
};

}  // namespace helioaim
