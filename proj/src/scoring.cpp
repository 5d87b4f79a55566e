#include "helioaim/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "helioaim/error.hpp"

namespace helioaim {

double panel_energy(std::span<const double> profile, double dv) {
    if (profile.size() < 2) fail(ErrorKind::InvalidMesh, "trapezoid needs at least two samples");
    double sum = 0.0;
    for (std::size_t i = 1; i < profile.size(); ++i) sum += 0.5 * (profile[i - 1] + profile[i]);
    return sum * dv;
}

std::vector<double> vertical_profile(const FluxMap& flux, int panel) {
    std::vector<double> profile(flux.vertical, 0.0);
    for (int v = 0; v < flux.vertical; ++v) {
        double sum = 0.0;
        for (int h = 0; h < flux.horizontal; ++h) sum += flux.at(panel, v, h);
        profile[v] = sum / flux.horizontal;
    }
    return profile;
}

std::pair<int, int> central_window(int vertical, double central_fraction) {
    if (vertical < 1) fail(ErrorKind::InvalidMesh, "empty vertical mesh");
    const double f = std::clamp(central_fraction, 0.0, 1.0);
    int count = std::max(1, static_cast<int>(std::floor(vertical * f + 1e-9)));
    if ((vertical - count) % 2 != 0) ++count;
    count = std::min(count, vertical);
    const int first = (vertical - count) / 2;
    return {first, first + count};
}

ScoreBreakdown quality_score(const FluxMap& flux, double lambda, std::span<const int> panel_weights,
                             double central_fraction) {
    if (static_cast<int>(panel_weights.size()) != flux.panels)
        fail(ErrorKind::Shape, "panel weight count does not match flux map panels");
    if (lambda < 0.0) fail(ErrorKind::Usage, "lambda must be >= 0");

    ScoreBreakdown out;
    out.lambda = lambda;
    out.weights.assign(panel_weights.begin(), panel_weights.end());
    out.energy.assign(flux.panels, 0.0);
    out.distribution.assign(flux.panels, 0.0);
    out.panel_score.assign(flux.panels, 0.0);

    const auto [first, last] = central_window(flux.vertical, central_fraction);
    double weighted = 0.0;
    long total_weight = 0;
    for (int p = 0; p < flux.panels; ++p) {
        const std::vector<double> profile = vertical_profile(flux, p);
        const auto [lo, hi] = std::minmax_element(profile.begin(), profile.end());
        const double range = *hi - *lo;

        double dd = 0.0;
        if (range > 0.0) {
            for (int v = first; v < last; ++v) dd += 1.0 - (profile[v] - *lo) / range;
            dd /= (last - first);
        }
        out.distribution[p] = dd;
        out.energy[p] = panel_energy(profile, flux.dv);
        out.panel_score[p] = out.energy[p] - lambda * dd;

        if (panel_weights[p] > 0) {
            weighted += out.panel_score[p] * panel_weights[p];
            total_weight += panel_weights[p];
        }
    }
    out.score = total_weight > 0 ? weighted / static_cast<double>(total_weight) : 0.0;
    return out;
}

MetricsReport metrics(const FluxMap& flux, std::span<const int> panel_weights, double reflected_power,
                      double central_fraction) {
    if (!(reflected_power > 0.0)) fail(ErrorKind::Domain, "spillage of an empty field is undefined");
    const ScoreBreakdown s = quality_score(flux, 0.0, panel_weights, central_fraction);

    MetricsReport m;
    double energy = 0.0, dd = 0.0;
    long total = 0;
    for (int p = 0; p < flux.panels; ++p) {
        if (panel_weights[p] <= 0) continue;
        energy += s.energy[p] * panel_weights[p];
        dd += s.distribution[p] * panel_weights[p];
        total += panel_weights[p];
    }
    if (total > 0) {
        m.collected_energy = energy / static_cast<double>(total);
        m.distribution_difference = dd / static_cast<double>(total);
    }
    m.spl = 1.0 - flux.intercepted() / reflected_power;
    m.max_suns = flux.max_concentration();
    return m;
}

MetricsReport metrics(const FluxMap& flux, const Field& field, const SunState& sun, const PlantConfig& config,
                      double central_fraction) {
    if (field.empty()) fail(ErrorKind::Domain, "spillage of an empty field is undefined");
    const FluxModel model(field, sun, config);
    const std::vector<int> weights = field.sector_counts();
    return metrics(flux, weights, model.reflected_power(), central_fraction);
}

QualityEvaluator::QualityEvaluator(const Field& field, const SunState& sun, const PlantConfig& config,
                                   double lambda, double central_fraction)
    : model_(field, sun, config),
      weights_(field.sector_counts()),
      lambda_(lambda),
      central_fraction_(central_fraction) {
    if (lambda < 0.0) fail(ErrorKind::Usage, "lambda must be >= 0");
    if (field.empty()) fail(ErrorKind::Domain, "cannot score an empty field");
}

double QualityEvaluator::score(std::span<const double> k) const {
    return quality_score(model_.evaluate(k), lambda_, weights_, central_fraction_).score;
}

QualityEvaluator::Evaluation QualityEvaluator::evaluate(std::span<const double> k) const {
    Evaluation e;
    e.flux = model_.evaluate(k);
    e.score = quality_score(e.flux, lambda_, weights_, central_fraction_);
    e.metrics = metrics(e.flux, weights_, model_.reflected_power(), central_fraction_);
    return e;
}

}  // namespace helioaim
