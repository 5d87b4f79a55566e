#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "helioaim/plant.hpp"

namespace helioaim {

/// Per-group aiming factors k, one decision variable per heliostat group.
struct AimVector {
    std::vector<double> k;

    std::size_t size() const { return k.size(); }
    bool within(double k_min, double k_max, double tol = 0.0) const;

    /// CSV with header "group,k".
    void write_csv(std::ostream& out) const;
    static AimVector read_csv(std::istream& in);
};

/// Concentration ratio (suns) on P x V x H receiver nodes.
struct FluxMap {
    int panels = 0;
    int vertical = 0;
    int horizontal = 0;
    double dv = 0.0;              // vertical node spacing, m
    double dh = 0.0;              // horizontal node spacing, m (panel width if H == 1)
    std::vector<double> C;        // [p][v][h], row-major
    std::vector<double> dA;       // quadrature area per node, [v][h] (same for every panel)
    std::vector<Vec3> nodes;      // [p][v][h]

    std::size_t index(int p, int v, int h) const {
        return (static_cast<std::size_t>(p) * vertical + v) * horizontal + h;
    }
    double at(int p, int v, int h) const { return C[index(p, v, h)]; }
    double& at(int p, int v, int h) { return C[index(p, v, h)]; }
    double area(int v, int h) const { return dA[static_cast<std::size_t>(v) * horizontal + h]; }

    /// Sum of C * dA over every node (intercepted power for unit DNI).
    double intercepted() const;
    double max_concentration() const;

    /// Long format: panel,v,h,C
    void write_csv(std::ostream& out) const;
};

/// Empty (all-zero) map with the receiver mesh of the config.
FluxMap make_receiver_mesh(const PlantConfig& config);

/// Combined angular error (mrad) of sunshape, slope and tracking errors at
/// heliostat incidence angle omega (rad).
double effective_error(double omega, double sigma_sun, double sigma_slope, double sigma_tracking);

/// Beam radius at confidence factor k; sigma_e in radians.
/// Throws Error(Domain) for grazing incidence (eps_r >= pi/2).
double beam_radius(double k, double sigma_e, double slant_range, double receiver_incidence);

enum class RowParity { Odd, Even };

/// Parity of the 1-based row number for a 0-based ring index.
inline RowParity row_parity(int ring_index) {
    return (ring_index % 2 == 0) ? RowParity::Odd : RowParity::Even;
}

/// Vertical aim-point shift from the equator: odd rows aim at the upper half,
/// even rows at the lower half, beams wider than RH/2 stay on the equator.
double aim_shift(double beam_radius, double receiver_height, RowParity parity);

/// Static per-heliostat optics for a fixed field, sun and plant. Building it
/// once and evaluating many aim vectors is the fast path for data generation.
class FluxModel {
public:
    FluxModel(const Field& field, const SunState& sun, const PlantConfig& config);

    FluxMap evaluate(std::span<const double> k) const;
    FluxMap evaluate(const AimVector& aims) const { return evaluate(aims.k); }

    /// Adds one heliostat's Gaussian image into map (DNI = 1).
    void accumulate(int heliostat, double k, FluxMap& map) const;

    /// Aim point of heliostat i for factor k.
    Vec3 aim_point(int heliostat, double k) const;

    /// Sum over heliostats of cos(omega) * AM, the spillage denominator.
    double reflected_power() const { return reflected_power_; }

    const Field& field() const { return field_; }
    const PlantConfig& config() const { return config_; }
    const SunState& sun() const { return sun_; }

    struct Optics {
        Vec3 equator_aim;
        double slant_range;
        double cosine;
        double attenuation;
        double sigma_e;       // rad
        double receiver_incidence;
        double power;         // AM * cos * attenuation
        RowParity parity;
    };
    const std::vector<Optics>& optics() const { return optics_; }

private:
    Field field_;
    PlantConfig config_;
    SunState sun_;
    FluxMap mesh_;
    std::vector<Optics> optics_;
    double reflected_power_ = 0.0;
};

/// Flux map of the field for the given aims. Throws Error(Domain) when the
/// sun is below the horizon and Error(Shape) when aims do not match groups.
FluxMap flux_map(const Field& field, const AimVector& aims, const SunState& sun, const PlantConfig& config);

/// SPL = 1 - sum(C dA) / sum(cos(omega) AM). Throws Error(Domain) for an
/// empty field.
double spillage(const FluxMap& flux, const Field& field, const SunState& sun, const PlantConfig& config);

}  // namespace helioaim
