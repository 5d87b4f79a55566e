#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "helioaim/vec3.hpp"

namespace helioaim {

/// Receiver, field, optical-error and mesh description of a tower plant.
/// Defaults describe the Dunhuang 10 MWe plant.
struct PlantConfig {
    // receiver
    double receiver_height = 9.2;         // RH, m
    double receiver_diameter = 7.3;       // RD, m
    int panel_count = 18;                 // P
    double panel_width = 1.29;            // m
    double tower_optical_height = 121.4;  // receiver equator above tower base, m

    // field
    double mirror_area = 115.7;  // AM, m^2
    int heliostat_count = 1525;
    double latitude = 40.08;  // deg north
    double k_min = 0.0;
    double k_max = 3.0;
    bool attenuation = true;

    // layout generator
    double first_ring_factor = 0.75;  // first ring radius / tower height
    double ring_growth = 1.05;        // geometric growth of ring spacing
    double radial_spacing = 1.4;      // first ring spacing / mirror width
    double azimuthal_spacing = 1.6;   // chord between neighbours / mirror width
    double position_jitter = 0.0;     // m, uniform +-jitter on east/north

    // optical errors, mrad
    double sigma_sun = 2.09;
    double sigma_slope = 2.6;
    double sigma_tracking = 0.0;

    // receiver mesh per panel
    int mesh_vertical = 23;    // V
    int mesh_horizontal = 5;   // H

    /// Throws Error(InvalidConfig) on any violated invariant.
    void validate() const;

    double panel_aperture_deg() const { return 360.0 / panel_count; }
    double mirror_width() const;
};

struct Heliostat {
    int id = 0;
    Vec3 position;  // east, north, up relative to the tower base
    int sector = 0;
    int row = 0;
    int group = 0;
};

struct HeliostatGroup {
    int sector = 0;
    int row = 0;
    std::vector<int> members;  // heliostat ids
};

/// A heliostat field together with its (sector, row) grouping. Group indices
/// are dense and ordered by (sector, row); one aiming factor per group.
class Field {
public:
    Field() = default;

    /// Builds a field from explicit positions. Sectors are derived from the
    /// azimuth seen from the tower, groups from (sector, row).
    Field(const PlantConfig& config, std::span<const Vec3> positions, std::span<const int> rows);

    const std::vector<Heliostat>& heliostats() const { return heliostats_; }
    const std::vector<HeliostatGroup>& groups() const { return groups_; }
    std::size_t size() const { return heliostats_.size(); }
    bool empty() const { return heliostats_.empty(); }
    int group_count() const { return static_cast<int>(groups_.size()); }
    int panel_count() const { return panel_count_; }

    /// Heliostats per sector (== per panel), length P.
    std::vector<int> sector_counts() const;

    /// Sub-field with only the given heliostats; grouping is recomputed.
    Field subset(const PlantConfig& config, std::span<const int> ids) const;

    void write_csv(std::ostream& out) const;

private:
    std::vector<Heliostat> heliostats_;
    std::vector<HeliostatGroup> groups_;
    int panel_count_ = 0;
};

/// Sector of a ground position: floor(azimuth / aperture) mod P, azimuth
/// measured clockwise from north as seen from the tower.
int sector_of(const Vec3& position, int panel_count);

/// Radially staggered surround layout. Ring r holds row r.
Field generate_field(const PlantConfig& config, std::uint64_t seed);

struct SunState {
    double azimuth = 0.0;    // deg clockwise from north
    double elevation = 0.0;  // deg
    Vec3 unit_vector;        // points from the ground toward the sun

    bool above_horizon() const { return elevation > 0.0; }
};

/// Declination / hour-angle solar position; solar_hour is apparent solar
/// time (12 = solar noon), the equation of time is not applied.
SunState solar_position(double latitude_deg, int day_of_year, double solar_hour);

/// Day of year on which the declination formula gives zero.
inline constexpr int kEquinoxDay = 81;

struct HeliostatGeometry {
    double slant_range = 0.0;        // S, m
    double incidence_angle = 0.0;    // omega, rad
    double receiver_incidence = 0.0; // eps_r, rad
    double cosine_factor = 0.0;
    double attenuation_factor = 1.0;
};

/// Flat panel p of the polygonal receiver.
struct PanelFrame {
    Vec3 center;   // on the equator plane
    Vec3 normal;   // outward, horizontal
    Vec3 tangent;  // horizontal, increasing azimuth
};

PanelFrame panel_frame(int panel, const PlantConfig& config);

/// Aim point on the receiver equator: intersection of the heliostat's
/// horizontal sightline to the tower axis with its sector panel.
Vec3 equator_aim_point(const Heliostat& h, const PlantConfig& config);

/// Clear-day slant-range attenuation (S in meters).
double attenuation(double slant_range);

/// Optical geometry for a heliostat reflecting the sun onto aim_point.
/// Throws Error(Domain) when the sun is below the horizon.
HeliostatGeometry heliostat_geometry(const Heliostat& h, const SunState& sun, const Vec3& aim_point,
                                     const PlantConfig& config);

}  // namespace helioaim
