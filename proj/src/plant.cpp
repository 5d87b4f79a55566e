#include "helioaim/plant.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <utility>

#include "helioaim/error.hpp"
#include "helioaim/rng.hpp"

namespace helioaim {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::InvalidConfig, "plant config: " + what);
}

double azimuth_deg(const Vec3& p) {
    double az = rad2deg(std::atan2(p.x, p.y));
    if (az < 0.0) az += 360.0;
    if (az >= 360.0) az -= 360.0;
    return az;
}

}  // namespace

void PlantConfig::validate() const {
    require(receiver_height > 0.0, "receiver height must be positive");
    require(receiver_diameter > 0.0, "receiver diameter must be positive");
    require(panel_count >= 1, "panel count must be >= 1");
    require(panel_width > 0.0, "panel width must be positive");
    require(tower_optical_height > 0.0, "tower optical height must be positive");
    require(mirror_area > 0.0, "mirror area must be positive");
    require(heliostat_count >= 1, "heliostat count must be >= 1");
    require(latitude >= -90.0 && latitude <= 90.0, "latitude out of range");
    require(k_min >= 0.0 && k_min < k_max, "need 0 <= k_min < k_max");
    require(first_ring_factor > 0.0, "first ring factor must be positive");
    require(ring_growth > 0.0, "ring growth must be positive");
    require(radial_spacing > 0.0, "radial spacing must be positive");
    require(azimuthal_spacing > 0.0, "azimuthal spacing must be positive");
    require(position_jitter >= 0.0, "position jitter must be >= 0");
    require(sigma_sun >= 0.0 && sigma_slope >= 0.0 && sigma_tracking >= 0.0,
            "optical errors must be >= 0");
    require(mesh_vertical >= 3, "mesh needs at least 3 vertical nodes");
    require(mesh_horizontal >= 1, "mesh needs at least 1 horizontal node");
}

double PlantConfig::mirror_width() const { return std::sqrt(mirror_area); }

int sector_of(const Vec3& position, int panel_count) {
    const double aperture = 360.0 / panel_count;
    const int s = static_cast<int>(std::floor(azimuth_deg(position) / aperture));
    return ((s % panel_count) + panel_count) % panel_count;
}

Field::Field(const PlantConfig& config, std::span<const Vec3> positions, std::span<const int> rows)
    : panel_count_(config.panel_count) {
    if (positions.size() != rows.size())
        fail(ErrorKind::Shape, "field: positions and rows differ in length");

    heliostats_.reserve(positions.size());
    std::map<std::pair<int, int>, int> group_index;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (rows[i] < 0) fail(ErrorKind::InvalidConfig, "field: negative row index");
        Heliostat h;
        h.id = static_cast<int>(i);
        h.position = positions[i];
        h.sector = sector_of(h.position, panel_count_);
        h.row = rows[i];
        heliostats_.push_back(h);
        group_index.emplace(std::make_pair(h.sector, h.row), 0);
    }

    int next = 0;
    for (auto& [key, idx] : group_index) {
        idx = next++;
        groups_.push_back({key.first, key.second, {}});
    }
    for (auto& h : heliostats_) {
        h.group = group_index.at({h.sector, h.row});
        groups_[h.group].members.push_back(h.id);
    }
}

std::vector<int> Field::sector_counts() const {
    std::vector<int> counts(panel_count_, 0);
    for (const auto& h : heliostats_) ++counts[h.sector];
    return counts;
}

Field Field::subset(const PlantConfig& config, std::span<const int> ids) const {
    std::vector<Vec3> pos;
    std::vector<int> rows;
    pos.reserve(ids.size());
    rows.reserve(ids.size());
    for (int id : ids) {
        pos.push_back(heliostats_.at(id).position);
        rows.push_back(heliostats_.at(id).row);
    }
    return Field(config, pos, rows);
}

void Field::write_csv(std::ostream& out) const {
    out << "id,east,north,up,sector,row,group\n";
    out.precision(10);
    for (const auto& h : heliostats_) {
        out << h.id << ',' << h.position.x << ',' << h.position.y << ',' << h.position.z << ','
            << h.sector << ',' << h.row << ',' << h.group << '\n';
    }
}

Field generate_field(const PlantConfig& config, std::uint64_t seed) {
    config.validate();

    const double width = config.mirror_width();
    const double chord = config.azimuthal_spacing * width;
    double radius = config.first_ring_factor * config.tower_optical_height;
    double spacing = config.radial_spacing * width;

    Rng rng(seed);
    std::vector<Vec3> positions;
    std::vector<int> rows;
    positions.reserve(config.heliostat_count);
    rows.reserve(config.heliostat_count);

    int remaining = config.heliostat_count;
    for (int ring = 0; remaining > 0; ++ring) {
        int n = std::max(1, static_cast<int>(std::floor(2.0 * kPi * radius / chord)));
        n = std::min(n, remaining);
        // Odd rings are staggered by half a slot. Both offsets keep the ring
        // mirror-symmetric about the north-south axis.
        const double offset = (ring % 2 == 1) ? 0.5 : 0.0;
        for (int i = 0; i < n; ++i) {
            const double theta = (i + offset) * 2.0 * kPi / n;
            const double jx = rng.uniform(-1.0, 1.0) * config.position_jitter;
            const double jy = rng.uniform(-1.0, 1.0) * config.position_jitter;
            positions.emplace_back(radius * std::sin(theta) + jx, radius * std::cos(theta) + jy, 0.0);
            rows.push_back(ring);
        }
        remaining -= n;
        radius += spacing;
        spacing *= config.ring_growth;
    }
    return Field(config, positions, rows);
}

SunState solar_position(double latitude_deg, int day_of_year, double solar_hour) {
    const double decl = deg2rad(23.45) * std::sin(2.0 * kPi * (284.0 + day_of_year) / 365.0);
    const double hour_angle = deg2rad(15.0 * (solar_hour - 12.0));
    const double lat = deg2rad(latitude_deg);

    const double east = -std::cos(decl) * std::sin(hour_angle);
    const double north =
        std::sin(decl) * std::cos(lat) - std::cos(decl) * std::cos(hour_angle) * std::sin(lat);
    const double up =
        std::sin(decl) * std::sin(lat) + std::cos(decl) * std::cos(hour_angle) * std::cos(lat);

    SunState sun;
    sun.unit_vector = normalized(Vec3{east, north, up});
    sun.elevation = rad2deg(std::asin(std::clamp(sun.unit_vector.z, -1.0, 1.0)));
    sun.azimuth = azimuth_deg(sun.unit_vector);
    return sun;
}

PanelFrame panel_frame(int panel, const PlantConfig& config) {
    const double phi = deg2rad((panel + 0.5) * config.panel_aperture_deg());
    PanelFrame f;
    f.normal = {std::sin(phi), std::cos(phi), 0.0};
    f.tangent = {std::cos(phi), -std::sin(phi), 0.0};
    f.center = f.normal * (0.5 * config.receiver_diameter) + Vec3{0.0, 0.0, config.tower_optical_height};
    return f;
}

Vec3 equator_aim_point(const Heliostat& h, const PlantConfig& config) {
    const Vec3 horizontal{h.position.x, h.position.y, 0.0};
    const double r = norm(horizontal);
    if (r <= 0.0) fail(ErrorKind::Domain, "heliostat located on the tower axis");
    const Vec3 u = horizontal / r;
    const PanelFrame f = panel_frame(h.sector, config);
    const double rho = 0.5 * config.receiver_diameter / dot(u, f.normal);
    return u * rho + Vec3{0.0, 0.0, config.tower_optical_height};
}

double attenuation(double slant_range) {
    const double s = slant_range;
    return std::clamp(0.99321 - 1.176e-4 * s + 1.97e-8 * s * s, 1e-6, 1.0);
}

HeliostatGeometry heliostat_geometry(const Heliostat& h, const SunState& sun, const Vec3& aim_point,
                                     const PlantConfig& config) {
    if (!sun.above_horizon()) fail(ErrorKind::Domain, "sun below the horizon");

    const Vec3 to_aim = aim_point - h.position;
    HeliostatGeometry g;
    g.slant_range = norm(to_aim);
    if (g.slant_range <= 0.0) fail(ErrorKind::Domain, "aim point coincides with heliostat");
    const Vec3 reflected = to_aim / g.slant_range;

    const Vec3 normal = normalized(sun.unit_vector + reflected);
    g.incidence_angle = angle_between(sun.unit_vector, normal);
    g.cosine_factor = std::cos(g.incidence_angle);
    g.receiver_incidence = angle_between(-reflected, panel_frame(h.sector, config).normal);
    g.attenuation_factor = config.attenuation ? attenuation(g.slant_range) : 1.0;
    return g;
}

}  // namespace helioaim
