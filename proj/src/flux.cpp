#include "helioaim/flux.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "helioaim/error.hpp"

namespace helioaim {

bool AimVector::within(double k_min, double k_max, double tol) const {
    return std::all_of(k.begin(), k.end(),
                       [&](double v) { return v >= k_min - tol && v <= k_max + tol; });
}

void AimVector::write_csv(std::ostream& out) const {
    out << "group,k\n";
    out.precision(17);
    for (std::size_t j = 0; j < k.size(); ++j) out << j << ',' << k[j] << '\n';
}

AimVector AimVector::read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Io, "aim csv: empty input");
    if (line.rfind("group", 0) != 0) fail(ErrorKind::Io, "aim csv: expected header 'group,k'");

    AimVector aims;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        std::istringstream row(line);
        std::string group_field, k_field;
        if (!std::getline(row, group_field, ',') || !std::getline(row, k_field))
            fail(ErrorKind::Io, "aim csv: malformed row '" + line + "'");
        std::size_t group = 0;
        double k = 0.0;
        try {
            group = std::stoul(group_field);
            k = std::stod(k_field);
        } catch (const std::exception&) {
            fail(ErrorKind::Io, "aim csv: malformed row '" + line + "'");
        }
        if (group != aims.k.size()) fail(ErrorKind::Io, "aim csv: groups must be listed in order from 0");
        aims.k.push_back(k);
    }
    return aims;
}

double FluxMap::intercepted() const {
    double total = 0.0;
    const std::size_t per_panel = static_cast<std::size_t>(vertical) * horizontal;
    for (int p = 0; p < panels; ++p)
        for (std::size_t n = 0; n < per_panel; ++n) total += C[p * per_panel + n] * dA[n];
    return total;
}

double FluxMap::max_concentration() const {
    return C.empty() ? 0.0 : *std::max_element(C.begin(), C.end());
}

void FluxMap::write_csv(std::ostream& out) const {
    out << "panel,v,h,C\n";
    out.precision(12);
    for (int p = 0; p < panels; ++p)
        for (int v = 0; v < vertical; ++v)
            for (int h = 0; h < horizontal; ++h) out << p << ',' << v << ',' << h << ',' << at(p, v, h) << '\n';
}

FluxMap make_receiver_mesh(const PlantConfig& config) {
    FluxMap m;
    m.panels = config.panel_count;
    m.vertical = config.mesh_vertical;
    m.horizontal = config.mesh_horizontal;
    m.dv = config.receiver_height / (m.vertical - 1);
    m.dh = m.horizontal > 1 ? config.panel_width / (m.horizontal - 1) : config.panel_width;

    const std::size_t count = static_cast<std::size_t>(m.panels) * m.vertical * m.horizontal;
    m.C.assign(count, 0.0);
    m.nodes.resize(count);
    m.dA.resize(static_cast<std::size_t>(m.vertical) * m.horizontal);

    // Trapezoidal weights: edge rows and edge columns carry half a cell.
    for (int v = 0; v < m.vertical; ++v) {
        const double wv = (v == 0 || v == m.vertical - 1) ? 0.5 * m.dv : m.dv;
        for (int h = 0; h < m.horizontal; ++h) {
            const double wh = (m.horizontal > 1 && (h == 0 || h == m.horizontal - 1)) ? 0.5 * m.dh : m.dh;
            m.dA[static_cast<std::size_t>(v) * m.horizontal + h] = wv * wh;
        }
    }

    for (int p = 0; p < m.panels; ++p) {
        const PanelFrame f = panel_frame(p, config);
        for (int v = 0; v < m.vertical; ++v) {
            const double up = -0.5 * config.receiver_height + v * m.dv;
            for (int h = 0; h < m.horizontal; ++h) {
                const double lateral = m.horizontal > 1 ? -0.5 * config.panel_width + h * m.dh : 0.0;
                m.nodes[m.index(p, v, h)] = f.center + f.tangent * lateral + Vec3{0.0, 0.0, up};
            }
        }
    }
    return m;
}

double effective_error(double omega, double sigma_sun, double sigma_slope, double sigma_tracking) {
    return std::sqrt(sigma_sun * sigma_sun + 2.0 * (1.0 + std::cos(omega)) * sigma_slope * sigma_slope +
                     sigma_tracking * sigma_tracking);
}

double beam_radius(double k, double sigma_e, double slant_range, double receiver_incidence) {
    if (!(receiver_incidence >= 0.0 && receiver_incidence < 0.5 * kPi))
        fail(ErrorKind::Domain, "grazing incidence on the receiver");
    if (k < 0.0) fail(ErrorKind::Domain, "aiming factor must be >= 0");
    return k * sigma_e * slant_range / std::cos(receiver_incidence);
}

double aim_shift(double beam_radius, double receiver_height, RowParity parity) {
    const double half = 0.5 * receiver_height;
    if (beam_radius >= half) return 0.0;
    return parity == RowParity::Odd ? half - beam_radius : -(half - beam_radius);
}

FluxModel::FluxModel(const Field& field, const SunState& sun, const PlantConfig& config)
    : field_(field), config_(config), sun_(sun), mesh_(make_receiver_mesh(config)) {
    config_.validate();
    if (field.panel_count() != 0 && field.panel_count() != config.panel_count)
        fail(ErrorKind::Shape, "field was built for a different panel count");
    if (!sun.above_horizon()) fail(ErrorKind::Domain, "sun below the horizon");

    optics_.reserve(field_.size());
    for (const auto& h : field_.heliostats()) {
        Optics o;
        o.equator_aim = equator_aim_point(h, config_);
        const HeliostatGeometry g = heliostat_geometry(h, sun_, o.equator_aim, config_);
        o.slant_range = g.slant_range;
        o.cosine = g.cosine_factor;
        o.attenuation = g.attenuation_factor;
        o.receiver_incidence = g.receiver_incidence;
        o.sigma_e = 1e-3 * effective_error(g.incidence_angle, config_.sigma_sun, config_.sigma_slope,
                                           config_.sigma_tracking);
        o.power = config_.mirror_area * g.cosine_factor * g.attenuation_factor;
        o.parity = row_parity(h.row);
        optics_.push_back(o);
        reflected_power_ += g.cosine_factor * config_.mirror_area;
    }
}

Vec3 FluxModel::aim_point(int heliostat, double k) const {
    const Optics& o = optics_.at(heliostat);
    const double radius = beam_radius(k, o.sigma_e, o.slant_range, o.receiver_incidence);
    return o.equator_aim + Vec3{0.0, 0.0, aim_shift(radius, config_.receiver_height, o.parity)};
}

void FluxModel::accumulate(int heliostat, double k, FluxMap& map) const {
    const Optics& o = optics_[heliostat];
    const Vec3 aim = aim_point(heliostat, k);
    const Vec3 ray = normalized(aim - field_.heliostats()[heliostat].position);

    // Circular Gaussian on the image plane normal to the ray.
    const double sigma = std::max(o.sigma_e * o.slant_range, 1e-9);
    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    const double peak = o.power / (2.0 * kPi * sigma * sigma);
    const double half_diag = 0.5 * std::hypot(config_.receiver_height, config_.panel_width);
    const double reach = half_diag + 10.0 * sigma;

    const int per_panel = map.vertical * map.horizontal;
    for (int p = 0; p < map.panels; ++p) {
        const PanelFrame f = panel_frame(p, config_);
        const double obliquity = -dot(ray, f.normal);
        if (obliquity <= 0.0) continue;

        const Vec3 qc = f.center - aim;
        const double tc = dot(qc, ray);
        const double rc2 = std::max(0.0, dot(qc, qc) - tc * tc);
        if (rc2 > reach * reach) continue;

        const std::size_t base = static_cast<std::size_t>(p) * per_panel;
        for (int n = 0; n < per_panel; ++n) {
            const Vec3 q = map.nodes[base + n] - aim;
            const double t = dot(q, ray);
            const double r2 = std::max(0.0, dot(q, q) - t * t);
            map.C[base + n] += peak * std::exp(-r2 * inv_two_var) * obliquity;
        }
    }
}

FluxMap FluxModel::evaluate(std::span<const double> k) const {
    if (static_cast<int>(k.size()) != field_.group_count())
        fail(ErrorKind::Shape, "aim vector length " + std::to_string(k.size()) + " != group count " +
                                   std::to_string(field_.group_count()));
    FluxMap map = mesh_;
    const auto& helios = field_.heliostats();
    for (std::size_t i = 0; i < helios.size(); ++i) accumulate(static_cast<int>(i), k[helios[i].group], map);
    return map;
}

FluxMap flux_map(const Field& field, const AimVector& aims, const SunState& sun, const PlantConfig& config) {
    return FluxModel(field, sun, config).evaluate(aims);
}

double spillage(const FluxMap& flux, const Field& field, const SunState& sun, const PlantConfig& config) {
    if (field.empty()) fail(ErrorKind::Domain, "spillage of an empty field is undefined");
    const FluxModel model(field, sun, config);
    return 1.0 - flux.intercepted() / model.reflected_power();
}

}  // namespace helioaim
