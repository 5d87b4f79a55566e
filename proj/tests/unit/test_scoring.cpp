#include <doctest.h>

#include <cmath>

#include "helioaim/error.hpp"
#include "helioaim/rng.hpp"
#include "helioaim/scoring.hpp"

using namespace helioaim;

namespace {

FluxMap column(std::vector<double> values, double dv) {
    FluxMap f;
    f.panels = 1;
    f.vertical = static_cast<int>(values.size());
    f.horizontal = 1;
    f.dv = dv;
    f.dh = 1.0;
    f.C = std::move(values);
    f.dA.assign(f.vertical, dv);
    return f;
}

FluxMap random_map(Rng& rng, int panels, int V, int H) {
    FluxMap f;
    f.panels = panels;
    f.vertical = V;
    f.horizontal = H;
    f.dv = 0.4;
    f.dh = 0.3;
    f.C.resize(static_cast<std::size_t>(panels) * V * H);
    for (double& v : f.C) v = rng.uniform(0.0, 900.0);
    f.dA.assign(static_cast<std::size_t>(V) * H, f.dv * f.dh);
    return f;
}

}  // namespace

TEST_CASE("panel energy trapezoid") {
    const std::vector<double> flat(11, 3.0);
    CHECK(panel_energy(flat, 9.2 / 10) == doctest::Approx(3.0 * 9.2));
    std::vector<double> ramp(11);
    for (int i = 0; i < 11; ++i) ramp[i] = 5.0 * i / 10.0;
    CHECK(panel_energy(ramp, 9.2 / 10) == doctest::Approx(5.0 * 9.2 / 2));
    CHECK(panel_energy(std::vector<double>{1, 3, 2}, 1.0) == 4.5);
    try {
        panel_energy(std::vector<double>{1.0}, 1.0);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidMesh);
    }
}

TEST_CASE("hand example of the quality score") {
    const FluxMap f = column({0.0, 2.0, 1.0}, 1.0);
    const std::vector<int> w{1};
    const auto s = quality_score(f, 1.0, w, 0.5);
    CHECK(s.distribution[0] == 0.0);
    CHECK(s.energy[0] == 2.5);
    CHECK(s.score == 2.5);
    CHECK(central_window(3, 0.5) == std::pair<int, int>{1, 2});
}

TEST_CASE("uniform flux has no distribution difference") {
    Rng rng(1);
    FluxMap f = random_map(rng, 3, 9, 4);
    for (double& v : f.C) v = 420.0;
    const std::vector<int> w{2, 5, 1};
    const auto s = quality_score(f, 5000.0, w);
    for (double d : s.distribution) CHECK(d == 0.0);
    const auto m = metrics(f, w, 1e9);
    CHECK(m.distribution_difference == 0.0);
    CHECK(s.score == doctest::Approx(m.collected_energy));
}

TEST_CASE("lambda zero ignores shape and lambda is monotone") {
    Rng rng(2);
    const FluxMap f = random_map(rng, 4, 11, 3);
    const std::vector<int> w{3, 0, 7, 2};
    const auto s0 = quality_score(f, 0.0, w);
    double num = 0.0, den = 0.0;
    for (int p = 0; p < 4; ++p) {
        num += s0.energy[p] * w[p];
        den += w[p];
    }
    CHECK(s0.score == doctest::Approx(num / den).epsilon(1e-14));
    double prev = s0.score;
    for (double lam : {100.0, 2500.0, 5000.0, 1e4}) {
        const double s = quality_score(f, lam, w).score;
        CHECK(s <= prev);
        prev = s;
    }
}

TEST_CASE("scores scale with the flux and dd does not") {
    Rng rng(3);
    FluxMap f = random_map(rng, 2, 7, 5);
    const std::vector<int> w{1, 1};
    const auto a = quality_score(f, 0.0, w);
    for (double& v : f.C) v *= 2.5;
    const auto b = quality_score(f, 0.0, w);
    for (int p = 0; p < 2; ++p) {
        CHECK(b.energy[p] == doctest::Approx(2.5 * a.energy[p]));
        CHECK(b.distribution[p] == doctest::Approx(a.distribution[p]).epsilon(1e-13));
    }
}

TEST_CASE("distribution difference is zero exactly when the window sits at the maximum") {
    const FluxMap peaked = column({0.0, 1.0, 4.0, 4.0, 4.0, 1.0, 0.0}, 1.0);
    const std::vector<int> w{1};
    CHECK(central_window(7, 0.5).first == 2);
    CHECK(quality_score(peaked, 1.0, w).distribution[0] == 0.0);
    const FluxMap dip = column({0.0, 1.0, 4.0, 3.9, 4.0, 1.0, 0.0}, 1.0);
    CHECK(quality_score(dip, 1.0, w).distribution[0] > 0.0);
}

TEST_CASE("all-zero flux metrics") {
    Rng rng(4);
    FluxMap f = random_map(rng, 2, 5, 2);
    for (double& v : f.C) v = 0.0;
    const std::vector<int> w{4, 4};
    const auto m = metrics(f, w, 100.0);
    CHECK(m.collected_energy == 0.0);
    CHECK(m.max_suns == 0.0);
    CHECK(m.spl == 1.0);
}

TEST_CASE("argument validation") {
    const FluxMap f = column({0.0, 2.0, 1.0}, 1.0);
    try {
        quality_score(f, 1.0, std::vector<int>{1, 1});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Shape);
    }
    try {
        quality_score(f, -1.0, std::vector<int>{1});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Usage);
    }
}

TEST_CASE("central window stays symmetric") {
    for (int V : {3, 4, 5, 10, 23, 24}) {
        for (double f : {0.1, 0.5, 0.9, 1.0}) {
            const auto [a, b] = central_window(V, f);
            CHECK(a == V - b);
            CHECK(b > a);
        }
    }
}
