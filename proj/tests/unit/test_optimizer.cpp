#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "helioaim/error.hpp"
#include "helioaim/optimizer.hpp"

using namespace helioaim;

namespace {

struct Setup {
    PlantConfig plant;
    Field field;
    SunState sun;

    Setup() {
        plant.heliostat_count = 90;
        plant.panel_count = 6;
        plant.panel_width = 4.2;
        field = generate_field(plant, 0);
        sun = solar_position(plant.latitude, kEquinoxDay, 12.0);
    }
};

const Setup& setup() {
    static const Setup s;
    return s;
}

}  // namespace

TEST_CASE("uniform sampler stays inside its limits") {
    const auto& s = setup();
    const QualityEvaluator ev(s.field, s.sun, s.plant, 5000.0);
    SamplerConfig cfg;
    cfg.a = 0.5;
    cfg.b = 2.0;
    const Dataset d = generate_data(1, 200, nullptr, cfg, ev, {0.0, 3.0}, 3);
    CHECK(d.X.rows() == 200);
    CHECK(d.X.cols() == s.field.group_count());
    CHECK(d.X.minCoeff() >= 0.5);
    CHECK(d.X.maxCoeff() <= 2.0);
    for (int i = 0; i < 5; ++i) {
        const Eigen::VectorXd row = d.X.row(i).transpose();
        CHECK(d.y[i] == doctest::Approx(ev.score(std::span<const double>(row.data(), row.size()))).epsilon(1e-12));
    }
}

TEST_CASE("refinement sampler collapses onto the incumbent as sigma shrinks") {
    const auto& s = setup();
    const QualityEvaluator ev(s.field, s.sun, s.plant, 5000.0);
    SamplerConfig cfg;
    cfg.sigma = 1e-9;
    const AimVector inc{std::vector<double>(s.field.group_count(), 1.7)};
    const Dataset d = generate_data(2, 20, &inc, cfg, ev, {0.0, 3.0}, 4);
    CHECK((d.X.array() - 1.7).abs().maxCoeff() < 1e-7);

    cfg.sigma = 2.0;
    const Dataset wide = generate_data(2, 300, &inc, cfg, ev, {0.0, 3.0}, 4);
    CHECK(wide.X.minCoeff() >= 0.0);
    CHECK(wide.X.maxCoeff() <= 3.0);

    try {
        generate_data(2, 10, nullptr, cfg, ev, {0.0, 3.0}, 4);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Usage);
    }
}

TEST_CASE("datasets do not depend on the thread count") {
    const auto& s = setup();
    const QualityEvaluator ev(s.field, s.sun, s.plant, 5000.0);
    SamplerConfig cfg;
    const Dataset a = generate_data(1, 64, nullptr, cfg, ev, {0.0, 3.0}, 9, 1);
    const Dataset b = generate_data(1, 64, nullptr, cfg, ev, {0.0, 3.0}, 9, 3);
    CHECK(a.X == b.X);
    CHECK(a.y == b.y);
}

TEST_CASE("sampler configuration checks") {
    SamplerConfig cfg;
    cfg.a = 2.0;
    cfg.b = 1.0;
    CHECK_THROWS_AS(cfg.validate({0.0, 3.0}), Error);
    cfg = {};
    cfg.sigma = 0.0;
    CHECK_THROWS_AS(cfg.validate({0.0, 3.0}), Error);
    cfg = {};
    CHECK(cfg.size(1) == 3000);
    CHECK(cfg.size(3) == 5000);
}

TEST_CASE("bimodality rule") {
    CHECK_FALSE(is_bimodal({1, 2, 3, 2, 1}));
    CHECK(is_bimodal({3, 1, 3}));
    CHECK_FALSE(is_bimodal({1, 0.995, 1}));
    CHECK(is_bimodal({1, 0.98, 1}));
    CHECK_FALSE(is_bimodal({2, 2, 2, 2}));
    CHECK_FALSE(is_bimodal({}));
    CHECK(is_bimodal({0, 1, 0, 1, 0}));
    CHECK_FALSE(is_bimodal({5, 4, 3, 2, 1}));
}

TEST_CASE("baselines") {
    const auto& s = setup();
    const AimVector eq = equatorial_baseline(s.field.group_count(), 3.0);
    CHECK(eq.size() == static_cast<std::size_t>(s.field.group_count()));
    for (double k : eq.k) CHECK(k == 3.0);

    std::vector<std::string> warnings;
    const AimVector sw = sweep_baseline(s.field, s.sun, s.plant, 0.1, &warnings);
    CHECK(sw.size() == eq.size());
    CHECK(sw.within(0.0, 3.0));
    // groups of one sector share a value
    const auto& groups = s.field.groups();
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (std::size_t h = 0; h < groups.size(); ++h)
            if (groups[g].sector == groups[h].sector) CHECK(sw.k[g] == sw.k[h]);
    CHECK(sweep_baseline(s.field, s.sun, s.plant, 0.1).k == sw.k);

    const QualityEvaluator ev(s.field, s.sun, s.plant, 5000.0);
    CHECK(ev.score(sw.k) > ev.score(eq.k));
}

TEST_CASE("single iteration run") {
    const auto& s = setup();
    const QualityEvaluator ev(s.field, s.sun, s.plant, 5000.0);
    RunParams p;
    p.iterations = 1;
    p.epsilons = {0.1, 0.0};
    p.sampler.base_size = 300;
    p.training.hidden = {6};
    p.training.max_epochs = 60;
    p.training.batch_size = 64;
    p.seed = 5;
    BranchAndBoundBackend bb;
    int calls = 0;
    const RunResult r = run(ev, p, bb, [&](const IterationRecord&) { ++calls; });
    CHECK(calls == 1);
    REQUIRE(r.history.size() == 1);
    const IterationRecord& rec = r.history[0];
    CHECK(rec.dataset_size == 300);
    REQUIRE(rec.candidates.size() == 2);
    CHECK(rec.candidates[0].epsilon == 0.0);
    CHECK(rec.candidates[1].epsilon == 0.1);
    CHECK(r.best.within(0.0, 3.0));
    CHECK(r.best_score == doctest::Approx(ev.score(r.best.k)).epsilon(1e-12));
    for (const auto& c : rec.candidates) CHECK(r.best_score >= c.true_score);

    const auto j = nlohmann::json::parse(rec.to_json());
    CHECK(j["iteration"] == 1);
    CHECK(j["candidates"].size() == 2);
    CHECK(rec.to_json().find('\n') == std::string::npos);
}

TEST_CASE("run parameter checks") {
    RunParams p;
    p.iterations = 0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.epsilons = {-0.1};
    CHECK_THROWS_AS(p.validate(), Error);
}
