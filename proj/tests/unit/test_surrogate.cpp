#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helioaim/error.hpp"
#include "helioaim/rng.hpp"
#include "helioaim/surrogate.hpp"

using namespace helioaim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

InputScaler unit_scaler(int n) { return {VectorXd::Zero(n), VectorXd::Ones(n)}; }

SurrogateModel random_net(Rng& rng, int n0, std::vector<int> hidden) {
    std::vector<DenseLayer> layers;
    int prev = n0;
    hidden.push_back(1);
    for (int w : hidden) {
        DenseLayer l;
        l.W.resize(w, prev);
        l.b.resize(w);
        for (int i = 0; i < l.W.size(); ++i) l.W.data()[i] = rng.normal();
        for (int i = 0; i < w; ++i) l.b[i] = rng.normal(0.0, 0.5);
        layers.push_back(std::move(l));
        prev = w;
    }
    return SurrogateModel(std::move(layers), unit_scaler(n0), {});
}

Dataset make_data(int n, int dim, std::uint64_t seed, double (*f)(const VectorXd&)) {
    Rng rng(seed);
    Dataset d;
    d.k_min = 0.0;
    d.k_max = 3.0;
    d.X.resize(n, dim);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dim; ++j) d.X(i, j) = rng.uniform(0.0, 3.0);
        d.y(i) = f(d.X.row(i).transpose());
    }
    return d;
}

double linear_target(const VectorXd& x) { return 100.0 + 40.0 * x[0] - 25.0 * x[1] + 10.0 * x[2]; }
double constant_target(const VectorXd&) { return 7.5; }
double bumpy_target(const VectorXd& x) { return std::sin(2.0 * x[0]) * 50.0 + x[1] * x[1] * 10.0; }

}  // namespace

TEST_CASE("hand forward pass of a 1-2-1 network") {
    DenseLayer l1{MatrixXd(2, 1), VectorXd::Zero(2), {}, {}};
    l1.W << 1.0, -1.0;
    DenseLayer l2{MatrixXd(1, 2), VectorXd::Zero(1), {}, {}};
    l2.W << 1.0, 1.0;
    const SurrogateModel m({l1, l2}, unit_scaler(1), {});
    CHECK(m.predict(std::vector<double>{0.5}) == 0.5);
    CHECK(m.hidden_neurons() == 2);
}

TEST_CASE("zero weights predict the unscaled output bias") {
    DenseLayer l1{MatrixXd::Zero(3, 2), VectorXd::Zero(3), {}, {}};
    DenseLayer l2{MatrixXd::Zero(1, 3), VectorXd::Constant(1, 0.7), {}, {}};
    const SurrogateModel m({l1, l2}, {VectorXd::Zero(2), VectorXd::Constant(2, 3.0)}, {10.0, 4.0});
    CHECK(m.predict(std::vector<double>{0.3, 2.9}) == doctest::Approx(10.0 + 4.0 * 0.7));
    CHECK(m.predict(std::vector<double>{1.0, 0.0}) == doctest::Approx(12.8));
    CHECK_THROWS_AS(m.predict(std::vector<double>{1.0}), Error);
}

TEST_CASE("interval bounds") {
    DenseLayer l1{MatrixXd(1, 2), VectorXd::Zero(1), {}, {}};
    l1.W << 1.0, -1.0;
    DenseLayer l2{MatrixXd::Ones(1, 1), VectorXd::Zero(1), {}, {}};
    const SurrogateModel m({l1, l2}, unit_scaler(2), {});
    const auto b = compute_bounds(m, VectorXd::Zero(2), VectorXd::Ones(2));
    CHECK(b[0][0].lo == -1.0);
    CHECK(b[0][0].hi == 1.0);
    CHECK(b[1][0].lo == 0.0);
    CHECK(b[1][0].hi == 1.0);

    DenseLayer p{MatrixXd(2, 3), VectorXd(2), {}, {}};
    p.W << 0.5, 1.0, 2.0, 0.0, 0.25, 0.75;
    p.b << -1.0, 0.3;
    const SurrogateModel mono({p, DenseLayer{MatrixXd::Ones(1, 2), VectorXd::Zero(1), {}, {}}}, unit_scaler(3), {});
    const auto bm = compute_bounds(mono, VectorXd::Zero(3), VectorXd::Ones(3));
    CHECK(bm[0][0].lo == -1.0);
    CHECK(bm[0][0].hi == doctest::Approx(2.5));
    CHECK(bm[0][1].lo == 0.3);
    CHECK(bm[0][1].hi == doctest::Approx(1.3));
}

TEST_CASE("bounds hold for sampled inputs") {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        SurrogateModel m = random_net(rng, 4, {12, 7});
        m.attach_bounds();
        REQUIRE(m.has_bounds());
        for (int s = 0; s < 2000; ++s) {
            VectorXd x(4);
            for (int j = 0; j < 4; ++j) x[j] = rng.uniform();
            const auto t = m.forward(x);
            for (std::size_t l = 0; l < t.z.size(); ++l) {
                const auto& layer = m.layers()[l];
                for (int j = 0; j < t.z[l].size(); ++j) {
                    CHECK(t.z[l][j] >= layer.lower[j] - 1e-12);
                    CHECK(t.z[l][j] <= layer.upper[j] + 1e-12);
                }
            }
        }
    }
}

TEST_CASE("prediction is affine inside an activation pattern") {
    Rng rng(5);
    const SurrogateModel m = random_net(rng, 3, {10});
    int checked = 0;
    for (int s = 0; s < 500 && checked < 50; ++s) {
        VectorXd a(3), b(3);
        for (int j = 0; j < 3; ++j) {
            a[j] = rng.uniform();
            b[j] = a[j] + rng.uniform(-0.02, 0.02);
        }
        const auto ta = m.forward(a), tb = m.forward(b), tm = m.forward((a + b) / 2);
        if (((ta.z[0].array() > 0) != (tb.z[0].array() > 0)).any()) continue;
        ++checked;
        CHECK(std::abs(m.predict_scaled((a + b) / 2) - (m.predict_scaled(a) + m.predict_scaled(b)) / 2) < 1e-9);
    }
    CHECK(checked > 10);
}

TEST_CASE("prediction is Lipschitz with the product of operator norms") {
    Rng rng(6);
    const SurrogateModel m = random_net(rng, 5, {8, 6});
    double lip = 1.0;
    for (const auto& l : m.layers()) lip *= Eigen::JacobiSVD<MatrixXd>(l.W).singularValues()(0);
    for (int s = 0; s < 300; ++s) {
        VectorXd x(5), d(5);
        for (int j = 0; j < 5; ++j) {
            x[j] = rng.uniform();
            d[j] = rng.uniform(-0.1, 0.1);
        }
        CHECK(std::abs(m.predict_scaled(x + d) - m.predict_scaled(x)) <= lip * d.norm() + 1e-12);
    }
}

TEST_CASE("scaler round trip") {
    const TargetScaler t{123.4, 56.7};
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const double y = rng.uniform(-1e4, 1e4);
        CHECK(std::abs(t.unscale(t.scale(y)) - y) <= 1e-12 * std::max(1.0, std::abs(y)));
    }
    const InputScaler in{VectorXd::Constant(3, 0.0), VectorXd::Constant(3, 3.0)};
    const VectorXd x = (VectorXd(3) << 0.0, 1.7, 3.0).finished();
    CHECK((in.unscale(in.scale(x)) - x).norm() < 1e-14);
}

TEST_CASE("model json round trip") {
    Rng rng(2);
    SurrogateModel m = random_net(rng, 3, {4});
    m.attach_bounds();
    const SurrogateModel r = SurrogateModel::from_json(m.to_json());
    CHECK(r.has_bounds());
    CHECK(r.widths() == m.widths());
    const std::vector<double> k{0.1, 0.5, 0.9};
    CHECK(r.predict(k) == m.predict(k));
    CHECK(r.layers()[0].upper == m.layers()[0].upper);
}

TEST_CASE("training fits a constant") {
    const Dataset d = make_data(1200, 3, 1, constant_target);
    TrainParams p;
    p.hidden = {16};
    p.seed = 3;
    p.max_epochs = 1500;
    p.patience = 100;
    TrainReport rep;
    const SurrogateModel m = train(d, p, &rep);
    CHECK(rep.validation_rmse < 1e-3 * 7.5 + 1e-6);
    CHECK(m.predict(std::vector<double>{1.0, 2.0, 0.5}) == doctest::Approx(7.5).epsilon(1e-3));
}

TEST_CASE("training fits a linear map") {
    const Dataset d = make_data(2000, 3, 2, linear_target);
    TrainParams p;
    p.seed = 4;
    p.max_epochs = 800;
    const SurrogateModel m = train(d, p);
    const Dataset test = make_data(500, 3, 99, linear_target);
    double ss_res = 0.0, ss_tot = 0.0;
    const double mean = test.y.mean();
    for (int i = 0; i < test.size(); ++i) {
        const VectorXd x = test.X.row(i).transpose();
        const double e = m.predict(std::span<const double>(x.data(), 3)) - test.y[i];
        ss_res += e * e;
        ss_tot += (test.y[i] - mean) * (test.y[i] - mean);
    }
    CHECK(1.0 - ss_res / ss_tot > 0.99);
}

TEST_CASE("training is deterministic and improves on its start") {
    const Dataset d = make_data(800, 2, 3, bumpy_target);
    TrainParams p;
    p.hidden = {20};
    p.max_epochs = 60;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        p.seed = seed;
        TrainReport r1, r2;
        const SurrogateModel a = train(d, p, &r1);
        const SurrogateModel b = train(d, p, &r2);
        CHECK(a.to_json() == b.to_json());
        CHECK(r1.validation_rmse < r1.initial_validation_rmse);
    }
}

TEST_CASE("non-finite targets diverge") {
    Dataset d = make_data(50, 2, 1, bumpy_target);
    d.y[3] = std::numeric_limits<double>::quiet_NaN();
    try {
        train(d, TrainParams{});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TrainingDiverged);
    }
}

TEST_CASE("dataset csv round trip") {
    const Dataset d = make_data(20, 3, 8, linear_target);
    std::stringstream s;
    d.write_csv(s);
    const Dataset r = Dataset::read_csv(s, 0.0, 3.0);
    CHECK(r.X == d.X);
    CHECK(r.y == d.y);
}
