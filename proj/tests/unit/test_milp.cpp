#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helioaim/error.hpp"
#include "helioaim/milp.hpp"
#include "helioaim/rng.hpp"

using namespace helioaim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SurrogateModel tiny_model() {
    DenseLayer l1{MatrixXd::Ones(1, 1), VectorXd::Zero(1), {}, {}};
    DenseLayer l2{MatrixXd::Ones(1, 1), VectorXd::Zero(1), {}, {}};
    SurrogateModel m({l1, l2}, {VectorXd::Zero(1), VectorXd::Ones(1)}, {});
    m.attach_bounds();
    return m;
}

SurrogateModel random_model(Rng& rng, int n0, std::vector<int> hidden, bool nonnegative = false) {
    std::vector<DenseLayer> layers;
    int prev = n0;
    hidden.push_back(1);
    for (int w : hidden) {
        DenseLayer l;
        l.W.resize(w, prev);
        l.b.resize(w);
        for (int i = 0; i < l.W.size(); ++i) l.W.data()[i] = nonnegative ? rng.uniform(0, 1) : rng.normal();
        for (int i = 0; i < w; ++i) l.b[i] = nonnegative ? rng.uniform(0, 0.3) : rng.normal(0, 0.5);
        layers.push_back(std::move(l));
        prev = w;
    }
    SurrogateModel m(std::move(layers), {VectorXd::Zero(n0), VectorXd::Constant(n0, 3.0)}, {50.0, 8.0});
    m.attach_bounds();
    return m;
}

TrustRegion random_tr(Rng& rng, int n, int n0, double eps) {
    TrustRegion tr;
    tr.epsilon = eps;
    tr.points.resize(n, n0);
    for (int i = 0; i < tr.points.size(); ++i) tr.points.data()[i] = rng.uniform(0.1, 0.9);
    return tr;
}

void check_solution(const MilpModel& m, const MilpSolution& s, const SurrogateModel& model, const TrustRegion& tr) {
    REQUIRE(s.has_solution());
    CHECK(std::abs(model.predict(s.x.k) - s.objective) <= 1e-5);
    CHECK(s.beta.minCoeff() >= -1e-12);
    CHECK(std::abs(s.beta.sum() - 1.0) <= 1e-8);
    CHECK(s.s.cwiseAbs().maxCoeff() <= tr.epsilon + 1e-8);
    const VectorXd hull = tr.points.transpose() * s.beta;
    CHECK((hull - s.x_scaled - s.s).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(s.x.within(m.k_bounds.k_min, m.k_bounds.k_max));
    const auto t = model.forward(s.x_scaled);
    for (int j = 0; j < t.z[0].size(); ++j) CHECK(std::abs(t.a[0][j] - std::max(0.0, t.z[0][j])) <= 1e-6);
}

}  // namespace

TEST_CASE("hand-solved one-neuron program") {
    const SurrogateModel model = tiny_model();
    TrustRegion tr;
    tr.points = MatrixXd::Constant(1, 1, 0.4);
    tr.epsilon = 0.0;
    const MilpModel m = encode(model, tr, {0.0, 1.0});
    CHECK(m.binary_count() == 1);

    BranchAndBoundBackend bb;
    EnumerationBackend en;
    for (SolverBackend* b : std::initializer_list<SolverBackend*>{&bb, &en}) {
        const MilpSolution s = solve(m, *b, 10.0);
        REQUIRE(s.status == SolveStatus::Optimal);
        CHECK(s.x.k[0] == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(s.objective == doctest::Approx(0.4).epsilon(1e-12));
    }
#ifdef HELIOAIM_TEST_CBC
    ExternalLpBackend cbc(HELIOAIM_TEST_CBC);
    const MilpSolution s = solve(m, cbc, 10.0);
    REQUIRE(s.status == SolveStatus::Optimal);
    CHECK(s.x.k[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(s.objective == doctest::Approx(0.4).epsilon(1e-12));
#endif
}

TEST_CASE("encoding sizes") {
    Rng rng(1);
    const SurrogateModel model = random_model(rng, 6, {50});
    const TrustRegion tr = random_tr(rng, 30, 6, 0.1);
    const MilpModel m = encode(model, tr, {0.0, 3.0});
    CHECK(m.binary_count() == 50);
    int ge = 0, le = 0, ub = 0, spos = 0, sneg = 0;
    for (const auto& c : m.constraints) {
        ge += c.name.rfind("relu_ge_", 0) == 0;
        le += c.name.rfind("relu_le_", 0) == 0;
        ub += c.name.rfind("relu_ub_", 0) == 0;
        spos += c.name.rfind("s_pos_", 0) == 0;
        sneg += c.name.rfind("s_neg_", 0) == 0;
    }
    CHECK(ge == 50);
    CHECK(le == 50);
    CHECK(ub == 50);
    CHECK(spos == 6);
    CHECK(sneg == 6);
    CHECK(m.beta.size() == 30);
    CHECK(m.variables[m.x[2]].name == "x_2");
    CHECK(m.variables[m.a[0][1]].name == "a_0_1");
    CHECK(m.variables[m.z[1][7]].name == "z_1_7");
    CHECK(m.variables[m.sigma[1][49]].name == "sig_1_49");
    CHECK(m.variables[m.beta[29]].name == "beta_29");
    CHECK(m.variables[m.s[5]].name == "s_5");
    CHECK(m.variables[m.qs].name == "qs");
}

TEST_CASE("encoding errors") {
    Rng rng(2);
    DenseLayer l1{MatrixXd::Ones(2, 1), VectorXd::Zero(2), {}, {}};
    DenseLayer l2{MatrixXd::Ones(1, 2), VectorXd::Zero(1), {}, {}};
    const SurrogateModel unbounded({l1, l2}, {VectorXd::Zero(1), VectorXd::Ones(1)}, {});
    TrustRegion tr;
    tr.points = MatrixXd::Constant(1, 1, 0.5);
    try {
        encode(unbounded, tr, {0.0, 1.0});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Encoding);
    }
    tr.epsilon = -0.1;
    try {
        encode(tiny_model(), tr, {0.0, 1.0});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidTrustRegion);
    }
}

TEST_CASE("inverted k box is reported as infeasible") {
    TrustRegion tr;
    tr.points = MatrixXd::Constant(1, 1, 0.4);
    const MilpModel m = encode(tiny_model(), tr, {0.8, 0.2});
    BranchAndBoundBackend bb;
    CHECK(solve(m, bb, 5.0).status == SolveStatus::Infeasible);
    CHECK(enumerate_oracle(tiny_model(), tr, {0.8, 0.2}).status == SolveStatus::Infeasible);
}

TEST_CASE("enumeration refuses large networks") {
    Rng rng(3);
    const SurrogateModel model = random_model(rng, 2, {16});
    const TrustRegion tr = random_tr(rng, 5, 2, 0.1);
    try {
        enumerate_oracle(model, tr, {0.0, 3.0});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Usage);
    }
}

TEST_CASE("branch and bound agrees with enumeration") {
    Rng rng(4);
    BranchAndBoundBackend bb;
    SolveOptions o;
    o.relative_gap = 0.0;
    o.absolute_gap = 1e-10;
    for (int trial = 0; trial < 8; ++trial) {
        const int n0 = trial % 2 == 0 ? 2 : 5;
        const SurrogateModel model = random_model(rng, n0, {6});
        const TrustRegion tr = random_tr(rng, 25, n0, 0.05 * trial);
        const MilpModel m = encode(model, tr, {0.0, 3.0});
        const MilpSolution a = solve(m, bb, o);
        const MilpSolution b = enumerate_oracle(model, tr, {0.0, 3.0});
        check_solution(m, a, model, tr);
        check_solution(m, b, model, tr);
        CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-9));
    }
}

TEST_CASE("monotone network with an unbounded trust region peaks at the top corner") {
    Rng rng(5);
    const SurrogateModel model = random_model(rng, 3, {5}, true);
    TrustRegion tr = random_tr(rng, 4, 3, std::numeric_limits<double>::infinity());
    const MilpSolution s = enumerate_oracle(model, tr, {0.0, 3.0});
    REQUIRE(s.status == SolveStatus::Optimal);
    for (double k : s.x.k) CHECK(k == doctest::Approx(3.0));
    BranchAndBoundBackend bb;
    const MilpSolution b = solve(encode(model, tr, {0.0, 3.0}), bb, 10.0);
    CHECK(b.objective == doctest::Approx(s.objective).epsilon(1e-9));
}

TEST_CASE("a single point with zero epsilon is the only feasible input") {
    Rng rng(6);
    const SurrogateModel model = random_model(rng, 4, {7});
    TrustRegion tr = random_tr(rng, 1, 4, 0.0);
    const MilpSolution s = enumerate_oracle(model, tr, {0.0, 3.0});
    REQUIRE(s.has_solution());
    const VectorXd k = model.input_scaler().unscale(tr.points.row(0).transpose());
    CHECK(s.objective == doctest::Approx(model.predict(std::span<const double>(k.data(), 4))).epsilon(1e-10));
}

TEST_CASE("objective grows with epsilon") {
    Rng rng(7);
    BranchAndBoundBackend bb;
    for (int trial = 0; trial < 3; ++trial) {
        const SurrogateModel model = random_model(rng, 3, {6});
        TrustRegion tr = random_tr(rng, 10, 3, 0.0);
        double prev = -1e300;
        for (double eps : {0.0, 0.1, 0.5}) {
            tr.epsilon = eps;
            const MilpSolution s = solve(encode(model, tr, {0.0, 3.0}), bb, 10.0);
            REQUIRE(s.has_solution());
            CHECK(s.objective >= prev - 1e-9);
            prev = s.objective;
        }
    }
}

TEST_CASE("lp file and solution file formats") {
    TrustRegion tr;
    tr.points = MatrixXd::Constant(1, 1, 0.4);
    const MilpModel m = encode(tiny_model(), tr, {0.0, 1.0});
    std::ostringstream lp;
    m.write_lp(lp);
    const std::string text = lp.str();
    CHECK(text.find("Maximize") != std::string::npos);
    CHECK(text.find("Binaries\n sig_1_0\n") != std::string::npos);
    CHECK(text.find("a_0_0 free") != std::string::npos);
    CHECK(text.find("0 <= x_0 <= 1") != std::string::npos);

    std::istringstream sol(
        "Optimal - objective value 0.40000000\n"
        "      0 in_0                   0                       0\n"
        "      0 x_0                  0.4                      0\n"
        "      1 a_0_0                0.4                      0\n"
        "      2 z_1_0                0.4                      0\n"
        "      3 a_1_0                0.4                      0\n"
        "      4 sig_1_0                1                      0\n"
        "      5 z_2_0                0.4                      0\n"
        "      6 beta_0                 1                      0\n"
        "      7 s_0                    0                      0\n"
        "      8 qs                   0.4                      0\n");
    const BackendResult r = ExternalLpBackend::parse_solution(sol, m);
    CHECK(r.status == SolveStatus::Optimal);
    CHECK(r.values[m.qs] == 0.4);
    CHECK(r.values[m.sigma[1][0]] == 1.0);

    std::istringstream infeasible("Infeasible - objective value 0.00000000\n");
    CHECK(ExternalLpBackend::parse_solution(infeasible, m).status == SolveStatus::Infeasible);
}

TEST_CASE("missing external solver is a backend error") {
    TrustRegion tr;
    tr.points = MatrixXd::Constant(1, 1, 0.4);
    const MilpModel m = encode(tiny_model(), tr, {0.0, 1.0});
    ExternalLpBackend missing("/nonexistent/cbc");
    try {
        solve(m, missing, 1.0);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Backend);
    }
}

TEST_CASE("k-means subsampling keeps points inside the hull box") {
    Rng rng(8);
    const TrustRegion tr = random_tr(rng, 300, 3, 0.0);
    const MatrixXd c = kmeans_centroids(tr.points, 40, 1);
    CHECK(c.rows() == 40);
    CHECK(c.minCoeff() >= tr.points.minCoeff());
    CHECK(c.maxCoeff() <= tr.points.maxCoeff());
}
