#include "helioaim/milp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>
#include <unordered_map>

#include "helioaim/error.hpp"
#include "helioaim/rng.hpp"

namespace helioaim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string var_name(const char* stem, int l, int j) {
    return std::string(stem) + "_" + std::to_string(l) + "_" + std::to_string(j);
}

}  // namespace

// ---------------------------------------------------------------- trust region

MatrixXd kmeans_centroids(const MatrixXd& points, int k, std::uint64_t seed, int iterations) {
    const int n = static_cast<int>(points.rows());
    if (k <= 0 || k >= n) return points;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    MatrixXd c(k, points.cols());
    for (int i = 0; i < k; ++i) c.row(i) = points.row(order[i]);

    std::vector<int> assign(n, 0);
    for (int it = 0; it < iterations; ++it) {
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int j = 0; j < k; ++j) {
                const double d = (points.row(i) - c.row(j)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            assign[i] = best;
        }
        MatrixXd sum = MatrixXd::Zero(k, points.cols());
        std::vector<int> count(k, 0);
        for (int i = 0; i < n; ++i) {
            sum.row(assign[i]) += points.row(i);
            ++count[assign[i]];
        }
        // empty clusters keep their previous centroid
        for (int j = 0; j < k; ++j)
            if (count[j] > 0) c.row(j) = sum.row(j) / count[j];
    }
    return c;
}

TrustRegion TrustRegion::from_dataset(const Dataset& data, const InputScaler& scaler, double epsilon, int max_rows,
                                      std::uint64_t seed) {
    TrustRegion tr;
    tr.epsilon = epsilon;
    tr.points.resize(data.size(), data.dimension());
    for (int i = 0; i < data.size(); ++i) tr.points.row(i) = scaler.scale(data.X.row(i).transpose()).transpose();
    if (max_rows > 0 && tr.points.rows() > max_rows) tr.points = kmeans_centroids(tr.points, max_rows, seed);
    return tr;
}

void TrustRegion::validate(int dimension) const {
    if (std::isnan(epsilon) || epsilon < 0.0)
        fail(ErrorKind::InvalidTrustRegion, "trust region epsilon must be non-negative");
    if (points.rows() == 0) fail(ErrorKind::InvalidTrustRegion, "trust region has no data points");
    if (points.cols() != dimension)
        fail(ErrorKind::InvalidTrustRegion, "trust region dimension " + std::to_string(points.cols()) +
                                                " does not match model input " + std::to_string(dimension));
    if (!points.allFinite()) fail(ErrorKind::InvalidTrustRegion, "trust region points must be finite");
}

// ---------------------------------------------------------------- model

int MilpModel::add_variable(std::string name, double lb, double ub, bool binary) {
    variables.push_back({std::move(name), lb, ub, binary});
    return static_cast<int>(variables.size()) - 1;
}

int MilpModel::binary_count() const {
    return static_cast<int>(std::count_if(variables.begin(), variables.end(), [](const auto& v) { return v.binary; }));
}

bool MilpModel::box_infeasible() const {
    for (const auto& v : variables)
        if (v.lb > v.ub) return true;
    return false;
}

lp::Problem MilpModel::relaxation() const {
    lp::Problem p;
    for (const auto& v : variables) p.add_var(v.binary ? 0.0 : v.lb, v.binary ? 1.0 : v.ub);
    for (const auto& [j, c] : objective) p.objective[j] += c;
    for (const auto& c : constraints) p.add_row(c.terms, c.sense, c.rhs);
    return p;
}

double MilpModel::objective_value(const std::vector<double>& values) const {
    double v = 0.0;
    for (const auto& [j, c] : objective) v += c * values[j];
    return v;
}

namespace {

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

void write_terms(std::ostream& out, const std::vector<std::pair<int, double>>& terms,
                 const std::vector<MilpVariable>& vars) {
    int on_line = 0;
    bool first = true;
    for (const auto& [j, c] : terms) {
        if (c == 0.0) continue;
        if (on_line == 6) {
            out << "\n   ";
            on_line = 0;
        }
        out << (c < 0 ? " - " : (first ? " " : " + ")) << fmt(std::abs(c)) << ' ' << vars[j].name;
        first = false;
        ++on_line;
    }
    if (first) out << " 0 " << vars.front().name;
}

}  // namespace

void MilpModel::write_lp(std::ostream& out) const {
    out << "\\ helio-aim surrogate aiming model\nMaximize\n obj:";
    write_terms(out, objective, variables);
    out << "\nSubject To\n";
    for (const auto& c : constraints) {
        out << ' ' << c.name << ':';
        write_terms(out, c.terms, variables);
        switch (c.sense) {
            case lp::Sense::LessEqual: out << " <= "; break;
            case lp::Sense::GreaterEqual: out << " >= "; break;
            case lp::Sense::Equal: out << " = "; break;
        }
        out << fmt(c.rhs) << '\n';
    }
    out << "Bounds\n";
    for (const auto& v : variables) {
        if (v.binary) continue;
        const bool lo = std::isfinite(v.lb);
        const bool hi = std::isfinite(v.ub);
        if (!lo && !hi)
            out << ' ' << v.name << " free\n";
        else if (lo && hi)
            out << ' ' << fmt(v.lb) << " <= " << v.name << " <= " << fmt(v.ub) << '\n';
        else if (lo)
            out << ' ' << v.name << " >= " << fmt(v.lb) << '\n';
        else
            out << " -inf <= " << v.name << " <= " << fmt(v.ub) << '\n';
    }
    out << "Binaries\n";
    for (const auto& v : variables)
        if (v.binary) out << ' ' << v.name << '\n';
    out << "End\n";
}

std::pair<VectorXd, VectorXd> scaled_box(const SurrogateModel& model, KBounds k_bounds) {
    const int n = model.input_dim();
    const auto& sc = model.input_scaler();
    VectorXd lo(n), hi(n);
    for (int j = 0; j < n; ++j) {
        const double range = sc.hi[j] - sc.lo[j];
        lo[j] = (k_bounds.k_min - sc.lo[j]) / range;
        hi[j] = (k_bounds.k_max - sc.lo[j]) / range;
    }
    return {lo, hi};
}

MilpModel encode(const SurrogateModel& model, const TrustRegion& tr, KBounds k_bounds) {
    if (model.layers().empty()) fail(ErrorKind::Encoding, "surrogate has no layers");
    if (!model.has_bounds()) fail(ErrorKind::Encoding, "surrogate has no preactivation bounds; attach bounds first");
    const int n0 = model.input_dim();
    tr.validate(n0);

    MilpModel m;
    m.surrogate = std::make_shared<SurrogateModel>(model);
    m.trust_region = std::make_shared<TrustRegion>(tr);
    m.k_bounds = k_bounds;
    std::tie(m.x_lo, m.x_hi) = scaled_box(model, k_bounds);

    const auto& layers = model.layers();
    const int L = model.hidden_layers();
    m.a.resize(L + 1);
    m.z.resize(L + 2);
    m.sigma.resize(L + 1);

    for (int j = 0; j < n0; ++j) m.x.push_back(m.add_variable("x_" + std::to_string(j), m.x_lo[j], m.x_hi[j]));
    for (int j = 0; j < n0; ++j) m.a[0].push_back(m.add_variable(var_name("a", 0, j), -lp::kInf, lp::kInf));
    for (int l = 1; l <= L + 1; ++l) {
        const int width = layers[l - 1].outputs();
        for (int j = 0; j < width; ++j) m.z[l].push_back(m.add_variable(var_name("z", l, j), -lp::kInf, lp::kInf));
        if (l == L + 1) break;
        for (int j = 0; j < width; ++j) m.a[l].push_back(m.add_variable(var_name("a", l, j), 0.0, lp::kInf));
        for (int j = 0; j < width; ++j) m.sigma[l].push_back(m.add_variable(var_name("sig", l, j), 0.0, 1.0, true));
    }
    const int N = static_cast<int>(tr.points.rows());
    for (int i = 0; i < N; ++i) m.beta.push_back(m.add_variable("beta_" + std::to_string(i), 0.0, lp::kInf));
    for (int j = 0; j < n0; ++j) m.s.push_back(m.add_variable("s_" + std::to_string(j), -lp::kInf, lp::kInf));
    m.qs = m.add_variable("qs", -lp::kInf, lp::kInf);
    m.objective = {{m.qs, 1.0}};

    auto row = [&](std::string name, std::vector<std::pair<int, double>> terms, lp::Sense sense, double rhs) {
        m.constraints.push_back({std::move(name), std::move(terms), sense, rhs});
    };

    for (int j = 0; j < n0; ++j)
        row("in_" + std::to_string(j), {{m.a[0][j], 1.0}, {m.x[j], -1.0}}, lp::Sense::Equal, 0.0);
    row("out", {{m.qs, 1.0}, {m.z[L + 1][0], -1.0}}, lp::Sense::Equal, 0.0);

    for (int l = 1; l <= L + 1; ++l) {
        const DenseLayer& layer = layers[l - 1];
        for (int j = 0; j < layer.outputs(); ++j) {
            std::vector<std::pair<int, double>> terms{{m.z[l][j], 1.0}};
            for (int i = 0; i < layer.inputs(); ++i)
                if (layer.W(j, i) != 0.0) terms.emplace_back(m.a[l - 1][i], -layer.W(j, i));
            row(var_name("aff", l, j), std::move(terms), lp::Sense::Equal, layer.b[j]);
        }
        if (l == L + 1) break;
        for (int j = 0; j < layer.outputs(); ++j) {
            const double lo = layer.lower[j];
            const double hi = layer.upper[j];
            const int a = m.a[l][j], z = m.z[l][j], s = m.sigma[l][j];
            row(var_name("relu_ge", l, j), {{a, 1.0}, {z, -1.0}}, lp::Sense::GreaterEqual, 0.0);
            row(var_name("relu_le", l, j), {{a, 1.0}, {z, -1.0}, {s, -lo}}, lp::Sense::LessEqual, -lo);
            row(var_name("relu_ub", l, j), {{a, 1.0}, {s, -hi}}, lp::Sense::LessEqual, 0.0);
        }
    }

    for (int j = 0; j < n0; ++j) {
        std::vector<std::pair<int, double>> terms;
        for (int i = 0; i < N; ++i)
            if (tr.points(i, j) != 0.0) terms.emplace_back(m.beta[i], tr.points(i, j));
        terms.emplace_back(m.x[j], -1.0);
        terms.emplace_back(m.s[j], -1.0);
        row("tr_" + std::to_string(j), std::move(terms), lp::Sense::Equal, 0.0);
    }
    {
        std::vector<std::pair<int, double>> terms;
        for (int i = 0; i < N; ++i) terms.emplace_back(m.beta[i], 1.0);
        row("simplex", std::move(terms), lp::Sense::Equal, 1.0);
    }
    if (std::isfinite(tr.epsilon)) {
        for (int j = 0; j < n0; ++j) {
            row("s_pos_" + std::to_string(j), {{m.s[j], 1.0}}, lp::Sense::LessEqual, tr.epsilon);
            row("s_neg_" + std::to_string(j), {{m.s[j], -1.0}}, lp::Sense::LessEqual, tr.epsilon);
        }
    }
    return m;
}

const char* to_string(SolveStatus s) noexcept {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Feasible: return "feasible";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::Timeout: return "timeout";
    }
    return "unknown";
}

// ---------------------------------------------------------------- fixed pattern

std::optional<PatternOptimum> optimize_pattern(const SurrogateModel& model, const TrustRegion& tr,
                                               const VectorXd& x_lo, const VectorXd& x_hi,
                                               const std::vector<std::vector<int>>& pattern) {
    const int n0 = model.input_dim();
    const int N = static_cast<int>(tr.points.rows());
    const auto& layers = model.layers();
    const int L = model.hidden_layers();

    lp::Problem p;
    std::vector<int> xv(n0), sv(n0), bv(N);
    for (int j = 0; j < n0; ++j) {
        if (x_lo[j] > x_hi[j]) return std::nullopt;
        xv[j] = p.add_var(x_lo[j], x_hi[j]);
    }
    const double eps = tr.epsilon;
    for (int j = 0; j < n0; ++j) sv[j] = p.add_var(-eps, eps);
    for (int i = 0; i < N; ++i) bv[i] = p.add_var(0.0, lp::kInf);

    // preactivations as affine maps G x + h under the fixed pattern
    MatrixXd G = MatrixXd::Identity(n0, n0);
    VectorXd h = VectorXd::Zero(n0);
    for (int l = 0; l <= L; ++l) {
        MatrixXd Gz = layers[l].W * G;
        VectorXd hz = layers[l].W * h + layers[l].b;
        if (l == L) {
            for (int j = 0; j < n0; ++j) p.objective[xv[j]] = Gz(0, j);
            break;
        }
        for (int k = 0; k < Gz.rows(); ++k) {
            std::vector<std::pair<int, double>> terms;
            for (int j = 0; j < n0; ++j)
                if (Gz(k, j) != 0.0) terms.emplace_back(xv[j], Gz(k, j));
            const bool active = pattern[l][k] != 0;
            p.add_row(std::move(terms), active ? lp::Sense::GreaterEqual : lp::Sense::LessEqual, -hz[k]);
            if (!active) {
                Gz.row(k).setZero();
                hz[k] = 0.0;
            }
        }
        G = std::move(Gz);
        h = std::move(hz);
    }
    const double constant = (layers[L].W * h + layers[L].b)[0];

    for (int j = 0; j < n0; ++j) {
        std::vector<std::pair<int, double>> terms;
        for (int i = 0; i < N; ++i)
            if (tr.points(i, j) != 0.0) terms.emplace_back(bv[i], tr.points(i, j));
        terms.emplace_back(xv[j], -1.0);
        terms.emplace_back(sv[j], -1.0);
        p.add_row(std::move(terms), lp::Sense::Equal, 0.0);
    }
    {
        std::vector<std::pair<int, double>> terms;
        for (int i = 0; i < N; ++i) terms.emplace_back(bv[i], 1.0);
        p.add_row(std::move(terms), lp::Sense::Equal, 1.0);
    }

    const lp::Result r = lp::solve(p);
    if (r.status != lp::Status::Optimal) return std::nullopt;
    PatternOptimum out;
    out.x_scaled.resize(n0);
    out.s.resize(n0);
    out.beta.resize(N);
    for (int j = 0; j < n0; ++j) {
        out.x_scaled[j] = r.x[xv[j]];
        out.s[j] = r.x[sv[j]];
    }
    for (int i = 0; i < N; ++i) out.beta[i] = r.x[bv[i]];
    out.objective_scaled = r.objective + constant;
    return out;
}

namespace {

std::vector<std::vector<int>> pattern_of(const SurrogateModel& model, const VectorXd& xs) {
    const auto trace = model.forward(xs);
    std::vector<std::vector<int>> pattern(model.hidden_layers());
    for (int l = 0; l < model.hidden_layers(); ++l)
        for (int j = 0; j < trace.z[l].size(); ++j) pattern[l].push_back(trace.z[l][j] > 0.0 ? 1 : 0);
    return pattern;
}

/// Full variable assignment for input xs under the given pattern: a and z
/// follow the network with the pattern's rectifier choice, so the big-M rows
/// hold exactly whenever the pattern agrees with the preactivation signs.
std::vector<double> assignment(const MilpModel& m, const VectorXd& xs, const VectorXd& beta, const VectorXd& s,
                               const std::vector<std::vector<int>>& pattern) {
    const auto& layers = m.surrogate->layers();
    const int L = m.surrogate->hidden_layers();
    std::vector<double> v(m.variables.size(), 0.0);
    VectorXd act = xs;
    for (int j = 0; j < xs.size(); ++j) {
        v[m.x[j]] = xs[j];
        v[m.a[0][j]] = xs[j];
        v[m.s[j]] = s[j];
    }
    for (int i = 0; i < beta.size(); ++i) v[m.beta[i]] = beta[i];
    for (int l = 1; l <= L + 1; ++l) {
        VectorXd z = layers[l - 1].W * act + layers[l - 1].b;
        for (int j = 0; j < z.size(); ++j) v[m.z[l][j]] = z[j];
        if (l == L + 1) {
            v[m.qs] = z[0];
            break;
        }
        for (int j = 0; j < z.size(); ++j) {
            const int on = pattern[l - 1][j];
            v[m.sigma[l][j]] = on;
            if (!on) z[j] = 0.0;
            v[m.a[l][j]] = z[j];
        }
        act = std::move(z);
    }
    return v;
}

std::vector<std::vector<int>> pattern_from_values(const MilpModel& m, const std::vector<double>& v) {
    std::vector<std::vector<int>> pattern(m.sigma.size() - 1);
    for (std::size_t l = 1; l < m.sigma.size(); ++l)
        for (int idx : m.sigma[l]) pattern[l - 1].push_back(v[idx] > 0.5 ? 1 : 0);
    return pattern;
}

VectorXd gather(const std::vector<double>& v, const std::vector<int>& idx) {
    VectorXd out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
    return out;
}

bool gap_closed(double incumbent, double bound, const SolveOptions& o) {
    const double g = bound - incumbent;
    return g <= o.absolute_gap || g <= o.relative_gap * std::max(1e-9, std::abs(incumbent));
}

double relative_gap(double incumbent, double bound) {
    if (!std::isfinite(incumbent) || !std::isfinite(bound)) return std::numeric_limits<double>::infinity();
    return std::max(0.0, bound - incumbent) / std::max(1e-9, std::abs(incumbent));
}

}  // namespace

// ---------------------------------------------------------------- backends

ExternalLpBackend::ExternalLpBackend(std::string executable, std::string work_dir)
    : executable_(std::move(executable)), work_dir_(std::move(work_dir)) {}

std::optional<std::string> ExternalLpBackend::locate(const std::string& executable) {
    namespace fs = std::filesystem;
    if (executable.empty()) return std::nullopt;
    std::error_code ec;
    if (executable.find('/') != std::string::npos) {
        const fs::path p(executable);
        if (fs::is_regular_file(p, ec) && (fs::status(p, ec).permissions() & fs::perms::owner_exec) != fs::perms::none)
            return executable;
        return std::nullopt;
    }
    const char* path = std::getenv("PATH");
    if (!path) return std::nullopt;
    std::stringstream dirs(path);
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
        const fs::path p = fs::path(dir) / executable;
        if (fs::is_regular_file(p, ec)) return p.string();
    }
    return std::nullopt;
}

BackendResult ExternalLpBackend::parse_solution(std::istream& in, const MilpModel& model) {
    BackendResult res;
    std::string header;
    if (!std::getline(in, header)) fail(ErrorKind::Backend, "empty solver solution file");
    const bool infeasible = header.find("nfeasible") != std::string::npos;
    const bool stopped = header.rfind("Stopped", 0) == 0;
    const bool optimal = header.rfind("Optimal", 0) == 0;
    if (infeasible) {
        res.status = SolveStatus::Infeasible;
        return res;
    }
    if (!optimal && !stopped) fail(ErrorKind::Backend, "unrecognised solver status: " + header);

    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < model.variables.size(); ++i) index.emplace(model.variables[i].name, static_cast<int>(i));
    res.values.assign(model.variables.size(), 0.0);
    std::vector<char> seen(model.variables.size(), 0);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok, name;
        ls >> tok;
        if (tok == "**") ls >> tok;
        double value = 0.0;
        if (!(ls >> name >> value)) continue;
        const auto it = index.find(name);
        if (it == index.end()) continue;  // row activity
        res.values[it->second] = value;
        seen[it->second] = 1;
    }
    const bool any = std::any_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    if (stopped) {
        res.status = any ? SolveStatus::Feasible : SolveStatus::Timeout;
        if (!any) res.values.clear();
        // an exhausted time limit without an incumbent prints a zero solution
        if (header.find("no solution") != std::string::npos) {
            res.values.clear();
            res.status = SolveStatus::Timeout;
        }
    } else {
        res.status = SolveStatus::Optimal;
        res.gap = 0.0;
    }
    return res;
}

BackendResult ExternalLpBackend::solve(const MilpModel& model, const SolveOptions& options) {
    namespace fs = std::filesystem;
    const auto exe = locate(executable_);
    if (!exe) fail(ErrorKind::Backend, "solver executable not found: " + executable_);

    std::error_code ec;
    fs::path base = work_dir_.empty() ? fs::temp_directory_path() : fs::path(work_dir_);
    Rng rng(static_cast<std::uint64_t>(Clock::now().time_since_epoch().count()));
    fs::path dir;
    for (int attempt = 0; attempt < 100; ++attempt) {
        dir = base / ("helioaim-" + std::to_string(rng.next() % 1000000000ULL));
        if (fs::create_directories(dir, ec)) break;
        dir.clear();
    }
    if (dir.empty()) fail(ErrorKind::Backend, "cannot create solver work directory in " + base.string());

    const fs::path lp_file = dir / "model.lp";
    const fs::path sol_file = dir / "model.sol";
    const fs::path log_file = dir / "solver.log";
    {
        std::ofstream out(lp_file);
        model.write_lp(out);
        if (!out) fail(ErrorKind::Backend, "cannot write " + lp_file.string());
    }
    std::ostringstream cmd;
    cmd << '"' << *exe << "\" \"" << lp_file.string() << "\" -sec " << std::max(1.0, options.time_limit)
        << " -ratioGap " << options.relative_gap << " -allowableGap " << options.absolute_gap
        << " -printingOptions all -solve -solution \"" << sol_file.string() << "\" > \"" << log_file.string()
        << "\" 2>&1";
    const int rc = std::system(cmd.str().c_str());
    std::ifstream sol(sol_file);
    if (rc != 0 || !sol) {
        std::ifstream log(log_file);
        std::stringstream tail;
        tail << log.rdbuf();
        fs::remove_all(dir, ec);
        fail(ErrorKind::Backend, "solver failed (exit " + std::to_string(rc) + "): " + tail.str().substr(0, 500));
    }
    BackendResult res = parse_solution(sol, model);
    sol.close();
    if (res.status == SolveStatus::Feasible || res.status == SolveStatus::Timeout) {
        // CBC reports the best bound only in its log
        std::ifstream log(log_file);
        std::string line;
        while (std::getline(log, line)) {
            const auto pos = line.find("Gap:");
            if (pos != std::string::npos) res.gap = std::atof(line.c_str() + pos + 4);
        }
    }
    fs::remove_all(dir, ec);
    return res;
}

BackendResult BranchAndBoundBackend::solve(const MilpModel& model, const SolveOptions& options) {
    const auto t0 = Clock::now();
    nodes_ = 0;
    BackendResult res;
    if (model.box_infeasible()) return res;

    const lp::Problem base = model.relaxation();
    std::vector<int> binaries;
    for (std::size_t i = 0; i < model.variables.size(); ++i)
        if (model.variables[i].binary) binaries.push_back(static_cast<int>(i));

    double incumbent = -std::numeric_limits<double>::infinity();
    std::vector<double> best;

    auto try_incumbent = [&](std::vector<double> values) {
        const double v = model.objective_value(values);
        if (v > incumbent) {
            incumbent = v;
            best = std::move(values);
        }
    };

    // forward pass at the relaxation's x, improved by optimising over its pattern
    auto heuristic = [&](const std::vector<double>& lpx) {
        if (!model.surrogate || !model.trust_region) return;
        VectorXd xs = gather(lpx, model.x);
        for (int j = 0; j < xs.size(); ++j) xs[j] = std::clamp(xs[j], model.x_lo[j], model.x_hi[j]);
        const auto pattern = pattern_of(*model.surrogate, xs);
        const double before = incumbent;
        try_incumbent(assignment(model, xs, gather(lpx, model.beta), gather(lpx, model.s), pattern));
        if (incumbent > before) {
            if (auto po = optimize_pattern(*model.surrogate, *model.trust_region, model.x_lo, model.x_hi, pattern))
                try_incumbent(assignment(model, po->x_scaled, po->beta, po->s, pattern));
        }
    };

    struct Node {
        double bound;
        std::vector<std::int8_t> fix;  // per binary: -1 free, 0, 1
    };
    auto cmp = [](const Node& a, const Node& b) { return a.bound < b.bound; };
    std::priority_queue<Node, std::vector<Node>, decltype(cmp)> open(cmp);
    open.push({lp::kInf, std::vector<std::int8_t>(binaries.size(), -1)});

    bool timed_out = false;
    while (!open.empty()) {
        if (seconds_since(t0) > options.time_limit) {
            timed_out = true;
            break;
        }
        Node node = open.top();
        open.pop();
        if (std::isfinite(incumbent) && gap_closed(incumbent, node.bound, options)) continue;

        lp::Problem p = base;
        for (std::size_t b = 0; b < binaries.size(); ++b)
            if (node.fix[b] >= 0) p.lower[binaries[b]] = p.upper[binaries[b]] = node.fix[b];
        const lp::Result r = lp::solve(p);
        ++nodes_;
        if (r.status == lp::Status::Unbounded) fail(ErrorKind::Backend, "relaxation is unbounded");
        if (r.status != lp::Status::Optimal) continue;
        const double bound = std::min(node.bound, r.objective);
        if (std::isfinite(incumbent) && gap_closed(incumbent, bound, options)) continue;

        heuristic(r.x);

        int branch = -1;
        double most = 1e-7;
        for (std::size_t b = 0; b < binaries.size(); ++b) {
            const double v = r.x[binaries[b]];
            const double frac = std::min(v, 1.0 - v);
            if (frac > most) {
                most = frac;
                branch = static_cast<int>(b);
            }
        }
        if (branch < 0) {
            std::vector<double> values = r.x;
            for (int b : binaries) values[b] = std::round(values[b]);
            try_incumbent(std::move(values));
            continue;
        }
        for (std::int8_t side : {std::int8_t{0}, std::int8_t{1}}) {
            Node child{bound, node.fix};
            child.fix[branch] = side;
            open.push(std::move(child));
        }
    }

    double global_bound = incumbent;
    if (!open.empty()) global_bound = std::max(global_bound, open.top().bound);
    if (best.empty()) {
        res.status = timed_out ? SolveStatus::Timeout : SolveStatus::Infeasible;
        return res;
    }
    res.values = std::move(best);
    res.gap = timed_out ? relative_gap(incumbent, global_bound) : 0.0;
    res.status = timed_out ? SolveStatus::Feasible : SolveStatus::Optimal;
    return res;
}

BackendResult EnumerationBackend::solve(const MilpModel& model, const SolveOptions&) {
    BackendResult res;
    if (!model.surrogate || !model.trust_region) fail(ErrorKind::Backend, "enumeration needs the encoded surrogate");
    const MilpSolution sol = enumerate_oracle(*model.surrogate, *model.trust_region, model.k_bounds);
    res.status = sol.status;
    if (sol.has_solution()) {
        res.values = sol.values;
        res.gap = 0.0;
    }
    return res;
}

// ---------------------------------------------------------------- solve

namespace {

MilpSolution finish(const MilpModel& m, MilpSolution sol, const VectorXd& xs, const VectorXd& beta, const VectorXd& s,
                    const std::vector<std::vector<int>>& pattern) {
    const SurrogateModel& model = *m.surrogate;
    sol.values = assignment(m, xs, beta, s, pattern);
    sol.x_scaled = xs;
    sol.beta = beta;
    sol.s = s;
    sol.pattern = pattern;
    sol.objective_scaled = sol.values[m.qs];
    sol.objective = model.target_scaler().unscale(sol.objective_scaled);
    const VectorXd k = model.input_scaler().unscale(xs);
    sol.x.k.resize(k.size());
    for (int j = 0; j < k.size(); ++j) sol.x.k[j] = std::clamp(k[j], m.k_bounds.k_min, m.k_bounds.k_max);
    return sol;
}

void check_consistency(const MilpModel& m, const MilpSolution& sol) {
    const auto trace = m.surrogate->forward(sol.x_scaled);
    for (std::size_t l = 0; l < sol.pattern.size(); ++l) {
        const VectorXd& z = trace.z[l];
        const double tol = 1e-6 * std::max(1.0, z.cwiseAbs().maxCoeff());
        for (int j = 0; j < z.size(); ++j) {
            const bool on = sol.pattern[l][j] != 0;
            if ((on && z[j] < -tol) || (!on && z[j] > tol))
                fail(ErrorKind::Backend, "activation pattern disagrees with preactivation at layer " +
                                             std::to_string(l + 1) + " neuron " + std::to_string(j));
        }
    }
}

}  // namespace

MilpSolution solve(const MilpModel& model, SolverBackend& backend, const SolveOptions& options) {
    const auto t0 = Clock::now();
    MilpSolution sol;
    sol.backend = backend.name();
    if (model.box_infeasible()) {
        sol.seconds = seconds_since(t0);
        return sol;
    }
    BackendResult r = backend.solve(model, options);
    sol.status = r.status;
    sol.gap = r.gap;
    if (r.values.empty()) {
        if (sol.status == SolveStatus::Optimal || sol.status == SolveStatus::Feasible) sol.status = SolveStatus::Timeout;
        sol.seconds = seconds_since(t0);
        return sol;
    }
    if (!model.surrogate || !model.trust_region) fail(ErrorKind::Backend, "model lacks its surrogate");

    const auto pattern = pattern_from_values(model, r.values);
    const double reported = model.objective_value(r.values);
    auto po = optimize_pattern(*model.surrogate, *model.trust_region, model.x_lo, model.x_hi, pattern);
    if (po && po->objective_scaled >= reported - 1e-6 * (1.0 + std::abs(reported))) {
        sol = finish(model, std::move(sol), po->x_scaled, po->beta, po->s, pattern);
    } else {
        VectorXd xs = gather(r.values, model.x);
        for (int j = 0; j < xs.size(); ++j) xs[j] = std::clamp(xs[j], model.x_lo[j], model.x_hi[j]);
        sol = finish(model, std::move(sol), xs, gather(r.values, model.beta), gather(r.values, model.s),
                     pattern_of(*model.surrogate, xs));
    }
    check_consistency(model, sol);
    sol.seconds = seconds_since(t0);
    return sol;
}

MilpSolution solve(const MilpModel& model, SolverBackend& backend, double time_limit) {
    SolveOptions o;
    o.time_limit = time_limit;
    return solve(model, backend, o);
}

MilpSolution enumerate_oracle(const SurrogateModel& model, const TrustRegion& tr, KBounds k_bounds, int max_neurons) {
    const int H = model.hidden_neurons();
    if (H > max_neurons)
        fail(ErrorKind::Usage, "enumeration limited to " + std::to_string(max_neurons) + " hidden neurons, got " +
                                   std::to_string(H));
    tr.validate(model.input_dim());
    const auto t0 = Clock::now();

    MilpModel m;
    SurrogateModel bounded = model;
    if (!bounded.has_bounds()) bounded.attach_bounds();
    m = encode(bounded, tr, k_bounds);

    MilpSolution sol;
    sol.backend = "enumeration";
    if (m.box_infeasible()) return sol;

    std::vector<int> widths;
    for (int l = 0; l < model.hidden_layers(); ++l) widths.push_back(model.layers()[l].outputs());

    std::optional<PatternOptimum> best;
    std::vector<std::vector<int>> best_pattern;
    const std::uint64_t total = std::uint64_t{1} << H;
    for (std::uint64_t code = 0; code < total; ++code) {
        std::vector<std::vector<int>> pattern;
        int bit = 0;
        for (int w : widths) {
            pattern.emplace_back();
            for (int j = 0; j < w; ++j, ++bit) pattern.back().push_back(static_cast<int>((code >> bit) & 1U));
        }
        auto po = optimize_pattern(model, tr, m.x_lo, m.x_hi, pattern);
        if (po && (!best || po->objective_scaled > best->objective_scaled)) {
            best = std::move(po);
            best_pattern = std::move(pattern);
        }
    }
    if (!best) {
        sol.seconds = seconds_since(t0);
        return sol;
    }
    sol.status = SolveStatus::Optimal;
    sol.gap = 0.0;
    sol = finish(m, std::move(sol), best->x_scaled, best->beta, best->s, best_pattern);
    sol.seconds = seconds_since(t0);
    return sol;
}

}  // namespace helioaim
