#include "helioaim/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "helioaim/optimizer.hpp"
#include "helioaim/scoring.hpp"

namespace helioaim {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidConfig:
        case ErrorKind::Shape:
        case ErrorKind::InvalidMesh:
        case ErrorKind::InvalidTrustRegion:
        case ErrorKind::Encoding:
        case ErrorKind::Usage:
        case ErrorKind::Io: return kExitConfig;
        case ErrorKind::Domain: return kExitDomain;
        case ErrorKind::Backend: return kExitSolver;
        case ErrorKind::TrainingDiverged:
        case ErrorKind::Run: return kExitRuntime;
    }
    return kExitRuntime;
}

std::unique_ptr<SolverBackend> make_backend(const SolverConfig& config) {
    if (config.backend == "branch-and-bound") return std::make_unique<BranchAndBoundBackend>();
    if (config.backend == "enumeration") return std::make_unique<EnumerationBackend>();
    std::string path = config.path;
    if (const char* env = std::getenv("HELIO_SOLVER_PATH"); env && *env) path = env;
    const auto found = ExternalLpBackend::locate(path);
    if (!found) fail(ErrorKind::Backend, "solver executable not found: " + path);
    return std::make_unique<ExternalLpBackend>(*found);
}

double percent_delta(double a, double b) {
    if (b == 0.0) return a == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    return std::round((a - b) / std::abs(b) * 1000.0) / 10.0;
}

namespace {

json metrics_json(const MetricsReport& m) {
    return {{"collected_energy", m.collected_energy},
            {"distribution_difference", m.distribution_difference},
            {"spl", m.spl},
            {"max_suns", m.max_suns}};
}

MetricsReport metrics_from_json(const json& j) {
    MetricsReport m;
    try {
        m.collected_energy = j.at("collected_energy").get<double>();
        m.distribution_difference = j.at("distribution_difference").get<double>();
        m.spl = j.at("spl").get<double>();
        m.max_suns = j.at("max_suns").get<double>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Io, std::string("malformed metrics file: ") + e.what());
    }
    return m;
}

json score_json(const ScoreBreakdown& s) {
    return {{"lambda", s.lambda},
            {"score", s.score},
            {"energy", s.energy},
            {"distribution", s.distribution},
            {"panel_score", s.panel_score},
            {"weights", s.weights}};
}

json flux_json(const FluxMap& f) {
    json panels = json::array();
    for (int p = 0; p < f.panels; ++p) {
        json rows = json::array();
        for (int v = 0; v < f.vertical; ++v) {
            json row = json::array();
            for (int h = 0; h < f.horizontal; ++h) row.push_back(f.at(p, v, h));
            rows.push_back(std::move(row));
        }
        panels.push_back(std::move(rows));
    }
    return {{"panels", f.panels}, {"vertical", f.vertical}, {"horizontal", f.horizontal},
            {"dv", f.dv},         {"dh", f.dh},             {"C", std::move(panels)}};
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
    ensure_dir(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
}

template <class Writer>
void write_with(const fs::path& path, Writer&& w) {
    std::ostringstream s;
    w(s);
    write_file(path, s.str());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Context {
    RunConfig config;
    Field field;
    SunState sun;
    double hour = 12.0;
};

Context load_context(const std::string& config_path, std::optional<double> hour) {
    Context c;
    c.config = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    if (config_path.empty()) {
        c.config.optimizer.k = {c.config.plant.k_min, c.config.plant.k_max};
        c.config.validate();
    }
    c.hour = hour.value_or(c.config.sun.hours.front());
    if (!(c.hour >= 0.0 && c.hour < 24.0)) fail(ErrorKind::InvalidConfig, "--hour must lie in [0, 24)");
    c.field = generate_field(c.config.plant, c.config.layout_seed);
    c.sun = solar_position(c.config.plant.latitude, c.config.sun.day, c.hour);
    if (!c.sun.above_horizon())
        fail(ErrorKind::Domain, "sun is below the horizon at solar hour " + std::to_string(c.hour));
    return c;
}

AimVector resolve_aims(const Context& c, const std::string& source, std::ostream& err) {
    const int n0 = c.field.group_count();
    if (source == "equatorial") return equatorial_baseline(n0, c.config.plant.k_max);
    if (source == "sweep") {
        std::vector<std::string> warnings;
        AimVector a = sweep_baseline(c.field, c.sun, c.config.plant, c.config.sweep_step, &warnings);
        for (const auto& w : warnings) err << "warning: " << w << '\n';
        return a;
    }
    std::ifstream in(source);
    if (!in) fail(ErrorKind::Io, "cannot read aim file " + source);
    AimVector a = AimVector::read_csv(in);
    if (static_cast<int>(a.size()) != n0)
        fail(ErrorKind::Shape, "aim file has " + std::to_string(a.size()) + " groups, field has " + std::to_string(n0));
    if (!a.within(c.config.plant.k_min, c.config.plant.k_max))
        fail(ErrorKind::InvalidConfig, "aim file values must lie within [k_min, k_max]");
    return a;
}

// aims.csv, metrics.json, score.json and optionally the flux files for one
// aiming strategy, all from the same flux map.
MetricsReport write_strategy(const Context& c, const AimVector& aims, const fs::path& dir, bool flux_files) {
    const QualityEvaluator ev(c.field, c.sun, c.config.plant, c.config.score.lambda, c.config.score.central_fraction);
    const auto e = ev.evaluate(aims.k);
    ensure_dir(dir);
    write_with(dir / "aims.csv", [&](std::ostream& o) { aims.write_csv(o); });
    write_file(dir / "metrics.json", metrics_json(e.metrics).dump(2) + "\n");
    write_file(dir / "score.json", score_json(e.score).dump(2) + "\n");
    if (flux_files) {
        write_with(dir / "flux.csv", [&](std::ostream& o) { e.flux.write_csv(o); });
        write_file(dir / "flux.json", flux_json(e.flux).dump() + "\n");
        const fs::path prof = dir / "profiles";
        ensure_dir(prof);
        for (int p = 0; p < e.flux.panels; ++p) {
            const auto cv = vertical_profile(e.flux, p);
            std::ostringstream name;
            name << "panel_" << std::setw(2) << std::setfill('0') << p << ".csv";
            write_with(prof / name.str(), [&](std::ostream& o) {
                o << "v,z,C\n" << std::setprecision(12);
                for (int v = 0; v < e.flux.vertical; ++v)
                    o << v << ',' << (-c.config.plant.receiver_height / 2 + v * e.flux.dv) << ',' << cv[v] << '\n';
            });
        }
    }
    return e.metrics;
}

void print_metrics(std::ostream& out, const std::string& label, const MetricsReport& m) {
    out << std::fixed << std::setprecision(4) << label << ": collected_energy=" << m.collected_energy
        << " distribution_difference=" << m.distribution_difference << " spl=" << m.spl << " max_suns=" << m.max_suns
        << '\n';
    out.unsetf(std::ios::floatfield);
}

int cmd_simulate(const Context& c, const std::string& aim, const fs::path& out_dir, std::ostream& out,
                 std::ostream& err) {
    const AimVector aims = resolve_aims(c, aim, err);
    ensure_dir(out_dir);
    write_with(out_dir / "field.csv", [&](std::ostream& o) { c.field.write_csv(o); });
    print_metrics(out, "simulate", write_strategy(c, aims, out_dir, true));
    return kExitOk;
}

int cmd_baseline(const Context& c, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
    ensure_dir(out_dir);
    print_metrics(out, "equatorial", write_strategy(c, resolve_aims(c, "equatorial", err), out_dir / "equatorial", false));
    print_metrics(out, "sweep", write_strategy(c, resolve_aims(c, "sweep", err), out_dir / "sweep", false));
    return kExitOk;
}

int cmd_datagen(const Context& c, int iteration, const std::string& aim, const fs::path& out_dir, std::ostream& out,
                std::ostream& err) {
    const RunParams& r = c.config.optimizer;
    std::optional<AimVector> incumbent;
    if (!aim.empty()) incumbent = resolve_aims(c, aim, err);
    const QualityEvaluator ev(c.field, c.sun, c.config.plant, c.config.score.lambda, c.config.score.central_fraction);
    const Dataset d = generate_data(iteration, r.sampler.size(iteration), incumbent ? &*incumbent : nullptr, r.sampler,
                                    ev, r.k, r.seed, r.threads);
    write_with(out_dir / "dataset.csv", [&](std::ostream& o) { d.write_csv(o); });
    out << "datagen: " << d.size() << " samples x " << d.dimension() << " groups\n";
    return kExitOk;
}

int cmd_train(const Context& c, const std::string& data_path, const fs::path& out_dir, std::ostream& out) {
    std::ifstream in(data_path);
    if (!in) fail(ErrorKind::Io, "cannot read dataset " + data_path);
    const Dataset d = Dataset::read_csv(in, c.config.plant.k_min, c.config.plant.k_max);
    TrainParams tp = c.config.optimizer.training;
    tp.seed = c.config.optimizer.seed;
    TrainReport rep;
    SurrogateModel m = train(d, tp, &rep);
    m.attach_bounds();
    write_file(out_dir / "model.json", m.to_json() + "\n");
    const json j = {{"epochs", rep.epochs},
                    {"best_epoch", rep.best_epoch},
                    {"initial_validation_rmse", rep.initial_validation_rmse},
                    {"validation_rmse", rep.validation_rmse},
                    {"train_rmse", rep.train_rmse}};
    write_file(out_dir / "training.json", j.dump(2) + "\n");
    out << "train: validation_rmse=" << rep.validation_rmse << " epochs=" << rep.epochs << '\n';
    return kExitOk;
}

int cmd_optimize(const Context& c, const fs::path& out_dir, std::ostream& out) {
    auto backend = make_backend(c.config.solver);
    const QualityEvaluator ev(c.field, c.sun, c.config.plant, c.config.score.lambda, c.config.score.central_fraction);
    ensure_dir(out_dir);
    std::ofstream log(out_dir / "run_log.jsonl", std::ios::binary | std::ios::trunc);
    if (!log) fail(ErrorKind::Io, "cannot write run log in " + out_dir.string());
    const RunResult r = run(ev, c.config.optimizer, *backend, [&](const IterationRecord& rec) {
        log << rec.to_json() << '\n';
        log.flush();
        out << "iteration " << rec.t << ": samples=" << rec.dataset_size << " incumbent_score=" << rec.incumbent_score
            << (rec.failed ? " (failed)" : "") << " seconds=" << rec.seconds << '\n';
    });
    print_metrics(out, "optimize", write_strategy(c, r.best, out_dir, false));
    return kExitOk;
}

int cmd_compare(const std::string& a_dir, const std::string& b_dir, const fs::path& out_dir, std::ostream& out) {
    const auto load = [](const std::string& dir) {
        const fs::path p = fs::path(dir) / "metrics.json";
        if (!fs::exists(p)) fail(ErrorKind::Io, "missing metrics file " + p.string());
        json j;
        try {
            j = json::parse(read_file(p));
        } catch (const json::parse_error& e) {
            fail(ErrorKind::Io, "malformed metrics file " + p.string() + ": " + e.what());
        }
        return metrics_from_json(j);
    };
    const MetricsReport a = load(a_dir);
    const MetricsReport b = load(b_dir);
    const std::vector<std::pair<const char*, std::pair<double, double>>> rows = {
        {"collected_energy", {a.collected_energy, b.collected_energy}},
        {"distribution_difference", {a.distribution_difference, b.distribution_difference}},
        {"spl", {a.spl, b.spl}},
        {"max_suns", {a.max_suns, b.max_suns}}};

    json j = {{"a", a_dir}, {"b", b_dir}, {"metrics", json::array()}};
    std::ostringstream csv;
    csv << "metric,a,b,delta_percent\n" << std::setprecision(10);
    for (const auto& [name, v] : rows) {
        const double d = percent_delta(v.first, v.second);
        j["metrics"].push_back({{"metric", name},
                                {"a", v.first},
                                {"b", v.second},
                                {"delta_percent", std::isnan(d) ? json(nullptr) : json(d)}});
        csv << name << ',' << v.first << ',' << v.second << ',';
        if (!std::isnan(d)) csv << std::fixed << std::setprecision(1) << d << std::defaultfloat << std::setprecision(10);
        csv << '\n';
        out << name << ": " << v.first;
        if (!std::isnan(d)) out << " (" << std::showpos << std::fixed << std::setprecision(1) << d << "%)" << std::noshowpos;
        out << std::defaultfloat << '\n';
    }
    ensure_dir(out_dir);
    write_file(out_dir / "comparison.csv", csv.str());
    write_file(out_dir / "comparison.json", j.dump(2) + "\n");
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Heliostat aiming optimisation with a MILP-embedded neural surrogate", "helioaim"};
    app.require_subcommand(1);

    std::string config_path, out_dir, aim, incumbent_path, data_path, run_a, run_b;
    std::optional<double> hour;
    std::optional<std::uint64_t> seed;
    int iteration = 1;

    auto common = [&](CLI::App* cmd, bool with_hour) {
        cmd->add_option("--config", config_path, "run configuration (JSON)");
        cmd->add_option("--out", out_dir, "output directory (default: output.directory)");
        cmd->add_option("--seed", seed, "override optimizer.seed");
        if (with_hour) cmd->add_option("--hour", hour, "solar hour, default the first of sun.hours");
    };
    auto* simulate = app.add_subcommand("simulate", "flux map, profiles and metrics of one aiming strategy");
    common(simulate, true);
    simulate->add_option("--aim", aim, "equatorial | sweep | aim CSV")->default_val("equatorial");
    auto* baseline = app.add_subcommand("baseline", "equatorial and sweep baselines");
    common(baseline, true);
    auto* datagen = app.add_subcommand("datagen", "sample and score aiming vectors");
    common(datagen, true);
    datagen->add_option("--iteration", iteration, "sampling iteration (>1 samples around --aim)")->check(CLI::PositiveNumber);
    datagen->add_option("--aim", incumbent_path, "incumbent for refinement sampling");
    auto* trainc = app.add_subcommand("train", "train a surrogate on a dataset CSV");
    common(trainc, false);
    trainc->add_option("--data", data_path, "dataset CSV (default: <out>/dataset.csv)");
    auto* optimize = app.add_subcommand("optimize", "iterative surrogate optimisation");
    common(optimize, true);
    auto* compare = app.add_subcommand("compare", "compare the metrics of two runs");
    compare->add_option("run_a", run_a, "run directory A")->required();
    compare->add_option("run_b", run_b, "run directory B (reference)")->required();
    compare->add_option("--out", out_dir, "output directory")->default_val(".");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(std::move(rev));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (compare->parsed()) return cmd_compare(run_a, run_b, out_dir, out);
        const bool needs_hour = !trainc->parsed();
        Context c = needs_hour ? load_context(config_path, hour) : Context{};
        if (!needs_hour) {
            c.config = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
            c.config.optimizer.k = {c.config.plant.k_min, c.config.plant.k_max};
        }
        if (seed) c.config.optimizer.seed = *seed;
        const fs::path dir = out_dir.empty() ? fs::path(c.config.output_directory) : fs::path(out_dir);
        if (simulate->parsed()) return cmd_simulate(c, aim, dir, out, err);
        if (baseline->parsed()) return cmd_baseline(c, dir, out, err);
        if (datagen->parsed()) return cmd_datagen(c, iteration, incumbent_path, dir, out, err);
        if (trainc->parsed()) return cmd_train(c, data_path.empty() ? (dir / "dataset.csv").string() : data_path, dir, out);
        if (optimize->parsed()) return cmd_optimize(c, dir, out);
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}

}  // namespace helioaim
