#include "helioaim/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "helioaim/error.hpp"
#include "helioaim/rng.hpp"

namespace helioaim {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int worker_count(int requested, int jobs) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    return std::clamp(n, 1, std::max(1, jobs));
}

// Runs body(i) for i in [0, n) on a few threads; each index is written by
// exactly one worker so results do not depend on scheduling.
template <class F>
void parallel_for(int n, int threads, F&& body) {
    const int workers = worker_count(threads, n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            (void)w;
            for (int i = next++; i < n && !failed; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

json metrics_json(const MetricsReport& m) {
    return {{"collected_energy", m.collected_energy},
            {"distribution_difference", m.distribution_difference},
            {"spl", m.spl},
            {"max_suns", m.max_suns}};
}

}  // namespace

void SamplerConfig::validate(KBounds k) const {
    const double lo = a.value_or(k.k_min);
    const double hi = b.value_or(k.k_max);
    if (!(lo < hi) || lo < k.k_min || hi > k.k_max)
        fail(ErrorKind::InvalidConfig, "sampler limits must satisfy k_min <= a < b <= k_max");
    if (!(sigma > 0.0)) fail(ErrorKind::InvalidConfig, "sampler sigma must be positive");
    if (base_size < 1 || size_step < 0) fail(ErrorKind::InvalidConfig, "sampler sizes must be positive");
}

std::vector<double> score_all(const QualityEvaluator& evaluator, const MatrixXd& X, int threads) {
    std::vector<double> y(X.rows());
    parallel_for(static_cast<int>(X.rows()), threads, [&](int i) {
        const VectorXd row = X.row(i).transpose();
        y[i] = evaluator.score(std::span<const double>(row.data(), row.size()));
    });
    return y;
}

Dataset generate_data(int t, int n, const AimVector* incumbent, const SamplerConfig& cfg,
                      const QualityEvaluator& evaluator, KBounds k, std::uint64_t seed, int threads) {
    if (t < 1) fail(ErrorKind::Usage, "iteration index starts at 1");
    if (t > 1 && !incumbent) fail(ErrorKind::Usage, "refinement sampling (t > 1) needs an incumbent");
    if (n < 1) fail(ErrorKind::Usage, "sample count must be positive");
    const int dim = evaluator.dimension();
    if (incumbent && t > 1 && static_cast<int>(incumbent->size()) != dim)
        fail(ErrorKind::Shape, "incumbent length does not match the group count");

    Dataset data;
    data.k_min = k.k_min;
    data.k_max = k.k_max;
    data.X.resize(n, dim);
    const double lo = cfg.a.value_or(k.k_min);
    const double hi = cfg.b.value_or(k.k_max);
    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
        for (int j = 0; j < dim; ++j) {
            double v;
            if (t > 1)
                v = rng.normal(incumbent->k[j], cfg.sigma);
            else if (cfg.mode == SamplerConfig::Mode::Normal)
                v = rng.normal(cfg.mu, cfg.sigma);
            else
                v = rng.uniform(lo, hi);
            data.X(i, j) = std::clamp(v, k.k_min, k.k_max);
        }
    }
    const auto y = score_all(evaluator, data.X, threads);
    data.y = Eigen::Map<const VectorXd>(y.data(), n);
    return data;
}

bool is_bimodal(const std::vector<double>& profile, double dip_fraction) {
    const int n = static_cast<int>(profile.size());
    if (n < 3) return false;
    const double peak = *std::max_element(profile.begin(), profile.end());
    if (!(peak > 0.0)) return false;
    std::vector<double> left(n), right(n);
    left[0] = profile[0];
    for (int i = 1; i < n; ++i) left[i] = std::max(left[i - 1], profile[i]);
    right[n - 1] = profile[n - 1];
    for (int i = n - 2; i >= 0; --i) right[i] = std::max(right[i + 1], profile[i]);
    for (int m = 1; m + 1 < n; ++m) {
        const double dip = std::min(left[m - 1], right[m + 1]) - profile[m];
        if (dip > dip_fraction * peak) return true;
    }
    return false;
}

AimVector sweep_baseline(const Field& field, const SunState& sun, const PlantConfig& config, double step,
                         std::vector<std::string>* warnings) {
    if (!(step > 0.0)) fail(ErrorKind::Usage, "sweep step must be positive");
    const FluxModel model(field, sun, config);
    AimVector out;
    out.k.assign(field.group_count(), config.k_max);

    for (int p = 0; p < field.panel_count(); ++p) {
        std::vector<int> members;
        for (const auto& h : field.heliostats())
            if (h.sector == p) members.push_back(h.id);
        if (members.empty()) continue;

        auto profile_at = [&](double k) {
            FluxMap map = make_receiver_mesh(config);
            for (int id : members) model.accumulate(id, k, map);
            return vertical_profile(map, p);
        };

        double chosen = config.k_min;
        bool found = false;
        const int steps = static_cast<int>(std::floor((config.k_max - config.k_min) / step + 1e-9));
        for (int s = 0; s <= steps; ++s) {
            const double k = config.k_max - s * step;
            if (is_bimodal(profile_at(k))) {
                chosen = s == 0 ? config.k_max : config.k_max - (s - 1) * step;
                found = true;
                break;
            }
        }
        if (!found && warnings)
            warnings->push_back("sector " + std::to_string(p) + " never turned bimodal; using k_min");
        for (const auto& g : field.groups())
            if (g.sector == p) out.k[&g - field.groups().data()] = chosen;
    }
    return out;
}

AimVector equatorial_baseline(int n0, double k_max) {
    AimVector v;
    v.k.assign(std::max(0, n0), k_max);
    return v;
}

std::string IterationRecord::to_json() const {
    json cands = json::array();
    for (const auto& c : candidates) {
        json j = {{"epsilon", c.epsilon},
                  {"status", helioaim::to_string(c.status)},
                  {"predicted", c.predicted},
                  {"true_score", c.true_score},
                  {"x", c.x.k},
                  {"metrics", metrics_json(c.metrics)},
                  {"seconds", c.seconds}};
        if (!c.error.empty()) j["error"] = c.error;
        cands.push_back(std::move(j));
    }
    json j = {{"iteration", t},
              {"dataset_size", dataset_size},
              {"training",
               {{"epochs", training.epochs},
                {"best_epoch", training.best_epoch},
                {"initial_validation_rmse", training.initial_validation_rmse},
                {"validation_rmse", training.validation_rmse},
                {"train_rmse", training.train_rmse}}},
              {"candidates", std::move(cands)},
              {"failed", failed},
              {"incumbent", incumbent.k},
              {"incumbent_score", incumbent_score},
              {"metrics", metrics_json(metrics)},
              {"seconds", seconds}};
    return j.dump();
}

void RunParams::validate() const {
    if (iterations < 1) fail(ErrorKind::InvalidConfig, "optimizer iterations must be at least 1");
    if (epsilons.empty()) fail(ErrorKind::InvalidConfig, "epsilon list must not be empty");
    for (double e : epsilons)
        if (std::isnan(e) || e < 0.0) fail(ErrorKind::InvalidTrustRegion, "epsilon values must be non-negative");
    if (!(k.k_min < k.k_max)) fail(ErrorKind::InvalidConfig, "k_min must be below k_max");
    sampler.validate(k);
}

RunResult run(const QualityEvaluator& evaluator, const RunParams& params, SolverBackend& backend,
              const std::function<void(const IterationRecord&)>& on_iteration) {
    params.validate();
    std::vector<double> eps = params.epsilons;
    std::stable_sort(eps.begin(), eps.end());

    RunResult result;
    bool have_incumbent = false;
    int stalled = 0;

    for (int t = 1; t <= params.iterations; ++t) {
        const auto t0 = Clock::now();
        IterationRecord rec;
        rec.t = t;
        const std::uint64_t iter_seed = Rng::derive(params.seed, static_cast<std::uint64_t>(t));
        const int n = params.sampler.size(t);
        // without an incumbent (first iteration failed) keep sampling the full box
        const Dataset data = generate_data(have_incumbent ? t : 1, n, have_incumbent ? &result.best : nullptr, params.sampler, evaluator,
                                           params.k, iter_seed, params.threads);
        rec.dataset_size = data.size();

        TrainParams tp = params.training;
        tp.seed = Rng::derive(iter_seed, 1);
        SurrogateModel model = train(data, tp, &rec.training);
        model.attach_bounds();

        std::optional<std::size_t> best_idx;
        for (double e : eps) {
            Candidate c;
            c.epsilon = e;
            const auto c0 = Clock::now();
            try {
                const TrustRegion tr = TrustRegion::from_dataset(data, model.input_scaler(), e,
                                                                 params.trust_region_rows, Rng::derive(iter_seed, 2));
                const MilpModel m = encode(model, tr, params.k);
                const MilpSolution sol = solve(m, backend, params.solver);
                c.status = sol.status;
                if (sol.has_solution()) {
                    c.x = sol.x;
                    c.predicted = sol.objective;
                    const auto ev = evaluator.evaluate(c.x.k);
                    c.true_score = ev.score.score;
                    c.metrics = ev.metrics;
                }
            } catch (const Error& err) {
                if (err.kind() != ErrorKind::Backend) throw;
                c.error = err.what();
            }
            c.seconds = seconds_since(c0);
            const bool ok = c.error.empty() && (c.status == SolveStatus::Optimal || c.status == SolveStatus::Feasible);
            // ties go to the smaller epsilon, which comes first
            if (ok && (!best_idx || c.true_score > rec.candidates[*best_idx].true_score))
                best_idx = rec.candidates.size();
            rec.candidates.push_back(std::move(c));
        }

        rec.failed = !best_idx.has_value();
        const double previous = result.best_score;
        if (best_idx) {
            const Candidate& c = rec.candidates[*best_idx];
            if (!have_incumbent || c.true_score > result.best_score) {
                result.best = c.x;
                result.best_score = c.true_score;
                result.metrics = c.metrics;
            }
        }
        rec.incumbent = result.best;
        rec.incumbent_score = result.best_score;
        rec.metrics = result.metrics;
        rec.seconds = seconds_since(t0);
        result.history.push_back(rec);
        if (on_iteration) on_iteration(result.history.back());

        if (!rec.failed && have_incumbent && params.stop_patience > 0) {
            const double gain = (result.best_score - previous) / std::max(1e-12, std::abs(previous));
            stalled = gain < params.stop_tolerance ? stalled + 1 : 0;
            if (stalled >= params.stop_patience) break;
        }
        if (!rec.failed) have_incumbent = true;
    }
    if (!have_incumbent) fail(ErrorKind::Run, "every optimizer iteration failed");
    return result;
}

}  // namespace helioaim
