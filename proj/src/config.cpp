#include "helioaim/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "helioaim/error.hpp"

namespace helioaim {

using json = nlohmann::json;

namespace {

// Reads keys out of one JSON object and complains about anything left over.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(ErrorKind::InvalidConfig, where() + " must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        used_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            fail(ErrorKind::InvalidConfig, where(key) + " has the wrong type");
        }
    }

    void get_optional(const char* key, std::optional<double>& out) {
        used_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        if (!it->is_number()) fail(ErrorKind::InvalidConfig, where(key) + " must be a number");
        out = it->get<double>();
    }

    bool has(const char* key) const { return j_.contains(key); }

    Section sub(const char* key) {
        used_.insert(key);
        static const json empty = json::object();
        const auto it = j_.find(key);
        return Section(it == j_.end() ? empty : *it, where(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) fail(ErrorKind::InvalidConfig, "unknown key " + where(it.key()));
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }
    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    Section top(root, "");

    {
        Section plant = top.sub("plant");
        PlantConfig& p = c.plant;
        Section rec = plant.sub("receiver");
        rec.get("height", p.receiver_height);
        rec.get("diameter", p.receiver_diameter);
        rec.get("panel_count", p.panel_count);
        rec.get("panel_width", p.panel_width);
        rec.get("tower_optical_height", p.tower_optical_height);
        rec.finish();

        Section field = plant.sub("field");
        field.get("mirror_area", p.mirror_area);
        field.get("heliostat_count", p.heliostat_count);
        field.get("latitude", p.latitude);
        field.get("k_min", p.k_min);
        field.get("k_max", p.k_max);
        field.get("attenuation", p.attenuation);
        field.get("layout_seed", c.layout_seed);
        field.get("first_ring_factor", p.first_ring_factor);
        field.get("ring_growth", p.ring_growth);
        field.get("radial_spacing", p.radial_spacing);
        field.get("azimuthal_spacing", p.azimuthal_spacing);
        field.get("position_jitter", p.position_jitter);
        field.finish();

        Section err = plant.sub("errors");
        err.get("sigma_sun", p.sigma_sun);
        err.get("sigma_slope", p.sigma_slope);
        err.get("sigma_tracking", p.sigma_tracking);
        err.finish();

        Section mesh = plant.sub("mesh");
        mesh.get("vertical", p.mesh_vertical);
        mesh.get("horizontal", p.mesh_horizontal);
        mesh.finish();
        plant.finish();
    }
    {
        Section sun = top.sub("sun");
        sun.get("day", c.sun.day);
        sun.get("hours", c.sun.hours);
        sun.finish();
    }
    {
        Section score = top.sub("score");
        score.get("lambda", c.score.lambda);
        score.get("central_fraction", c.score.central_fraction);
        score.finish();
    }
    {
        Section opt = top.sub("optimizer");
        RunParams& r = c.optimizer;
        opt.get("iterations", r.iterations);
        opt.get("epsilons", r.epsilons);
        opt.get("seed", r.seed);
        opt.get("stop_tolerance", r.stop_tolerance);
        opt.get("stop_patience", r.stop_patience);
        opt.get("trust_region_rows", r.trust_region_rows);
        opt.get("threads", r.threads);
        opt.get("sweep_step", c.sweep_step);

        Section s = opt.sub("sampler");
        std::string mode = "uniform";
        s.get("mode", mode);
        if (mode == "uniform")
            r.sampler.mode = SamplerConfig::Mode::Uniform;
        else if (mode == "normal")
            r.sampler.mode = SamplerConfig::Mode::Normal;
        else
            fail(ErrorKind::InvalidConfig, "optimizer.sampler.mode must be uniform or normal");
        s.get_optional("a", r.sampler.a);
        s.get_optional("b", r.sampler.b);
        s.get("mu", r.sampler.mu);
        s.get("sigma", r.sampler.sigma);
        s.get("base_size", r.sampler.base_size);
        s.get("size_step", r.sampler.size_step);
        s.finish();

        Section t = opt.sub("training");
        t.get("hidden", r.training.hidden);
        t.get("learning_rate", r.training.learning_rate);
        t.get("batch_size", r.training.batch_size);
        t.get("max_epochs", r.training.max_epochs);
        t.get("patience", r.training.patience);
        t.get("validation_fraction", r.training.validation_fraction);
        t.finish();
        opt.finish();
    }
    {
        Section s = top.sub("solver");
        s.get("backend", c.solver.backend);
        s.get("path", c.solver.path);
        s.get("time_limit", c.solver.time_limit);
        s.get("gap", c.solver.gap);
        s.finish();
    }
    {
        Section out = top.sub("output");
        out.get("directory", c.output_directory);
        out.finish();
    }
    top.finish();

    c.optimizer.k = {c.plant.k_min, c.plant.k_max};
    c.optimizer.solver.time_limit = c.solver.time_limit;
    c.optimizer.solver.relative_gap = c.solver.gap;
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::InvalidConfig, "cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void RunConfig::validate() const {
    plant.validate();
    if (sun.hours.empty()) fail(ErrorKind::InvalidConfig, "sun.hours must not be empty");
    for (double h : sun.hours)
        if (!(h >= 0.0 && h < 24.0)) fail(ErrorKind::InvalidConfig, "sun.hours entries must lie in [0, 24)");
    if (sun.day < 1 || sun.day > 366) fail(ErrorKind::InvalidConfig, "sun.day must lie in [1, 366]");
    if (!(score.lambda >= 0.0)) fail(ErrorKind::InvalidConfig, "score.lambda must be >= 0");
    if (!(score.central_fraction > 0.0 && score.central_fraction <= 1.0))
        fail(ErrorKind::InvalidConfig, "score.central_fraction must lie in (0, 1]");
    if (!(sweep_step > 0.0)) fail(ErrorKind::InvalidConfig, "optimizer.sweep_step must be positive");
    if (solver.backend != "external" && solver.backend != "branch-and-bound" && solver.backend != "enumeration")
        fail(ErrorKind::InvalidConfig, "solver.backend must be external, branch-and-bound or enumeration");
    if (!(solver.time_limit > 0.0)) fail(ErrorKind::InvalidConfig, "solver.time_limit must be positive");
    if (!(solver.gap >= 0.0)) fail(ErrorKind::InvalidConfig, "solver.gap must be >= 0");
    if (optimizer.training.hidden.empty()) fail(ErrorKind::InvalidConfig, "optimizer.training.hidden must not be empty");
    for (int w : optimizer.training.hidden)
        if (w < 1) fail(ErrorKind::InvalidConfig, "hidden layer widths must be >= 1");
    if (optimizer.training.batch_size < 1 || optimizer.training.max_epochs < 1)
        fail(ErrorKind::InvalidConfig, "training batch size and epochs must be >= 1");
    if (!(optimizer.training.validation_fraction > 0.0 && optimizer.training.validation_fraction < 1.0))
        fail(ErrorKind::InvalidConfig, "training validation_fraction must lie in (0, 1)");
    optimizer.validate();
}

std::string RunConfig::to_json() const {
    const PlantConfig& p = plant;
    const RunParams& r = optimizer;
    json sampler = {{"mode", r.sampler.mode == SamplerConfig::Mode::Uniform ? "uniform" : "normal"},
                    {"a", r.sampler.a ? json(*r.sampler.a) : json(nullptr)},
                    {"b", r.sampler.b ? json(*r.sampler.b) : json(nullptr)},
                    {"mu", r.sampler.mu},
                    {"sigma", r.sampler.sigma},
                    {"base_size", r.sampler.base_size},
                    {"size_step", r.sampler.size_step}};
    json j = {
        {"plant",
         {{"receiver",
           {{"height", p.receiver_height},
            {"diameter", p.receiver_diameter},
            {"panel_count", p.panel_count},
            {"panel_width", p.panel_width},
            {"tower_optical_height", p.tower_optical_height}}},
          {"field",
           {{"mirror_area", p.mirror_area},
            {"heliostat_count", p.heliostat_count},
            {"latitude", p.latitude},
            {"k_min", p.k_min},
            {"k_max", p.k_max},
            {"attenuation", p.attenuation},
            {"layout_seed", layout_seed},
            {"first_ring_factor", p.first_ring_factor},
            {"ring_growth", p.ring_growth},
            {"radial_spacing", p.radial_spacing},
            {"azimuthal_spacing", p.azimuthal_spacing},
            {"position_jitter", p.position_jitter}}},
          {"errors", {{"sigma_sun", p.sigma_sun}, {"sigma_slope", p.sigma_slope}, {"sigma_tracking", p.sigma_tracking}}},
          {"mesh", {{"vertical", p.mesh_vertical}, {"horizontal", p.mesh_horizontal}}}}},
        {"sun", {{"day", sun.day}, {"hours", sun.hours}}},
        {"score", {{"lambda", score.lambda}, {"central_fraction", score.central_fraction}}},
        {"optimizer",
         {{"iterations", r.iterations},
          {"epsilons", r.epsilons},
          {"seed", r.seed},
          {"stop_tolerance", r.stop_tolerance},
          {"stop_patience", r.stop_patience},
          {"trust_region_rows", r.trust_region_rows},
          {"threads", r.threads},
          {"sweep_step", sweep_step},
          {"sampler", sampler},
          {"training",
           {{"hidden", r.training.hidden},
            {"learning_rate", r.training.learning_rate},
            {"batch_size", r.training.batch_size},
            {"max_epochs", r.training.max_epochs},
            {"patience", r.training.patience},
            {"validation_fraction", r.training.validation_fraction}}}}},
        {"solver",
         {{"backend", solver.backend}, {"path", solver.path}, {"time_limit", solver.time_limit}, {"gap", solver.gap}}},
        {"output", {{"directory", output_directory}}}};
    return j.dump(2);
}

}  // namespace helioaim
