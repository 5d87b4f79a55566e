#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "helioaim/optimizer.hpp"
#include "helioaim/plant.hpp"

namespace helioaim {

struct SunConfig {
    int day = kEquinoxDay;
    std::vector<double> hours{12.0};
};

struct ScoreConfig {
    double lambda = 5000.0;
    double central_fraction = kDefaultCentralFraction;
};

struct SolverConfig {
    std::string backend = "external";  // external | branch-and-bound | enumeration
    std::string path = "cbc";
    double time_limit = 300.0;
    double gap = 1e-4;
};

/// Everything a CLI run needs. Parsed from JSON with nested sections
/// plant{receiver, field, errors, mesh}, sun, score, optimizer, solver,
/// output; unknown keys are rejected.
struct RunConfig {
    PlantConfig plant;
    std::uint64_t layout_seed = 0;
    SunConfig sun;
    ScoreConfig score;
    RunParams optimizer;
    double sweep_step = 0.1;
    SolverConfig solver;
    std::string output_directory = "out";

    /// Throws Error(InvalidConfig) with the offending key path.
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::string& path);
    std::string to_json() const;

    void validate() const;
};

}  // namespace helioaim
