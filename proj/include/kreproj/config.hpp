#pragma once

#include "kreproj/evaluation.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace kreproj {

struct DictionarySpec {
    std::string type = "monomial";
    int degree = 3;
    std::vector<std::string> exclude;  ///< monomial labels, e.g. "x" or "x*z"
};

struct EvaluationSpec {
    /// Grid nodes per axis; a single entry applies to every axis.
    std::vector<Index> grid{50};
    std::vector<double> sweep_dts{0.005, 0.01, 0.02, 0.05, 0.1, 0.2};
    Index n_eval = 500;
    /// Exemplary initial condition; empty means the domain centre.
    std::vector<double> x0;
    Index rollout_steps = 2000;
    Index x0_grid = 10;
    Index mean_steps = 1000;
    Index series_steps = 500;
    /// Random points used by the check suite.
    Index test_points = 500;
};

/// One experiment as read from an INI file. See README for the key reference.
struct ExperimentConfig {
    std::string system = "pendulum";
    std::map<std::string, double> parameters;
    DictionarySpec dictionary;

    double dt = 0.01;
    Index m = 10'000;
    std::uint64_t seed = 42;
    double ridge = 0;
    bool scale_observables = true;
    /// "training" reuses the fit snapshots for Sigma; "heldout" draws a fresh set.
    std::string sigma_data = "training";

    /// Any of none, coordinate, geometric, closest_point.
    std::vector<std::string> projectors{"coordinate", "geometric"};
    /// Metric CSV for the closest_point projector.
    std::string metric_file;
    ClosestPointConfig solver;
    GeometricMetricOptions geometric;
    double domain_margin = 0.5;

    EvaluationSpec evaluation;

    std::string output_dir = "out";
    int threads = 1;
    bool strict = false;
    bool force = false;

    /// Resolves names and checks ranges; throws InvalidArgument.
    void validate() const;
};

/// Overlays the keys present in INI `text` on `base`. Unknown sections or keys
/// throw InvalidArgument.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Canonical INI text of every field; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const ExperimentConfig& config);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

DynamicalSystem make_system(const ExperimentConfig& config);
Dictionary make_dictionary(const ExperimentConfig& config, Index state_dim,
                           const std::vector<std::string>& state_names);
FitOptions fit_options(const ExperimentConfig& config);
SurrogateOptions surrogate_options(const ExperimentConfig& config);
SnapshotOptions snapshot_options(const ExperimentConfig& config);

}  // namespace kreproj
