#pragma once

#include "kreproj/config.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace kreproj {

/// Library version recorded in run manifests.
std::string version();

struct FittedModel {
    DynamicalSystem system;
    SnapshotSet snapshots;
    /// Snapshots used to estimate Sigma (the training set unless sigma_data = heldout).
    SnapshotSet sigma_snapshots;
    KoopmanApproximation model;
};

/// Samples, flows and fits according to `config` with the given dictionary.
/// Throws InvalidArgument when m < N unless config.force is set.
FittedModel fit_from_config(const ExperimentConfig& config, const Dictionary& dictionary);

/// Builds the named projector ("none", "coordinate", "geometric", "closest_point").
Surrogate surrogate_from_config(const ExperimentConfig& config, const FittedModel& fitted,
                                const std::string& projector);

/// Frobenius distance of K from exp(dt A) for example1 with dictionary {x1, x2, x1^2}.
/// Throws InvalidArgument for any other setup.
double example1_operator_error(const KoopmanApproximation& model, double lambda);

/// Writes K.csv (+ .meta), snapshots.csv, and metric_<name>.csv for each closest-point
/// projector in the config. Prints residual_rms and condition_number.
int cmd_fit(const ExperimentConfig& config, std::ostream& out, bool verify = false);

inline const std::vector<std::string>& figure_names()
{
    static const std::vector<std::string> names{"fig3", "fig45", "fig6", "fig7"};
    return names;
}

/// Experiment defaults for a reproduced figure (system, dictionary, horizons).
ExperimentConfig figure_config(const std::string& figure);

/// Writes the CSVs for one figure into config.output_dir; returns the written paths.
std::vector<std::filesystem::path> reproduce(const std::string& figure,
                                             const ExperimentConfig& config, std::ostream& out);
int cmd_reproduce(const std::string& figure, const ExperimentConfig& config, std::ostream& out);

enum class CheckStatus { pass, fail, skip };

struct CheckLine {
    std::string name;
    CheckStatus status = CheckStatus::pass;
    std::string detail;
};

struct CheckReport {
    std::vector<CheckLine> lines;
    std::vector<std::string> info;

    bool passed() const;
};

/// Normal equations, coordinate/closest-point agreement, projection bound, weighted
/// stationarity, metric condition, and Jacobian finite differences.
CheckReport run_checks(const ExperimentConfig& config);
int cmd_check(const ExperimentConfig& config, std::ostream& out);

/// manifest.txt: command, version, config hash, seed, library versions, outputs.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& config,
                    const std::vector<std::filesystem::path>& outputs);

/// Hash of the configuration fields that affect results (output dir and threads excluded).
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace kreproj
