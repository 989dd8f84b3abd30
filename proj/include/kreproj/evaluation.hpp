#pragma once

#include "kreproj/surrogate.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kreproj {

struct OneStepError {
    double value = 0;  ///< +inf when the step failed
    bool converged = true;
    bool failed = false;
};

/// ||F(x) - x(dt; x)|| with the reference flow integrated at `reference_tol`.
OneStepError one_step_error(const Surrogate& surrogate, const DynamicalSystem& system,
                            const Vector& x, double reference_tol = 1e-12);

/// Scalar field on a tensor grid; node (i_1..i_d) is stored at a row-major flat
/// index (last axis fastest).
struct ErrorGrid {
    std::vector<Vector> axes;
    Vector values;
    std::vector<char> converged;
    std::string metric_name;
    std::string surrogate_descriptor;

    Index node_count() const { return values.size(); }
    Vector node(Index flat) const;
};

/// Uniform grid over `domain` (endpoints included) with the given per-axis counts.
std::vector<Vector> grid_axes(const Box& domain, const std::vector<Index>& resolution);

/// One-step error at every node of a uniform grid over the system domain.
ErrorGrid error_grid(const Surrogate& surrogate, const DynamicalSystem& system,
                     const std::vector<Index>& resolution, int threads = 1,
                     double reference_tol = 1e-12);

/// Node-wise a - b. Throws InvalidArgument when the grids differ in shape.
ErrorGrid difference(const ErrorGrid& a, const ErrorGrid& b);

struct MeanErrorSeries {
    std::string name;
    std::vector<double> times;
    std::vector<double> mean_error;
    Index diverged = 0;
};

/// Mean over the x0 columns of ||rollout(k) - x(k dt; x0)|| for k = 0..n_steps.
/// A diverged rollout keeps contributing its last finite error.
std::vector<MeanErrorSeries> mean_error_over_time(const std::vector<const Surrogate*>& surrogates,
                                                  const DynamicalSystem& system,
                                                  const Matrix& x0_set, Index n_steps,
                                                  int threads = 1, double reference_tol = 1e-11);

struct SweepOptions {
    std::vector<double> dts{0.005, 0.01, 0.02, 0.05, 0.1, 0.2};
    Index m = 10'000;
    std::uint64_t seed = 42;
    Index n_eval = 500;
    FitOptions fit;
    SnapshotOptions snapshots;
    SurrogateOptions surrogate;
    int threads = 1;
    double reference_tol = 1e-12;
};

struct SweepSeries {
    std::string projector;
    std::vector<double> median;
    std::vector<double> q25;
    std::vector<double> q75;
    std::vector<char> missing;
};

struct SweepResult {
    std::vector<double> dts;
    std::vector<SweepSeries> series;
};

/// Refits the model and metric for each dt and records one-step error quantiles
/// over a fixed set of n_eval uniform evaluation points.
SweepResult timestep_sweep(const DynamicalSystem& system, const Dictionary& dictionary,
                           const std::vector<ProjectorRecipe>& projectors,
                           const SweepOptions& options);

struct ErrorSeries {
    std::vector<double> times;
    std::vector<double> errors;
    std::vector<char> flagged;
};

/// One-step errors at the true-trajectory points x(k dt; x0), k = 0..n_steps-1.
ErrorSeries trajectory_error_series(const Surrogate& surrogate, const DynamicalSystem& system,
                                    const Vector& x0, Index n_steps, int threads = 1,
                                    double reference_tol = 1e-12);

/// Linear-interpolation quantile of the values (q in [0, 1]).
double quantile(std::vector<double> values, double q);

}  // namespace kreproj
