#pragma once

#include "kreproj/manifold.hpp"

#include <optional>
#include <string>
#include <vector>

namespace kreproj {

/// Discrete-time prediction x+ = Psi^{-1}(pi(K Psi(x))).
struct Surrogate {
    KoopmanApproximation model;
    Projector projector;
    /// Rollouts stop once a state leaves this box.
    Box region;
    /// Treat closest-point non-convergence as a step failure.
    bool strict = false;

    const Dictionary& dictionary() const { return model.dictionary; }
    double dt() const { return model.dt; }
    std::string descriptor() const;

    void validate() const;
};

/// A failed surrogate step, carrying the lifted point that could not be projected.
class StepError : public Error {
public:
    StepError(const std::string& what, Vector lifted) : Error(what), lifted_(std::move(lifted)) {}
    const Vector& lifted() const { return lifted_; }

private:
    Vector lifted_;
};

struct StepResult {
    Vector state;
    Vector lifted;  ///< K Psi(x) before projection
    bool converged = true;
};

StepResult step(const Surrogate& surrogate, const Vector& x, const std::vector<Vector>& seeds = {});

struct Rollout {
    std::vector<Vector> states;  ///< recovered states, states[0] = x0
    std::vector<Vector> lifted;  ///< lifted iterates z(k); only filled by the unprojected rollout
    std::vector<double> times;
    /// First step index whose result left the region or failed.
    std::optional<Index> diverged_at;
    Index unconverged_steps = 0;
};

/// Iterates `step` n_steps times, warm-starting each projection from the previous
/// state. Projector "none" dispatches to rollout_lifted.
Rollout rollout(const Surrogate& surrogate, const Vector& x0, Index n_steps);

/// z(0) = Psi(x0), z(k+1) = K z(k); states read from the coordinate observables.
/// Throws InvalidArgument when the dictionary has no coordinate observables.
Rollout rollout_lifted(const KoopmanApproximation& model, const Vector& x0, Index n_steps,
                       const std::optional<Box>& region = std::nullopt);

enum class ProjectorRecipe { none, coordinate, geometric };

std::string to_string(ProjectorRecipe recipe);
/// Parses "none" | "coordinate" | "geometric".
ProjectorRecipe parse_projector_recipe(const std::string& name);

struct SurrogateOptions {
    ClosestPointConfig solver;
    GeometricMetricOptions geometric;
    double domain_margin = 0.5;
    bool strict = false;
};

/// Builds a surrogate for a fitted model. `sigma_data` supplies the residual
/// snapshots for the geometric metric (required for ProjectorRecipe::geometric).
/// The closest-point search box defaults to the inflated system domain.
Surrogate make_surrogate(const KoopmanApproximation& model, const DynamicalSystem& system,
                         ProjectorRecipe recipe, const SnapshotSet* sigma_data = nullptr,
                         const SurrogateOptions& options = {});

/// Surrogate with an explicit closest-point metric (e.g. loaded from file).
Surrogate make_surrogate(const KoopmanApproximation& model, const DynamicalSystem& system,
                         Metric metric, std::string name, const SurrogateOptions& options = {});

}  // namespace kreproj
