#include "kreproj/surrogate.hpp"
#include "kreproj/format.hpp"

namespace kreproj {

std::string Surrogate::descriptor() const
{
    return projector.name + " projection, N=" + std::to_string(dictionary().size()) +
           ", dt=" + format_shortest(dt());
}

void Surrogate::validate() const
{
    if (model.K.rows() != dictionary().size() || model.K.cols() != dictionary().size())
        throw InvalidArgument("Surrogate: operator size does not match the dictionary");
    if (region.dim() != dictionary().state_dim())
        throw InvalidArgument("Surrogate: region dimension does not match the dictionary");
    projector.validate(dictionary());
}

StepResult step(const Surrogate& surrogate, const Vector& x, const std::vector<Vector>& seeds)
{
    const Dictionary& dict = surrogate.dictionary();
    StepResult out;
    out.lifted = surrogate.model.K * dict(x);
    if (!out.lifted.allFinite())
        throw StepError("step: non-finite lifted point", out.lifted);
    Projection proj;
    try {
        proj = project(surrogate.projector, dict, out.lifted, seeds);
    } catch (const ReconstructionError& e) {
        throw StepError(std::string("step: ") + e.what(), out.lifted);
    }
    if (surrogate.strict && !proj.converged)
        throw StepError("step: closest-point projection did not converge", out.lifted);
    out.state = std::move(proj.x);
    out.converged = proj.converged;
    return out;
}

Rollout rollout_lifted(const KoopmanApproximation& model, const Vector& x0, Index n_steps,
                       const std::optional<Box>& region)
{
    const Dictionary& dict = model.dictionary;
    if (!dict.coordinate_indices())
        throw InvalidArgument("rollout_lifted: the dictionary has no coordinate observables to "
                              "read states from");
    if (n_steps < 0) throw InvalidArgument("rollout_lifted: n_steps must be >= 0");
    const ReconstructionMap readout = coordinate_reconstruction(dict);

    Rollout out;
    Vector z = dict(x0);
    out.lifted.push_back(z);
    out.states.push_back(readout(z));
    out.times.push_back(0);
    for (Index k = 1; k <= n_steps; ++k) {
        z = model.K * z;
        const Vector x = readout(z);
        if (!z.allFinite() || (region && !region->contains(x))) {
            out.diverged_at = k;
            break;
        }
        out.lifted.push_back(z);
        out.states.push_back(x);
        out.times.push_back(static_cast<double>(k) * model.dt);
    }
    return out;
}

Rollout rollout(const Surrogate& surrogate, const Vector& x0, Index n_steps)
{
    if (n_steps < 1) throw InvalidArgument("rollout: n_steps must be >= 1");
    if (surrogate.projector.kind == ProjectorKind::none)
        return rollout_lifted(surrogate.model, x0, n_steps, surrogate.region);

    // Warm start from the previous state; grid starts only when that fails.
    Surrogate warm = surrogate;
    warm.projector.solver.always_multistart = false;

    Rollout out;
    out.states.push_back(x0);
    out.times.push_back(0);
    Vector x = x0;
    for (Index k = 1; k <= n_steps; ++k) {
        StepResult s;
        try {
            s = step(warm, x, {x});
        } catch (const StepError&) {
            out.diverged_at = k;
            break;
        }
        if (!s.state.allFinite() || !surrogate.region.contains(s.state)) {
            out.diverged_at = k;
            break;
        }
        out.unconverged_steps += s.converged ? 0 : 1;
        x = s.state;
        out.states.push_back(x);
        out.times.push_back(static_cast<double>(k) * surrogate.dt());
    }
    return out;
}

std::string to_string(ProjectorRecipe recipe)
{
    switch (recipe) {
    case ProjectorRecipe::none: return "none";
    case ProjectorRecipe::coordinate: return "coordinate";
    case ProjectorRecipe::geometric: return "geometric";
    }
    return "?";
}

ProjectorRecipe parse_projector_recipe(const std::string& name)
{
    if (name == "none") return ProjectorRecipe::none;
    if (name == "coordinate") return ProjectorRecipe::coordinate;
    if (name == "geometric") return ProjectorRecipe::geometric;
    throw InvalidArgument("unknown projector '" + name +
                          "' (expected none, coordinate, geometric, or closest_point)");
}

namespace {

Surrogate assemble(const KoopmanApproximation& model, const DynamicalSystem& system,
                   Projector projector, const SurrogateOptions& options)
{
    Surrogate s{model, std::move(projector), system.domain.inflated(options.domain_margin),
                options.strict};
    s.validate();
    return s;
}

std::optional<ReconstructionMap> try_reconstruction(const Dictionary& dict, const Box& domain)
{
    try {
        return auto_reconstruction(dict, domain);
    } catch (const InvalidArgument&) {
        return std::nullopt;
    }
}

}  // namespace

Surrogate make_surrogate(const KoopmanApproximation& model, const DynamicalSystem& system,
                         ProjectorRecipe recipe, const SnapshotSet* sigma_data,
                         const SurrogateOptions& options)
{
    const Dictionary& dict = model.dictionary;
    switch (recipe) {
    case ProjectorRecipe::none: return assemble(model, system, none_projector(dict), options);
    case ProjectorRecipe::coordinate:
        return assemble(model, system, coordinate_projector(dict, system.domain), options);
    case ProjectorRecipe::geometric: {
        if (!sigma_data)
            throw InvalidArgument("make_surrogate: the geometric projector needs snapshot data");
        return make_surrogate(model, system, geometric_metric(model, *sigma_data, options.geometric),
                              "geometric", options);
    }
    }
    throw InvalidArgument("make_surrogate: unknown projector recipe");
}

Surrogate make_surrogate(const KoopmanApproximation& model, const DynamicalSystem& system,
                         Metric metric, std::string name, const SurrogateOptions& options)
{
    ClosestPointConfig solver = options.solver;
    if (!solver.box) solver.box = system.domain.inflated(options.domain_margin);
    return assemble(model, system,
                    closest_point_projector(std::move(metric), solver, std::move(name),
                                            try_reconstruction(model.dictionary, system.domain)),
                    options);
}

}  // namespace kreproj
