#include "kreproj/evaluation.hpp"
#include "kreproj/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace kreproj {

namespace {

FlowOptions reference_options(double tol)
{
    FlowOptions fo;
    fo.rel_tol = tol;
    fo.abs_tol = tol;
    return fo;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

OneStepError one_step_error(const Surrogate& surrogate, const DynamicalSystem& system,
                            const Vector& x, double reference_tol)
{
    OneStepError out;
    const FlowResult truth = flow(system, x, surrogate.dt(), reference_options(reference_tol));
    if (truth.left_domain) {
        out.value = kInf;
        out.failed = true;
        return out;
    }
    try {
        const StepResult s = step(surrogate, x);
        out.value = (s.state - truth.state).norm();
        out.converged = s.converged;
    } catch (const StepError& e) {
        spdlog::debug("one_step_error: {}", e.what());
        out.value = kInf;
        out.failed = true;
        out.converged = false;
    }
    if (!std::isfinite(out.value)) {
        out.value = kInf;
        out.failed = true;
    }
    return out;
}

Vector ErrorGrid::node(Index flat) const
{
    const Index d = static_cast<Index>(axes.size());
    Vector x(d);
    for (Index i = d - 1; i >= 0; --i) {
        const Index n = axes[static_cast<std::size_t>(i)].size();
        x[i] = axes[static_cast<std::size_t>(i)][flat % n];
        flat /= n;
    }
    return x;
}

std::vector<Vector> grid_axes(const Box& domain, const std::vector<Index>& resolution)
{
    if (static_cast<Index>(resolution.size()) != domain.dim())
        throw InvalidArgument("grid_axes: one resolution per axis required");
    std::vector<Vector> axes;
    for (Index i = 0; i < domain.dim(); ++i) {
        const Index n = resolution[static_cast<std::size_t>(i)];
        if (n < 1) throw InvalidArgument("grid_axes: resolution must be >= 1");
        if (n == 1)
            axes.push_back(Vector::Constant(1, 0.5 * (domain.lo[i] + domain.hi[i])));
        else
            axes.push_back(Vector::LinSpaced(n, domain.lo[i], domain.hi[i]));
    }
    return axes;
}

ErrorGrid error_grid(const Surrogate& surrogate, const DynamicalSystem& system,
                     const std::vector<Index>& resolution, int threads, double reference_tol)
{
    ErrorGrid grid;
    grid.axes = grid_axes(system.domain, resolution);
    grid.metric_name = "one_step_error";
    grid.surrogate_descriptor = surrogate.descriptor();
    Index count = 1;
    for (const Vector& a : grid.axes) count *= a.size();
    grid.values.resize(count);
    grid.converged.assign(static_cast<std::size_t>(count), 1);
    parallel_for(count, threads, [&](std::ptrdiff_t flat) {
        const OneStepError e = one_step_error(surrogate, system, grid.node(flat), reference_tol);
        grid.values[flat] = e.value;
        grid.converged[static_cast<std::size_t>(flat)] = e.converged && !e.failed;
    });
    return grid;
}

ErrorGrid difference(const ErrorGrid& a, const ErrorGrid& b)
{
    if (a.axes.size() != b.axes.size() || a.node_count() != b.node_count())
        throw InvalidArgument("difference: grids have different shapes");
    for (std::size_t i = 0; i < a.axes.size(); ++i)
        if (a.axes[i].size() != b.axes[i].size() || a.axes[i] != b.axes[i])
            throw InvalidArgument("difference: grids have different axes");
    ErrorGrid out;
    out.axes = a.axes;
    out.values = a.values - b.values;
    out.converged.resize(a.converged.size());
    for (std::size_t i = 0; i < a.converged.size(); ++i)
        out.converged[i] = a.converged[i] && b.converged[i];
    out.metric_name = a.metric_name + " difference";
    out.surrogate_descriptor = a.surrogate_descriptor + " minus " + b.surrogate_descriptor;
    return out;
}

std::vector<MeanErrorSeries> mean_error_over_time(const std::vector<const Surrogate*>& surrogates,
                                                  const DynamicalSystem& system,
                                                  const Matrix& x0_set, Index n_steps, int threads,
                                                  double reference_tol)
{
    if (surrogates.empty()) return {};
    const double dt = surrogates.front()->dt();
    for (const Surrogate* s : surrogates)
        if (s->dt() != dt) throw InvalidArgument("mean_error_over_time: surrogates differ in dt");

    const Index n0 = x0_set.cols();
    std::vector<std::vector<Vector>> truth(static_cast<std::size_t>(n0));
    parallel_for(n0, threads, [&](std::ptrdiff_t j) {
        truth[static_cast<std::size_t>(j)] =
            trajectory(system, x0_set.col(j), dt, n_steps, reference_options(reference_tol));
    });
    for (Index j = 0; j < n0; ++j)
        if (static_cast<Index>(truth[static_cast<std::size_t>(j)].size()) != n_steps + 1)
            throw Error("mean_error_over_time: reference trajectory left the domain");

    std::vector<MeanErrorSeries> out;
    for (const Surrogate* s : surrogates) {
        MeanErrorSeries series;
        series.name = s->projector.name;
        // errors(j, k)
        Matrix errors(n0, n_steps + 1);
        std::vector<char> diverged(static_cast<std::size_t>(n0), 0);
        parallel_for(n0, threads, [&](std::ptrdiff_t j) {
            const Rollout r = rollout(*s, x0_set.col(j), n_steps);
            double last = 0;
            for (Index k = 0; k <= n_steps; ++k) {
                if (k < static_cast<Index>(r.states.size())) {
                    const double e =
                        (r.states[static_cast<std::size_t>(k)] -
                         truth[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)])
                            .norm();
                    if (std::isfinite(e)) last = e;
                }
                errors(j, k) = last;
            }
            diverged[static_cast<std::size_t>(j)] = r.diverged_at.has_value();
        });
        for (Index k = 0; k <= n_steps; ++k) {
            series.times.push_back(static_cast<double>(k) * dt);
            series.mean_error.push_back(errors.col(k).mean());
        }
        series.diverged = std::count(diverged.begin(), diverged.end(), 1);
        out.push_back(std::move(series));
    }
    return out;
}

double quantile(std::vector<double> values, double q)
{
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    if (lo == hi || values[lo] == values[hi]) return values[lo];
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SweepResult timestep_sweep(const DynamicalSystem& system, const Dictionary& dictionary,
                           const std::vector<ProjectorRecipe>& projectors,
                           const SweepOptions& options)
{
    SweepResult result;
    result.dts = options.dts;
    for (ProjectorRecipe p : projectors) result.series.push_back({to_string(p), {}, {}, {}, {}});

    const Matrix eval_points = sample_uniform(system.domain, options.n_eval, options.seed + 7919);
    for (std::size_t i = 0; i < options.dts.size(); ++i) {
        const double dt = options.dts[i];
        try {
            SnapshotOptions so = options.snapshots;
            so.threads = options.threads;
            const Matrix samples = sample_uniform(system.domain, options.m, options.seed + i);
            const SnapshotSet snaps = build_snapshots(system, samples, dt, so, options.seed + i);
            const KoopmanApproximation model = fit(snaps, dictionary, options.fit);
            for (std::size_t p = 0; p < projectors.size(); ++p) {
                const Surrogate s =
                    make_surrogate(model, system, projectors[p], &snaps, options.surrogate);
                std::vector<double> errors(static_cast<std::size_t>(options.n_eval));
                parallel_for(options.n_eval, options.threads, [&](std::ptrdiff_t j) {
                    errors[static_cast<std::size_t>(j)] =
                        one_step_error(s, system, eval_points.col(j), options.reference_tol).value;
                });
                SweepSeries& series = result.series[p];
                series.median.push_back(quantile(errors, 0.5));
                series.q25.push_back(quantile(errors, 0.25));
                series.q75.push_back(quantile(errors, 0.75));
                series.missing.push_back(0);
            }
        } catch (const Error& e) {
            spdlog::warn("timestep_sweep: dt={} skipped: {}", dt, e.what());
            for (SweepSeries& series : result.series) {
                const double nan = std::numeric_limits<double>::quiet_NaN();
                series.median.resize(i + 1, nan);
                series.q25.resize(i + 1, nan);
                series.q75.resize(i + 1, nan);
                series.missing.resize(i + 1, 1);
                series.missing[i] = 1;
            }
        }
    }
    return result;
}

ErrorSeries trajectory_error_series(const Surrogate& surrogate, const DynamicalSystem& system,
                                    const Vector& x0, Index n_steps, int threads,
                                    double reference_tol)
{
    const std::vector<Vector> truth =
        trajectory(system, x0, surrogate.dt(), n_steps, reference_options(reference_tol));
    const Index count = std::min<Index>(n_steps, static_cast<Index>(truth.size()));
    ErrorSeries out;
    out.times.resize(static_cast<std::size_t>(count));
    out.errors.resize(static_cast<std::size_t>(count));
    out.flagged.resize(static_cast<std::size_t>(count));
    parallel_for(count, threads, [&](std::ptrdiff_t k) {
        const auto idx = static_cast<std::size_t>(k);
        const OneStepError e = one_step_error(surrogate, system, truth[idx], reference_tol);
        out.times[idx] = static_cast<double>(k) * surrogate.dt();
        out.errors[idx] = e.value;
        out.flagged[idx] = e.failed || !e.converged;
    });
    return out;
}

}  // namespace kreproj
