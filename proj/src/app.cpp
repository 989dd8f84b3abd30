#include "kreproj/app.hpp"
#include "kreproj/format.hpp"
#include "kreproj/io.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/MatrixFunctions>
#include <spdlog/spdlog.h>
#include <spdlog/version.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

#ifndef KREPROJ_VERSION
#define KREPROJ_VERSION "0.0.0"
#endif

namespace kreproj {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v)
{
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(v));
    return buffer;
}

std::string order_tag(int degree) { return "V" + std::to_string(degree); }

Dictionary dictionary_of_degree(const ExperimentConfig& config, const DynamicalSystem& system,
                                int degree)
{
    ExperimentConfig c = config;
    c.dictionary.degree = degree;
    return make_dictionary(c, system.dimension, system.state_labels);
}

Vector initial_state(const ExperimentConfig& config, const DynamicalSystem& system)
{
    if (config.evaluation.x0.empty()) return 0.5 * (system.domain.lo + system.domain.hi);
    if (static_cast<Index>(config.evaluation.x0.size()) != system.dimension)
        throw InvalidArgument("[evaluation] x0 must have " + std::to_string(system.dimension) +
                              " entries");
    return Eigen::Map<const Vector>(config.evaluation.x0.data(), system.dimension);
}

std::vector<Index> grid_resolution(const ExperimentConfig& config, Index d)
{
    const std::vector<Index>& g = config.evaluation.grid;
    if (g.size() == 1) return std::vector<Index>(static_cast<std::size_t>(d), g.front());
    if (static_cast<Index>(g.size()) != d)
        throw InvalidArgument("[evaluation] grid needs 1 or " + std::to_string(d) + " entries");
    return g;
}

Matrix grid_points(const Box& domain, Index per_axis)
{
    const std::vector<Vector> axes =
        grid_axes(domain, std::vector<Index>(static_cast<std::size_t>(domain.dim()), per_axis));
    ErrorGrid shape;
    shape.axes = axes;
    Index count = 1;
    for (const Vector& a : axes) count *= a.size();
    Matrix points(domain.dim(), count);
    for (Index k = 0; k < count; ++k) points.col(k) = shape.node(k);
    return points;
}

void note(std::ostream& out, const fs::path& path) { out << "wrote " << path.string() << '\n'; }

}  // namespace

std::string version() { return KREPROJ_VERSION; }

FittedModel fit_from_config(const ExperimentConfig& config, const Dictionary& dictionary)
{
    FittedModel f{make_system(config), {}, {}, KoopmanApproximation{Matrix(), dictionary}};
    if (config.m < dictionary.size() && !config.force)
        throw InvalidArgument("m = " + std::to_string(config.m) + " is smaller than the dictionary size N = " +
                              std::to_string(dictionary.size()) +
                              "; the Gram matrix would be rank deficient (use --force to fit anyway)");
    const SnapshotOptions so = snapshot_options(config);
    f.snapshots = build_snapshots(f.system, sample_uniform(f.system.domain, config.m, config.seed),
                                  config.dt, so, config.seed);
    f.model = fit(f.snapshots, dictionary, fit_options(config));
    if (config.sigma_data == "heldout") {
        const std::uint64_t seed = config.seed + 0x9e3779b97f4a7c15ull;
        f.sigma_snapshots = build_snapshots(
            f.system, sample_uniform(f.system.domain, config.m, seed), config.dt, so, seed);
    } else {
        f.sigma_snapshots = f.snapshots;
    }
    return f;
}

Surrogate surrogate_from_config(const ExperimentConfig& config, const FittedModel& fitted,
                                const std::string& projector)
{
    const SurrogateOptions so = surrogate_options(config);
    if (projector == "closest_point") {
        if (config.metric_file.empty())
            throw InvalidArgument("closest_point projector needs [projection] metric_file");
        Metric metric = read_metric(config.metric_file);
        if (metric.size() != fitted.model.dictionary.size())
            throw InvalidArgument("metric '" + config.metric_file + "' has size " +
                                  std::to_string(metric.size()) + ", dictionary has " +
                                  std::to_string(fitted.model.dictionary.size()));
        return make_surrogate(fitted.model, fitted.system, std::move(metric), "closest_point", so);
    }
    return make_surrogate(fitted.model, fitted.system, parse_projector_recipe(projector),
                          &fitted.sigma_snapshots, so);
}

double example1_operator_error(const KoopmanApproximation& model, double lambda)
{
    const Dictionary& dict = model.dictionary;
    const auto x1 = dict.find(Exponent{1, 0});
    const auto x2 = dict.find(Exponent{0, 1});
    const auto x1sq = dict.find(Exponent{2, 0});
    if (dict.state_dim() != 2 || dict.size() != 3 || !x1 || !x2 || !x1sq)
        throw InvalidArgument("verify: needs the dictionary {x1, x2, x1^2} (degree 2, exclude 1, "
                              "x1*x2, x2^2)");
    Matrix A = Matrix::Zero(3, 3);
    A(*x1, *x1) = 1;
    A(*x2, *x2) = lambda;
    A(*x2, *x1sq) = -lambda;
    A(*x1sq, *x1sq) = 2;
    const Matrix expA = (model.dt * A).exp();
    return (model.K - expA).norm();
}

int cmd_fit(const ExperimentConfig& config, std::ostream& out, bool verify)
{
    config.validate();
    const DynamicalSystem system = make_system(config);
    const Dictionary dict = make_dictionary(config, system.dimension, system.state_labels);
    const FittedModel fitted = fit_from_config(config, dict);
    const KoopmanApproximation& model = fitted.model;

    const fs::path dir = config.output_dir;
    std::vector<fs::path> outputs{dir / "K.csv", dir / "K.csv.meta", dir / "snapshots.csv"};
    write_model(dir / "K.csv", model, system.name);
    write_snapshots(dir / "snapshots.csv", fitted.snapshots);
    for (const std::string& p : config.projectors) {
        if (p != "geometric") continue;
        const fs::path path = dir / "metric_geometric.csv";
        write_metric(path, geometric_metric(model, fitted.sigma_snapshots, config.geometric));
        outputs.push_back(path);
    }
    for (const fs::path& p : outputs) note(out, p);
    write_manifest(dir, "fit", config, outputs);

    out << "N=" << dict.size() << " m=" << model.m << " dropped=" << fitted.snapshots.dropped << '\n';
    out << "residual_rms=" << format_shortest(model.residual_rms) << '\n';
    out << "condition_number=" << format_shortest(model.condition_number)
        << (model.used_pseudoinverse ? " (pseudoinverse)" : "") << '\n';
    if (verify) {
        if (system.name != "example1")
            throw InvalidArgument("--verify is only defined for system example1");
        const double lambda = system.parameters.at("lambda");
        const double err = example1_operator_error(model, lambda);
        const bool ok = err <= 1e-6;
        out << (ok ? "PASS" : "FAIL") << " verify: ||K - exp(dt A)||_F = " << format_shortest(err)
            << " (tolerance 1e-6)\n";
        return ok ? 0 : 1;
    }
    return 0;
}

ExperimentConfig figure_config(const std::string& figure)
{
    ExperimentConfig c;
    c.dt = 0.01;
    c.m = 10'000;
    if (figure == "fig3") {
        c.system = "duffing";
        c.dictionary.degree = 5;
        c.projectors = {"none", "coordinate"};
        c.evaluation.x0 = {1.5, 0.0};
        c.evaluation.rollout_steps = 2000;
        c.evaluation.x0_grid = 10;
        c.evaluation.mean_steps = 1000;
    } else if (figure == "fig45" || figure == "fig6") {
        c.system = "pendulum";
        c.dictionary.degree = 3;
        c.projectors = {"coordinate", "geometric"};
        c.evaluation.grid = {50};
    } else if (figure == "fig7") {
        c.system = "lorenz";
        c.dictionary.degree = 4;
        c.dictionary.exclude = {"x"};
        c.projectors = {"coordinate", "geometric"};
        c.evaluation.x0 = {1.0, 1.0, 25.0};
        c.evaluation.series_steps = 500;
    } else {
        throw InvalidArgument("unknown figure '" + figure + "' (expected fig3, fig45, fig6, fig7)");
    }
    return c;
}

std::vector<fs::path> reproduce(const std::string& figure, const ExperimentConfig& config,
                                std::ostream& out)
{
    config.validate();
    const DynamicalSystem system = make_system(config);
    const fs::path dir = config.output_dir;
    std::vector<fs::path> written;
    const auto record = [&](const fs::path& p) {
        written.push_back(p);
        note(out, p);
    };

    if (figure == "fig3") {
        // Coordinate projection on V3 and V5, and the unprojected V5 model.
        struct Run {
            int degree;
            std::string projector;
        };
        const std::vector<Run> runs{{3, "coordinate"}, {5, "coordinate"}, {5, "none"}};
        std::vector<FittedModel> fits;
        std::vector<Surrogate> surrogates;
        for (int degree : {3, 5}) fits.push_back(fit_from_config(config, dictionary_of_degree(config, system, degree)));
        for (const Run& r : runs)
            surrogates.push_back(surrogate_from_config(config, fits[r.degree == 3 ? 0 : 1], r.projector));

        const Vector x0 = initial_state(config, system);
        const Index steps = config.evaluation.rollout_steps;
        FlowOptions ref;
        ref.rel_tol = ref.abs_tol = 1e-11;
        ref.domain_margin = config.domain_margin;
        Rollout truth;
        for (const Vector& x : trajectory(system, x0, config.dt, steps, ref)) {
            truth.times.push_back(static_cast<double>(truth.states.size()) * config.dt);
            truth.states.push_back(x);
        }
        write_rollout(dir / "fig3_reference.csv", truth, "exact flow");
        record(dir / "fig3_reference.csv");

        std::vector<const Surrogate*> ptrs;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const std::string tag = runs[i].projector + "_" + order_tag(runs[i].degree);
            const Rollout r = rollout(surrogates[i], x0, steps);
            const fs::path path = dir / ("fig3_rollout_" + tag + ".csv");
            write_rollout(path, r, surrogates[i].descriptor());
            record(path);
            ptrs.push_back(&surrogates[i]);
        }
        const Matrix x0_set = grid_points(system.domain, config.evaluation.x0_grid);
        std::vector<MeanErrorSeries> series = mean_error_over_time(
            ptrs, system, x0_set, config.evaluation.mean_steps, config.threads);
        for (std::size_t i = 0; i < runs.size(); ++i) {
            series[i].name = runs[i].projector + "_" + order_tag(runs[i].degree);
            out << series[i].name << ": " << series[i].diverged << " of " << x0_set.cols()
                << " rollouts diverged\n";
        }
        write_mean_error(dir / "fig3_mean_error.csv", series);
        record(dir / "fig3_mean_error.csv");
    } else if (figure == "fig45") {
        const std::vector<Index> resolution = grid_resolution(config, system.dimension);
        for (int degree : {2, 3}) {
            const FittedModel f = fit_from_config(config, dictionary_of_degree(config, system, degree));
            const Surrogate coord = surrogate_from_config(config, f, "coordinate");
            const Surrogate geo = surrogate_from_config(config, f, "geometric");
            const ErrorGrid gc = error_grid(coord, system, resolution, config.threads);
            const ErrorGrid gg = error_grid(geo, system, resolution, config.threads);
            const std::string tag = order_tag(degree);
            write_grid(dir / ("fig45_grid_coordinate_" + tag + ".csv"), gc, system.state_labels);
            record(dir / ("fig45_grid_coordinate_" + tag + ".csv"));
            write_grid(dir / ("fig45_grid_geometric_" + tag + ".csv"), gg, system.state_labels);
            record(dir / ("fig45_grid_geometric_" + tag + ".csv"));
            const ErrorGrid diff = difference(gg, gc);
            write_grid(dir / ("fig45_diff_" + tag + ".csv"), diff, system.state_labels);
            record(dir / ("fig45_diff_" + tag + ".csv"));
            Index nonpositive = 0, converged = 0;
            for (Index k = 0; k < diff.node_count(); ++k) {
                if (!diff.converged[static_cast<std::size_t>(k)]) continue;
                ++converged;
                nonpositive += diff.values[k] <= 0 ? 1 : 0;
            }
            out << tag << ": geometric <= coordinate at " << nonpositive << " of " << converged
                << " converged nodes\n";
        }
    } else if (figure == "fig6") {
        for (int degree : {2, 3}) {
            SweepOptions so;
            so.dts = config.evaluation.sweep_dts;
            so.m = config.m;
            so.seed = config.seed;
            so.n_eval = config.evaluation.n_eval;
            so.fit = fit_options(config);
            so.snapshots = snapshot_options(config);
            so.surrogate = surrogate_options(config);
            so.threads = config.threads;
            const SweepResult sweep =
                timestep_sweep(system, dictionary_of_degree(config, system, degree),
                               {ProjectorRecipe::coordinate, ProjectorRecipe::geometric}, so);
            const fs::path path = dir / ("fig6_sweep_" + order_tag(degree) + ".csv");
            write_sweep(path, sweep, order_tag(degree));
            record(path);
        }
    } else if (figure == "fig7") {
        const Dictionary dict = make_dictionary(config, system.dimension, system.state_labels);
        const FittedModel f = fit_from_config(config, dict);
        const Vector x0 = initial_state(config, system);
        for (const std::string& name : {std::string("coordinate"), std::string("geometric")}) {
            const Surrogate s = surrogate_from_config(config, f, name);
            const ErrorSeries series = trajectory_error_series(
                s, system, x0, config.evaluation.series_steps, config.threads);
            const fs::path path = dir / ("fig7_series_" + name + ".csv");
            write_series(path, series, s.descriptor());
            record(path);
            out << name << ": median one-step error "
                << format_shortest(quantile(series.errors, 0.5)) << '\n';
        }
    } else {
        throw InvalidArgument("unknown figure '" + figure + "' (expected fig3, fig45, fig6, fig7)");
    }
    write_manifest(dir, "reproduce " + figure, config, written);
    return written;
}

int cmd_reproduce(const std::string& figure, const ExperimentConfig& config, std::ostream& out)
{
    try {
        reproduce(figure, config, out);
    } catch (const Error& e) {
        throw Error("reproduce " + figure + ": " + e.what());
    }
    return 0;
}

bool CheckReport::passed() const
{
    return std::none_of(lines.begin(), lines.end(),
                        [](const CheckLine& l) { return l.status == CheckStatus::fail; });
}

CheckReport run_checks(const ExperimentConfig& config)
{
    config.validate();
    CheckReport report;
    const DynamicalSystem system = make_system(config);
    const Dictionary dict = make_dictionary(config, system.dimension, system.state_labels);
    const FittedModel f = fit_from_config(config, dict);
    const KoopmanApproximation& model = f.model;
    const Index n_test = config.evaluation.test_points;
    const Matrix test = sample_uniform(system.domain, n_test, config.seed + 1);

    const auto add = [&](std::string name, bool ok, std::string detail) {
        report.lines.push_back({std::move(name), ok ? CheckStatus::pass : CheckStatus::fail,
                                std::move(detail)});
    };
    const auto skip = [&](std::string name, std::string detail) {
        report.lines.push_back({std::move(name), CheckStatus::skip, std::move(detail)});
    };

    report.info.push_back("system " + system.name + ", N=" + std::to_string(dict.size()) +
                          ", m=" + std::to_string(model.m) + ", dt=" + format_shortest(model.dt));
    report.info.push_back("residual_rms=" + format_shortest(model.residual_rms) +
                          " condition_number=" + format_shortest(model.condition_number));

    {
        const double r = normal_equation_residual(model, f.snapshots, config.ridge);
        add("normal_equations", r <= 1e-8, "relative residual " + format_shortest(r) + " (<= 1e-8)");
    }

    {
        double worst = 0;
        for (Index j = 0; j < n_test; ++j)
            worst = std::max(worst, jacobian_fd_error(dict, test.col(j)));
        add("jacobian_fd", worst <= 1e-6,
            "max relative error " + format_shortest(worst) + " over " + std::to_string(n_test) +
                " points (<= 1e-6)");
    }

    if (dict.coordinate_indices()) {
        const Projector coord = coordinate_projector(dict, system.domain);
        ClosestPointConfig solver = config.solver;
        solver.box = system.domain.inflated(config.domain_margin);
        const Metric C = coordinate_metric(dict);
        std::mt19937_64 rng(config.seed + 2);
        std::normal_distribution<double> noise(0.0, 1e-2);
        double worst = 0;
        Index unconverged = 0;
        for (Index j = 0; j < n_test; ++j) {
            Vector z = dict(test.col(j));
            for (Index i = 0; i < z.size(); ++i) z[i] += noise(rng);
            const Projection a = project(coord, dict, z);
            const Projection b = project_closest(dict, C, z, solver);
            unconverged += b.converged ? 0 : 1;
            worst = std::max(worst, (a.x - b.x).norm());
        }
        add("coordinate_agreement", worst <= 1e-6 && unconverged == 0,
            "max |x_coord - x_closest(C)| = " + format_shortest(worst) + ", " +
                std::to_string(unconverged) + " unconverged (<= 1e-6)");
    } else {
        skip("coordinate_agreement", "dictionary lacks coordinate observables");
    }

    std::vector<Surrogate> closest;
    for (const std::string& p : config.projectors)
        if (p == "geometric" || p == "closest_point") closest.push_back(surrogate_from_config(config, f, p));
    if (closest.empty()) closest.push_back(surrogate_from_config(config, f, "geometric"));
    for (const Surrogate& s : closest) {
        const Metric& W = *s.projector.metric;
        const MetricConditionReport mc = check_metric_condition(dict, W, test);
        add("metric_condition[" + s.projector.name + "]", mc.ok,
            "min |det(DPsi^T W DPsi)| = " + format_shortest(mc.min_abs_det) + " (> 1e-10)");

        const BoundCheckReport b =
            projection_bound_check(model, W, s.projector, test, system, config.threads);
        std::string detail = std::to_string(b.violations) + " violations of the 2x bound over " +
                             std::to_string(n_test) + " points, worst ratio " +
                             format_shortest(b.worst_ratio);
        if (b.unconverged > 0)
            detail += "; " + std::to_string(b.unconverged) +
                      " projections did not converge (max_iters=" +
                      std::to_string(s.projector.solver.max_iters) + ")";
        add("projection_bound[" + s.projector.name + "]", b.violations == 0 && b.unconverged == 0,
            detail);
    }

    if (config.ridge == 0) {
        std::mt19937_64 rng(config.seed + 3);
        std::normal_distribution<double> gauss;
        std::uniform_int_distribution<Index> rank(1, dict.size());
        double worst = 0;
        for (int trial = 0; trial < 20; ++trial) {
            Matrix B(dict.size(), rank(rng));
            for (Index i = 0; i < B.size(); ++i) B.data()[i] = gauss(rng);
            const Matrix W = B * B.transpose();
            worst = std::max(worst, normal_equation_residual(model, f.snapshots, 0, &W));
        }
        add("weighted_stationarity", worst <= 1e-8,
            "max relative residual " + format_shortest(worst) + " over 20 random psd weights (<= 1e-8)");
    } else {
        skip("weighted_stationarity", "only defined for ridge = 0");
    }
    return report;
}

int cmd_check(const ExperimentConfig& config, std::ostream& out)
{
    const CheckReport report = run_checks(config);
    for (const std::string& line : report.info) out << "INFO " << line << '\n';
    for (const CheckLine& l : report.lines) {
        const char* tag = l.status == CheckStatus::pass ? "PASS"
                          : l.status == CheckStatus::fail ? "FAIL"
                                                          : "SKIP";
        out << tag << ' ' << l.name << ": " << l.detail << '\n';
    }
    out << (report.passed() ? "all checks passed" : "some checks failed") << '\n';
    return report.passed() ? 0 : 1;
}

namespace {

/// The fields that cannot change results.
ExperimentConfig without_plumbing(ExperimentConfig c)
{
    c.output_dir.clear();
    c.threads = 1;
    return c;
}

}  // namespace

std::uint64_t config_hash(const ExperimentConfig& config)
{
    return fnv1a(to_ini(without_plumbing(config)));
}

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& config,
                    const std::vector<fs::path>& outputs)
{
    fs::create_directories(dir);
    const fs::path path = dir / "manifest.txt";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << "command=" << command << '\n';
    out << "version=" << version() << '\n';
    out << "config_hash=" << hex64(config_hash(config)) << '\n';
    out << "seed=" << config.seed << '\n';
    out << "eigen=" << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION
        << '\n';
    out << "spdlog=" << SPDLOG_VER_MAJOR << '.' << SPDLOG_VER_MINOR << '.' << SPDLOG_VER_PATCH << '\n';
#if defined(__clang__)
    out << "compiler=clang " << __clang_major__ << '.' << __clang_minor__ << '\n';
#elif defined(__GNUC__)
    out << "compiler=gcc " << __GNUC__ << '.' << __GNUC_MINOR__ << '\n';
#endif
    for (const fs::path& p : outputs) out << "output=" << p.filename().string() << '\n';
    out << "\n[config]\n" << to_ini(without_plumbing(config));
    if (!out) throw Error("write to '" + path.string() + "' failed");
}

}  // namespace kreproj
