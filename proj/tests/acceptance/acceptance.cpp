// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Optional arguments select criteria by name.

#include "generators.hpp"
#include "kreproj/app.hpp"
#include "kreproj/format.hpp"
#include "kreproj/io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace kreproj;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double time_limit;  // seconds
    std::function<Outcome()> run;
};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

fs::path work_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "kreproj_acceptance" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SnapshotSet snapshots_for(const DynamicalSystem& sys, double dt, Index m, std::uint64_t seed)
{
    return build_snapshots(sys, sample_uniform(sys.domain, m, seed), dt, {}, seed);
}

Dictionary example1_dictionary()
{
    return Dictionary((Eigen::MatrixXi(3, 2) << 1, 0, 0, 1, 2, 0).finished(), {"x1", "x2"});
}

// Closed-form flow of the lifted linear system on {x1, x2, x1^2}.
Matrix example1_exact_operator(double lambda, double t)
{
    Matrix E = Matrix::Zero(3, 3);
    E(0, 0) = std::exp(t);
    E(1, 1) = std::exp(lambda * t);
    E(2, 2) = std::exp(2 * t);
    E(1, 2) = lambda == 2.0 ? -lambda * t * std::exp(2 * t)
                            : -lambda * (std::exp(2 * t) - std::exp(lambda * t)) / (2 - lambda);
    return E;
}

Outcome example1_exactness()
{
    const DynamicalSystem sys = example1_system(1.0);
    const KoopmanApproximation k = fit(snapshots_for(sys, 0.1, 10000, 42), example1_dictionary());
    const double err = (k.K - example1_exact_operator(1.0, 0.1)).norm();
    return {err <= 1e-6, "||K - exp(dt A)||_F = " + num(err) + " (<= 1e-6)"};
}

Outcome coordinate_agreement()
{
    const DynamicalSystem sys = pendulum_system();
    testgen::Gen gen(101);
    ClosestPointConfig cfg;
    cfg.box = sys.domain.inflated(0.5);
    double worst = 0;
    Index unconverged = 0;
    for (int degree : {2, 3}) {
        const Dictionary d = monomial_dictionary(degree, 2);
        const Projector coord = coordinate_projector(d, sys.domain);
        const Metric C = coordinate_metric(d);
        for (int j = 0; j < 200; ++j) {
            const Vector z = d(gen.in_box(sys.domain)) + gen.gaussian(d.size(), 1e-2);
            const Projection a = project(coord, d, z);
            const Projection b = project_closest(d, C, z, cfg);
            unconverged += b.converged ? 0 : 1;
            worst = std::max(worst, (a.x - b.x).norm());
        }
    }
    return {worst <= 1e-6 && unconverged == 0,
            "max |x_coord - x_closest| = " + num(worst) + ", unconverged " +
                std::to_string(unconverged) + " (<= 1e-6)"};
}

Outcome projection_bound()
{
    const DynamicalSystem sys = pendulum_system();
    const SnapshotSet s = snapshots_for(sys, 0.01, 10000, 42);
    const KoopmanApproximation k = fit(s, monomial_dictionary(3, 2));
    const Surrogate g = make_surrogate(k, sys, ProjectorRecipe::geometric, &s);
    const Matrix& W = g.projector.metric->W;
    const Dictionary& d = k.dictionary;
    const auto wnorm = [&](const Vector& v) { return std::sqrt(std::max(0.0, v.dot(W * v))); };

    testgen::Gen gen(202);
    Index violations = 0, unconverged = 0;
    double worst_ratio = 0;
    for (int j = 0; j < 500; ++j) {
        const Vector x = gen.in_box(sys.domain);
        const Vector z = k.K * d(x);
        const Vector truth = d(flow(sys, x, 0.01, 1e-12, 1e-12).state);
        const Projection p = project(g.projector, d, z);
        unconverged += p.converged ? 0 : 1;
        const double lhs = wnorm(p.p - truth);
        const double train = wnorm(z - truth);
        if (lhs > 2 * train + 1e-8 * (1 + train)) ++violations;
        if (train > 0) worst_ratio = std::max(worst_ratio, lhs / train);
    }
    return {violations == 0 && unconverged == 0,
            std::to_string(violations) + " violations over 500 points, worst ratio " +
                num(worst_ratio) + ", unconverged " + std::to_string(unconverged)};
}

Outcome weighted_stationarity()
{
    const DynamicalSystem sys = pendulum_system();
    const SnapshotSet s = snapshots_for(sys, 0.01, 10000, 42);
    const Dictionary d = monomial_dictionary(3, 2);
    const KoopmanApproximation k = fit(s, d);

    // Gram matrices in the basis where each observable has unit max over the data.
    const Index N = d.size(), m = s.count();
    Matrix PX(N, m), PY(N, m);
    for (Index j = 0; j < m; ++j) {
        PX.col(j) = d(s.X.col(j));
        PY.col(j) = d(s.Y.col(j));
    }
    const Vector scale = PX.cwiseAbs().rowwise().maxCoeff();
    const Matrix Si = scale.cwiseInverse().asDiagonal();
    const Matrix G = Si * (PX * PX.transpose()) * Si / double(m);
    const Matrix C = Si * (PY * PX.transpose()) * Si / double(m);
    const Matrix Kh = Si * k.K * scale.asDiagonal();
    const Matrix R = Kh * G - C;

    testgen::Gen gen(303);
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix W = gen.psd(N);
        const double w2 = Eigen::SelfAdjointEigenSolver<Matrix>(W).eigenvalues().maxCoeff();
        worst = std::max(worst, (W * R).norm() / (w2 * C.norm()));
    }
    return {worst <= 1e-8, "max relative residual " + num(worst) + " over 20 psd weights (<= 1e-8)"};
}

Outcome order_of_accuracy()
{
    const DynamicalSystem sys = duffing_system();
    const Dictionary d = monomial_dictionary(3, 2);
    const std::vector<double> dts{0.002, 0.005, 0.01, 0.02, 0.05};
    const Matrix pts = sample_uniform(sys.domain, 500, 4242);
    std::vector<double> lx, ly;
    std::string errs;
    for (double dt : dts) {
        const KoopmanApproximation k = fit(snapshots_for(sys, dt, 10000, 42), d);
        const Surrogate c = make_surrogate(k, sys, ProjectorRecipe::coordinate);
        double worst = 0;
        for (Index j = 0; j < pts.cols(); ++j) {
            const double e = one_step_error(c, sys, pts.col(j)).value;
            if (std::isfinite(e)) worst = std::max(worst, e);
        }
        lx.push_back(std::log(dt));
        ly.push_back(std::log(worst));
        errs += (errs.empty() ? "" : ",") + num(worst);
    }
    const double n = double(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {slope >= 1.7 && slope <= 2.3,
            "log-log slope " + num(slope) + " (in [1.7, 2.3]); max errors " + errs};
}

Outcome figure3()
{
    ExperimentConfig c = figure_config("fig3");
    c.output_dir = work_dir("fig3").string();
    std::ostringstream log;
    reproduce("fig3", c, log);
    const auto series = read_mean_error(fs::path(c.output_dir) / "fig3_mean_error.csv");
    const auto find = [&](const std::string& name) -> const MeanErrorSeries& {
        for (const MeanErrorSeries& s : series)
            if (s.name == name) return s;
        throw Error("missing series " + name);
    };
    const MeanErrorSeries& proj = find("coordinate_V3");
    const MeanErrorSeries& unproj = find("none_V5");
    Index bad = 0;
    for (std::size_t k = 0; k < proj.times.size(); ++k) {
        const double t = proj.times[k];
        if (t < 0.5 - 1e-9 || t > 10 + 1e-9) continue;
        if (!(proj.mean_error[k] < unproj.mean_error[k])) ++bad;
    }
    const double p10 = proj.mean_error.back(), u10 = unproj.mean_error.back();
    const Rollout exemplar = read_rollout(fs::path(c.output_dir) / "fig3_rollout_none_V5.csv");
    const bool separated = exemplar.diverged_at || unproj.diverged > 0 || u10 >= 10 * p10;
    return {bad == 0 && separated && proj.times.back() >= 10 - 1e-9,
            std::to_string(bad) + " times in [0.5, 10] with projected V3 >= unprojected V5; at t=10 " +
                num(p10) + " vs " + num(u10) + ", unprojected diverged " +
                std::to_string(unproj.diverged) + "/100"};
}

Outcome figure5()
{
    ExperimentConfig c = figure_config("fig45");
    c.output_dir = work_dir("fig45").string();
    std::ostringstream log;
    reproduce("fig45", c, log);
    const ErrorGrid g = read_grid(fs::path(c.output_dir) / "fig45_diff_V3.csv");
    Index converged = 0, nonpositive = 0;
    for (Index k = 0; k < g.node_count(); ++k) {
        if (!g.converged[static_cast<std::size_t>(k)]) continue;
        ++converged;
        nonpositive += g.values[k] <= 0 ? 1 : 0;
    }
    const double frac = converged ? double(nonpositive) / double(converged) : 0.0;
    return {g.node_count() == 2500 && frac >= 0.99,
            std::to_string(nonpositive) + " of " + std::to_string(converged) +
                " converged nodes non-positive (" + num(100 * frac) + "% >= 99%)"};
}

Index inversions(const std::vector<double>& v)
{
    Index n = 0;
    for (std::size_t i = 1; i < v.size(); ++i) n += v[i] < v[i - 1] ? 1 : 0;
    return n;
}

Outcome figure6()
{
    ExperimentConfig c = figure_config("fig6");
    c.output_dir = work_dir("fig6").string();
    std::ostringstream log;
    reproduce("fig6", c, log);
    const SweepResult r = read_sweep(fs::path(c.output_dir) / "fig6_sweep_V3.csv");
    const SweepSeries* coord = nullptr;
    const SweepSeries* geo = nullptr;
    for (const SweepSeries& s : r.series) {
        if (s.projector == "coordinate") coord = &s;
        if (s.projector == "geometric") geo = &s;
    }
    if (!coord || !geo) return {false, "sweep is missing a projector"};
    Index above = 0;
    for (std::size_t i = 0; i < r.dts.size(); ++i)
        if (!(geo->median[i] <= coord->median[i])) ++above;
    const Index ic = inversions(coord->median), ig = inversions(geo->median);
    return {above == 0 && ic <= 1 && ig <= 1,
            std::to_string(above) + " of " + std::to_string(r.dts.size()) +
                " dts with geometric > coordinate; inversions coordinate " + std::to_string(ic) +
                ", geometric " + std::to_string(ig) + " (<= 1)"};
}

Outcome figure7()
{
    ExperimentConfig c = figure_config("fig7");
    c.output_dir = work_dir("fig7").string();
    std::ostringstream log;
    reproduce("fig7", c, log);
    const ErrorSeries co = read_series(fs::path(c.output_dir) / "fig7_series_coordinate.csv");
    const ErrorSeries ge = read_series(fs::path(c.output_dir) / "fig7_series_geometric.csv");
    const double mc = quantile(co.errors, 0.5), mg = quantile(ge.errors, 0.5);
    return {co.errors.size() == 500 && mg < mc,
            "median geometric " + num(mg) + " < coordinate " + num(mc)};
}

Outcome scaling_invariance()
{
    const DynamicalSystem sys = pendulum_system();
    const SnapshotSet s = snapshots_for(sys, 0.01, 10000, 42);
    const KoopmanApproximation k = fit(s, monomial_dictionary(3, 2));
    const Dictionary& d = k.dictionary;
    const Metric w = geometric_metric(k, s);
    ClosestPointConfig cfg;
    cfg.box = sys.domain.inflated(0.5);
    testgen::Gen gen(404);
    double worst = 0;
    for (int j = 0; j < 100; ++j) {
        const Vector z = d(gen.in_box(sys.domain)) + gen.gaussian(d.size(), 1e-3);
        const Vector base = project_closest(d, w, z, cfg).x;
        for (double alpha : {0.5, 2.0, 10.0})
            worst = std::max(worst, (project_closest(d, Metric{alpha * w.W}, z, cfg).x - base).norm());
    }
    return {worst <= 1e-8, "max |x(alpha W) - x(W)| = " + num(worst) + " (<= 1e-8)"};
}

Outcome jacobian_fd()
{
    struct Case {
        std::string name;
        Dictionary dict;
        Box domain;
    };
    const DynamicalSystem l = lorenz_system();
    const std::vector<Case> cases{
        {"example1", example1_dictionary(), example1_system().domain},
        {"pendulum_V2", monomial_dictionary(2, 2), pendulum_system().domain},
        {"pendulum_V3", monomial_dictionary(3, 2), pendulum_system().domain},
        {"duffing_V3", monomial_dictionary(3, 2), duffing_system().domain},
        {"duffing_V5", monomial_dictionary(5, 2), duffing_system().domain},
        {"lorenz_V4", monomial_dictionary(4, 3, std::vector<std::string>{"x"}, l.state_labels), l.domain},
    };
    testgen::Gen gen(505);
    double worst = 0;
    std::string where;
    for (const Case& c : cases) {
        for (int j = 0; j < 100; ++j) {
            const Vector x = gen.in_box(c.domain);
            const double h = 1e-5 * std::max(1.0, x.cwiseAbs().maxCoeff());
            const Matrix J = c.dict.jacobian<double>(x);
            const double e = (J - testgen::fd_jacobian(c.dict, x, h)).norm() / std::max(1.0, J.norm());
            if (e > worst) {
                worst = e;
                where = c.name;
            }
        }
    }
    return {worst <= 1e-6, "max relative error " + num(worst) + " (" + where + ", <= 1e-6)"};
}

}  // namespace

int main(int argc, char** argv)
{
    spdlog::set_level(spdlog::level::err);
    const std::vector<Criterion> criteria{
        {"example1_exactness", 10, example1_exactness},
        {"coordinate_agreement", 30, coordinate_agreement},
        {"projection_bound", 60, projection_bound},
        {"weighted_stationarity", 10, weighted_stationarity},
        {"order_of_accuracy", 120, order_of_accuracy},
        {"figure3_rollouts", 300, figure3},
        {"figure5_difference_grid", 600, figure5},
        {"figure6_timestep_sweep", 600, figure6},
        {"figure7_lorenz_series", 600, figure7},
        {"scaling_invariance", 600, scaling_invariance},
        {"jacobian_fd", 600, jacobian_fd},
    };
    std::vector<std::string> selected(argv + 1, argv + argc);

    int failures = 0;
    for (const Criterion& c : criteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.name) == selected.end())
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.time_limit;
        const bool ok = o.ok && in_time;
        failures += ok ? 0 : 1;
        std::cout << (ok ? "PASS " : "FAIL ") << c.name << ": " << o.detail << "; " << num(secs)
                  << " s (<= " << num(c.time_limit) << " s)" << (in_time ? "" : " TIME LIMIT EXCEEDED")
                  << std::endl;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
