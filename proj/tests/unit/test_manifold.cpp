#include "generators.hpp"
#include "kreproj/manifold.hpp"

#include <doctest.h>

#include <cmath>

using namespace kreproj;

namespace {

struct Fitted {
    DynamicalSystem system;
    SnapshotSet snapshots;
    KoopmanApproximation model;
};

Fitted fit_pendulum(int degree, Index m = 4000, double dt = 0.01)
{
    const DynamicalSystem p = pendulum_system();
    SnapshotSet s = build_snapshots(p, sample_uniform(p.domain, m, 17), dt);
    KoopmanApproximation k = fit(s, monomial_dictionary(degree, 2));
    return {p, std::move(s), std::move(k)};
}

ClosestPointConfig box_config(const Box& box)
{
    ClosestPointConfig c;
    c.box = box;
    return c;
}

}  // namespace

TEST_CASE("pseudodeterminant multiplies the nonzero singular values")
{
    const Matrix D = Vector((Vector(3) << 2.0, 3.0, 0.0).finished()).asDiagonal();
    CHECK(pseudo_determinant(D) == doctest::Approx(6.0));
    testgen::Gen gen(1);
    const Matrix W = gen.spd(4);
    CHECK(pseudo_determinant(W) == doctest::Approx(W.determinant()).epsilon(1e-10));
    CHECK(pseudo_determinant(Matrix::Zero(3, 3)) == 0.0);
}

TEST_CASE("normalize scales the pseudodeterminant to one")
{
    testgen::Gen gen(2);
    for (int trial = 0; trial < 10; ++trial) {
        const Metric m = normalize(Metric{gen.psd(5)});
        CHECK(m.normalized);
        CHECK(pseudo_determinant(m.W) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK_NOTHROW(m.validate());
    }
}

TEST_CASE("metric validation rejects asymmetric, indefinite, and falsely normalized weights")
{
    Matrix A(2, 2);
    A << 1, 0.5, 0, 1;
    CHECK_THROWS_AS((Metric{A}.validate()), InvalidArgument);
    const Matrix neg = Vector((Vector(2) << 1.0, -1.0).finished()).asDiagonal();
    CHECK_THROWS_AS((Metric{neg}.validate()), InvalidArgument);
    CHECK_THROWS_AS((Metric{2 * Matrix::Identity(2, 2), true}.validate()), InvalidArgument);
    CHECK_NOTHROW(identity_metric(4).validate());
}

TEST_CASE("coordinate metric puts ones at the coordinate observables")
{
    const Dictionary d = monomial_dictionary(2, 2);
    const Metric c = coordinate_metric(d);
    CHECK(c.W.trace() == 2.0);
    CHECK(c.W(1, 1) == 1.0);
    CHECK(c.W(2, 2) == 1.0);
    // DPsi^T C DPsi = I
    const Matrix probes = Matrix::Random(2, 10);
    const MetricConditionReport r = check_metric_condition(d, c, probes);
    CHECK(r.ok);
    CHECK(r.min_abs_det == doctest::Approx(1.0));
    CHECK_THROWS_AS(coordinate_metric(monomial_dictionary(2, 2, std::vector<std::string>{"x"},
                                                          {"x", "v"})),
                    InvalidArgument);
}

TEST_CASE("metric condition detects a weight blind to one direction")
{
    const Dictionary d = monomial_dictionary(1, 2);
    Matrix W = Matrix::Zero(3, 3);
    W(1, 1) = 1;  // sees x only
    const MetricConditionReport r = check_metric_condition(d, Metric{W}, Matrix::Random(2, 5));
    CHECK_FALSE(r.ok);
    CHECK(r.min_abs_det == 0.0);
}

TEST_CASE("geometric metric from residuals: Sigma = diag(4, 1) gives W = diag(1/2, 2)")
{
    Matrix R(2, 2);
    R << 2, -2, 1, 1;  // R R^T / 2 = diag(4, 1)
    const Metric w = geometric_metric_from_residuals(R);
    CHECK(w.normalized);
    CHECK(w.W(0, 0) == doctest::Approx(0.5));
    CHECK(w.W(1, 1) == doctest::Approx(2.0));
    CHECK(std::abs(w.W(0, 1)) <= 1e-14);
    CHECK(pseudo_determinant(w.W) == doctest::Approx(1.0));
}

TEST_CASE("geometric metric regularizes singular Sigma and falls back on zero residuals")
{
    Matrix R = Matrix::Zero(3, 4);
    R.row(0) << 1, -1, 1, -1;
    const Metric w = geometric_metric_from_residuals(R);
    CHECK(w.W.allFinite());
    CHECK_NOTHROW(w.validate());
    CHECK(w.W(1, 1) > w.W(0, 0));

    const Metric id = geometric_metric_from_residuals(Matrix::Zero(3, 4));
    CHECK(id.W == Matrix::Identity(3, 3));
    CHECK_THROWS_AS(geometric_metric_from_residuals(Matrix(0, 0)), InvalidArgument);
}

TEST_CASE("geometric metric of an invariant model is the identity")
{
    const DynamicalSystem e = example1_system();
    const SnapshotSet s = build_snapshots(e, sample_uniform(e.domain, 500, 2), 0.1);
    const Dictionary d((Eigen::MatrixXi(3, 2) << 1, 0, 0, 1, 2, 0).finished(), {"x1", "x2"});
    const Metric w = geometric_metric(fit(s, d), s);
    CHECK(w.W == Matrix::Identity(3, 3));
}

TEST_CASE("closest point in one dimension: {x, x^2}, z = (0, 1) -> x = -1/sqrt(2)")
{
    const Dictionary d(Eigen::MatrixXi((Eigen::MatrixXi(2, 1) << 1, 2).finished()), {"x"});
    const Vector z = (Vector(2) << 0.0, 1.0).finished();
    const Box box(Vector::Constant(1, -2.0), Vector::Constant(1, 2.0));
    const Projection p = project_closest(d, identity_metric(2), z, box_config(box));
    CHECK(p.converged);
    // Two minimizers at +-1/sqrt(2) with cost 3/4; the tie goes to the smaller x.
    CHECK(p.x[0] == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(p.residual * p.residual == doctest::Approx(0.75).epsilon(1e-9));
    CHECK((p.p - d(p.x)).norm() == 0.0);
}

TEST_CASE("closest point agrees with a brute-force grid search")
{
    const Fitted f = fit_pendulum(3);
    const Dictionary& d = f.model.dictionary;
    const Metric w = geometric_metric(f.model, f.snapshots);
    const Box box = f.system.domain;
    testgen::Gen gen(31);
    for (int trial = 0; trial < 15; ++trial) {
        const Vector x = gen.in_box(box);
        const Vector z = d(x) + gen.gaussian(d.size(), 0.05);
        const Projection p = project_closest(d, w, z, box_config(box));
        REQUIRE(p.converged);
        // Dense grid, then the cost of the solver must not exceed the grid minimum.
        double best = std::numeric_limits<double>::infinity();
        const int n = 200;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; j <= n; ++j) {
                const Vector y = box.lo + box.width().cwiseProduct(
                                              (Vector(2) << double(i) / n, double(j) / n).finished());
                best = std::min(best, weighted_squared_norm(Vector(z - d(y)), w.W));
            }
        CHECK(p.residual * p.residual <= best * (1 + 1e-9));
    }
}

TEST_CASE("closest point is unchanged when the metric is scaled")
{
    const Fitted f = fit_pendulum(3);
    const Dictionary& d = f.model.dictionary;
    const Metric w = geometric_metric(f.model, f.snapshots);
    const ClosestPointConfig cfg = box_config(f.system.domain.inflated(0.5));
    testgen::Gen gen(41);
    for (int trial = 0; trial < 30; ++trial) {
        const Vector z = d(gen.in_box(f.system.domain)) + gen.gaussian(d.size(), 1e-3);
        const Projection base = project_closest(d, w, z, cfg);
        for (double alpha : {0.5, 2.0, 10.0}) {
            const Projection scaled = project_closest(d, Metric{alpha * w.W}, z, cfg);
            CHECK((scaled.x - base.x).norm() <= 1e-8);
        }
    }
}

TEST_CASE("coordinate projection equals closest point under the coordinate metric")
{
    testgen::Gen gen(51);
    for (int degree : {2, 3}) {
        const Dictionary d = monomial_dictionary(degree, 2);
        const Box dom = pendulum_system().domain;
        const Projector coord = coordinate_projector(d, dom);
        const Metric c = coordinate_metric(d);
        for (int trial = 0; trial < 50; ++trial) {
            const Vector z = d(gen.in_box(dom)) + gen.gaussian(d.size(), 0.01);
            const Projection a = project(coord, d, z);
            const Projection b = project_closest(d, c, z, box_config(dom.inflated(0.5)));
            CHECK(b.converged);
            CHECK((a.x - b.x).norm() <= 1e-6);
            CHECK((a.p - d(a.x)).norm() == 0.0);
        }
    }
}

TEST_CASE("projection onto the manifold is idempotent")
{
    const Fitted f = fit_pendulum(2);
    const Dictionary& d = f.model.dictionary;
    const Metric w = geometric_metric(f.model, f.snapshots);
    testgen::Gen gen(61);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x = gen.in_box(f.system.domain);
        const Projection p = project_closest(d, w, d(x), box_config(f.system.domain.inflated(0.5)));
        CHECK((p.x - x).norm() <= 1e-8);
        CHECK(p.residual <= 1e-8);
    }
}

TEST_CASE("reconstruction recovers a missing coordinate through a quotient")
{
    const DynamicalSystem l = lorenz_system();
    const Dictionary d = monomial_dictionary(2, 3, std::vector<std::string>{"x"}, {"x", "y", "z"});
    const ReconstructionMap r = auto_reconstruction(d, l.domain);
    const Vector x = (Vector(3) << 3.0, -4.0, 20.0).finished();
    CHECK((r(d(x)) - x).norm() <= 1e-14);
    Vector z = d(x);
    z[*d.find("z")] = 0;
    CHECK_THROWS_AS(r(z), ReconstructionError);
    try {
        r(z);
    } catch (const ReconstructionError& e) {
        CHECK(e.component() == "z");
    }
    // Without a coordinate that stays away from zero there is no reconstruction.
    const Dictionary p = monomial_dictionary(2, 2, std::vector<std::string>{"x"}, {"x", "v"});
    CHECK_THROWS_AS(auto_reconstruction(p, pendulum_system().domain), InvalidArgument);
    CHECK_THROWS_AS(coordinate_reconstruction(p), InvalidArgument);
}

TEST_CASE("closest point without coordinate observables still recovers the state")
{
    const DynamicalSystem l = lorenz_system();
    const Dictionary d = monomial_dictionary(3, 3, std::vector<std::string>{"x"}, {"x", "y", "z"});
    testgen::Gen gen(71);
    ClosestPointConfig cfg = box_config(l.domain.inflated(0.5));
    cfg.seed_from_coordinates = false;
    for (int trial = 0; trial < 10; ++trial) {
        const Vector x = gen.in_box(l.domain);
        const Projection p = project_closest(d, identity_metric(d.size()), d(x), cfg);
        CHECK(p.converged);
        CHECK((p.x - x).norm() <= 1e-6 * (1 + x.norm()));
    }
}

TEST_CASE("projection stays within twice the training error")
{
    const Fitted f = fit_pendulum(3);
    const Metric w = geometric_metric(f.model, f.snapshots);
    const Projector proj =
        closest_point_projector(w, box_config(f.system.domain.inflated(0.5)), "geometric");
    const Matrix pts = sample_uniform(f.system.domain, 100, 99);
    const BoundCheckReport r = projection_bound_check(f.model, w, proj, pts, f.system);
    CHECK(r.violations == 0);
    CHECK(r.unconverged == 0);
    CHECK(r.worst_ratio <= 2.0);
    CHECK(r.entries.size() == 100);
}

TEST_CASE("a single iteration is reported as unconverged")
{
    const Fitted f = fit_pendulum(3);
    const Metric w = geometric_metric(f.model, f.snapshots);
    ClosestPointConfig cfg = box_config(f.system.domain.inflated(0.5));
    cfg.max_iters = 1;
    cfg.multistart_grid = 1;
    cfg.seed_from_coordinates = false;
    const Vector z = f.model.K * f.model.dictionary((Vector(2) << 1.0, 2.0).finished());
    const Projection p = project_closest(f.model.dictionary, w, z, cfg);
    CHECK_FALSE(p.converged);
    CHECK(p.x.allFinite());
}

TEST_CASE("solver configuration is validated")
{
    ClosestPointConfig c;
    c.max_iters = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.multistart_grid = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.grad_tol = -1;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}
