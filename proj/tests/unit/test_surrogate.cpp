#include "generators.hpp"
#include "kreproj/surrogate.hpp"

#include <doctest.h>

using namespace kreproj;

namespace {

const Dictionary& invariant_dictionary()
{
    static const Dictionary d((Eigen::MatrixXi(3, 2) << 1, 0, 0, 1, 2, 0).finished(), {"x1", "x2"});
    return d;
}

struct Setup {
    DynamicalSystem system;
    SnapshotSet snapshots;
    KoopmanApproximation model;
};

Setup fitted(const DynamicalSystem& sys, const Dictionary& d, double dt, Index m = 3000)
{
    SnapshotSet s = build_snapshots(sys, sample_uniform(sys.domain, m, 5), dt);
    KoopmanApproximation k = fit(s, d);
    return {sys, std::move(s), std::move(k)};
}

}  // namespace

TEST_CASE("an invariant dictionary reproduces the flow for every projector")
{
    const Setup s = fitted(example1_system(), invariant_dictionary(), 0.1);
    testgen::Gen gen(3);
    for (ProjectorRecipe r : {ProjectorRecipe::none, ProjectorRecipe::coordinate, ProjectorRecipe::geometric}) {
        const Surrogate sur = make_surrogate(s.model, s.system, r, &s.snapshots);
        for (int trial = 0; trial < 10; ++trial) {
            const Vector x = 0.5 * gen.in_box(s.system.domain);
            const StepResult st = step(sur, x);
            CHECK(st.converged);
            CHECK((st.state - flow(s.system, x, 0.1, 1e-12, 1e-12).state).norm() <= 1e-8);
        }
    }
}

TEST_CASE("lifted rollout of an invariant model follows the true trajectory")
{
    const Setup s = fitted(example1_system(), invariant_dictionary(), 0.05);
    const Vector x0 = (Vector(2) << 0.2, -0.1).finished();
    const Rollout r = rollout_lifted(s.model, x0, 10);
    REQUIRE(r.states.size() == 11);
    FlowOptions fo;
    fo.rel_tol = fo.abs_tol = 1e-12;
    const std::vector<Vector> truth = trajectory(s.system, x0, 0.05, 10, fo);
    for (std::size_t k = 0; k < truth.size(); ++k) CHECK((r.states[k] - truth[k]).norm() <= 1e-8);
    CHECK(r.lifted.size() == 11);
    CHECK(r.times.back() == doctest::Approx(0.5));
}

TEST_CASE("rollout dispatches to the lifted model for projector none")
{
    const Setup s = fitted(duffing_system(), monomial_dictionary(3, 2), 0.01);
    const Surrogate none = make_surrogate(s.model, s.system, ProjectorRecipe::none);
    const Vector x0 = (Vector(2) << 1.0, 0.5).finished();
    const Rollout a = rollout(none, x0, 20);
    const Rollout b = rollout_lifted(s.model, x0, 20, none.region);
    REQUIRE(a.states.size() == b.states.size());
    for (std::size_t k = 0; k < a.states.size(); ++k) CHECK(a.states[k] == b.states[k]);
}

TEST_CASE("coordinate rollout equals repeated coordinate steps")
{
    const Setup s = fitted(duffing_system(), monomial_dictionary(3, 2), 0.01);
    const Surrogate c = make_surrogate(s.model, s.system, ProjectorRecipe::coordinate);
    Vector x = (Vector(2) << 1.5, 0.0).finished();
    const Rollout r = rollout(c, x, 50);
    REQUIRE(r.states.size() == 51);
    for (int k = 1; k <= 50; ++k) {
        const Vector z = s.model.K * s.model.dictionary(x);
        x = z.segment(1, 2);
        CHECK((r.states[static_cast<std::size_t>(k)] - x).norm() <= 1e-14);
    }
    CHECK_FALSE(r.diverged_at);
}

TEST_CASE("a rollout that leaves the region stops and reports the step")
{
    const Setup s = fitted(example1_system(), invariant_dictionary(), 0.1);
    const Surrogate c = make_surrogate(s.model, s.system, ProjectorRecipe::coordinate);
    const Rollout r = rollout(c, (Vector(2) << 1.0, 0.0).finished(), 30);
    REQUIRE(r.diverged_at);
    CHECK(*r.diverged_at == 7);  // e^0.7 > 2
    CHECK(r.states.size() == 7);
}

TEST_CASE("strict mode turns non-convergence into StepError")
{
    const Setup s = fitted(pendulum_system(), monomial_dictionary(3, 2), 0.01);
    SurrogateOptions so;
    so.solver.max_iters = 1;
    so.solver.multistart_grid = 1;
    so.solver.seed_from_coordinates = false;
    so.strict = true;
    const Surrogate g = make_surrogate(s.model, s.system, ProjectorRecipe::geometric, &s.snapshots, so);
    const Vector x = (Vector(2) << 1.0, 2.0).finished();
    CHECK_THROWS_AS(step(g, x), StepError);
    try {
        step(g, x);
    } catch (const StepError& e) {
        CHECK(e.lifted().size() == 10);
    }
}

TEST_CASE("reconstruction failure surfaces as StepError and ends the rollout")
{
    const DynamicalSystem l = lorenz_system();
    const Dictionary d = monomial_dictionary(2, 3, std::vector<std::string>{"x"}, {"x", "y", "z"});
    const Setup s = fitted(l, d, 0.01, 2000);
    Surrogate c = make_surrogate(s.model, l, ProjectorRecipe::coordinate);
    c.model.K.row(*d.find("z")).setZero();
    CHECK_THROWS_AS(step(c, (Vector(3) << 1.0, 1.0, 25.0).finished()), StepError);
    const Rollout r = rollout(c, (Vector(3) << 1.0, 1.0, 25.0).finished(), 5);
    CHECK(r.diverged_at == Index(1));
}

TEST_CASE("geometric surrogate needs snapshot data")
{
    const Setup s = fitted(pendulum_system(), monomial_dictionary(2, 2), 0.01, 500);
    CHECK_THROWS_AS(make_surrogate(s.model, s.system, ProjectorRecipe::geometric), InvalidArgument);
    CHECK_THROWS_AS(rollout(make_surrogate(s.model, s.system, ProjectorRecipe::coordinate),
                            Vector::Zero(2), 0),
                    InvalidArgument);
}

TEST_CASE("recipe names and descriptors")
{
    CHECK(parse_projector_recipe("geometric") == ProjectorRecipe::geometric);
    CHECK(to_string(ProjectorRecipe::coordinate) == "coordinate");
    CHECK_THROWS_AS(parse_projector_recipe("spectral"), InvalidArgument);
    const Setup s = fitted(pendulum_system(), monomial_dictionary(2, 2), 0.01, 500);
    const Surrogate c = make_surrogate(s.model, s.system, ProjectorRecipe::coordinate);
    CHECK(c.descriptor() == "coordinate projection, N=6, dt=0.01");
}
