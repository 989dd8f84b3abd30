#include "generators.hpp"
#include "kreproj/dictionary.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace kreproj;

namespace {

Index binomial(Index n, Index k)
{
    Index r = 1;
    for (Index i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// prod_j x_j^{a_ij} via std::pow, independent of the power table.
Vector monomials_by_pow(const Dictionary& dict, const Vector& x)
{
    Vector out(dict.size());
    for (Index i = 0; i < dict.size(); ++i) {
        double v = 1;
        for (Index j = 0; j < x.size(); ++j) v *= std::pow(x[j], dict.exponents()(i, j));
        out[i] = v;
    }
    return out;
}

}  // namespace

TEST_CASE("graded order: constant, then degree one in coordinate order, ...")
{
    const Dictionary d = monomial_dictionary(2, 2, std::vector<Exponent>{}, {"x", "v"});
    const std::vector<std::string> expected{"1", "x", "v", "x^2", "x*v", "v^2"};
    CHECK(d.labels() == expected);
    REQUIRE(d.coordinate_indices());
    CHECK((*d.coordinate_indices())[0] == 1);
    CHECK((*d.coordinate_indices())[1] == 2);
    CHECK(d.max_degree() == 2);

    const Dictionary l = monomial_dictionary(1, 3, std::vector<Exponent>{}, {});
    CHECK(l.labels() == std::vector<std::string>{"1", "x", "y", "z"});
}

TEST_CASE("dictionary size is binomial(n + d, d)")
{
    for (Index d = 1; d <= 3; ++d)
        for (int n = 0; n <= 6; ++n) {
            const std::vector<Exponent> all = graded_lex_exponents(n, d);
            CHECK(static_cast<Index>(all.size()) == binomial(n + d, d));
            std::set<Exponent> unique(all.begin(), all.end());
            CHECK(unique.size() == all.size());
            int previous = 0;
            for (const Exponent& e : all) {
                int deg = 0;
                for (int a : e) deg += a;
                CHECK(deg >= previous);
                CHECK(deg <= n);
                previous = deg;
            }
        }
}

TEST_CASE("exclusions by label and by exponent")
{
    const Dictionary l = monomial_dictionary(4, 3, std::vector<std::string>{"x"}, {"x", "y", "z"});
    CHECK(l.size() == binomial(7, 3) - 1);
    CHECK_FALSE(l.find("x"));
    CHECK(l.find("x*z"));
    CHECK_FALSE(l.coordinate_indices());

    const Dictionary e = monomial_dictionary(2, 2, std::vector<std::string>{"1", "x1*x2", "x2^2"},
                                             {"x1", "x2"});
    CHECK(e.labels() == std::vector<std::string>{"x1", "x2", "x1^2"});

    CHECK_THROWS_AS(monomial_dictionary(2, 2, std::vector<std::string>{"x^3"}, {"x", "v"}),
                    InvalidArgument);
    CHECK_THROWS_AS(monomial_dictionary(2, 2, std::vector<std::string>{"w"}, {"x", "v"}),
                    InvalidArgument);
}

TEST_CASE("explicit exponent tables are validated")
{
    Eigen::MatrixXi dup(2, 2);
    dup << 1, 0, 1, 0;
    CHECK_THROWS_AS(Dictionary{dup}, InvalidArgument);
    Eigen::MatrixXi neg(1, 2);
    neg << -1, 0;
    CHECK_THROWS_AS(Dictionary{neg}, InvalidArgument);
    Eigen::MatrixXi ok(2, 2);
    ok << 0, 1, 2, 0;
    const Dictionary d(ok, {"a", "b"});
    CHECK(d.labels() == std::vector<std::string>{"b", "a^2"});
    CHECK(d.find(Exponent{2, 0}) == Index(1));
}

TEST_CASE("evaluation matches std::pow at random points")
{
    testgen::Gen gen(3);
    const Box box(Vector::Constant(3, -2.0), Vector::Constant(3, 2.0));
    const Dictionary d = monomial_dictionary(5, 3);
    for (int trial = 0; trial < 100; ++trial) {
        const Vector x = gen.in_box(box);
        const Vector a = d(x);
        const Vector b = monomials_by_pow(d, x);
        CHECK((a - b).norm() <= 1e-13 * (1 + b.norm()));
    }
    const Matrix pts = Matrix::Random(3, 7);
    const Matrix cols = d.evaluate_columns(pts);
    for (Index j = 0; j < 7; ++j) CHECK((cols.col(j) - d(pts.col(j))).norm() == 0.0);
}

TEST_CASE("jacobian agrees with central differences")
{
    testgen::Gen gen(9);
    for (Index dim = 1; dim <= 3; ++dim) {
        const Dictionary d = monomial_dictionary(4, dim);
        const Box box(Vector::Constant(dim, -3.0), Vector::Constant(dim, 3.0));
        for (int trial = 0; trial < 100; ++trial) {
            const Vector x = gen.in_box(box);
            const Matrix J = d.jacobian<double>(x);
            const Matrix F = testgen::fd_jacobian(d, x, 1e-5);
            CHECK((J - F).norm() <= 1e-7 * J.norm());
            CHECK(jacobian_fd_error(d, x) <= 1e-7);
        }
    }
}

TEST_CASE("jacobian of x^2*v by hand")
{
    const Dictionary d = monomial_dictionary(3, 2, std::vector<Exponent>{}, {"x", "v"});
    const Index i = *d.find("x^2*v");
    const Vector x = (Vector(2) << 1.5, -2.0).finished();
    const Matrix J = d.jacobian<double>(x);
    CHECK(J(i, 0) == doctest::Approx(2 * 1.5 * -2.0));
    CHECK(J(i, 1) == doctest::Approx(1.5 * 1.5));
    CHECK(J.row(0).norm() == 0.0);
}

TEST_CASE("evaluation is templated on the scalar type")
{
    const Dictionary d = monomial_dictionary(3, 2);
    VectorX<long double> x(2);
    x << 0.1L, 0.3L;
    const VectorX<long double> psi = d.evaluate<long double>(x);
    CHECK(static_cast<double>(psi[*d.find("x*v^2")]) == doctest::Approx(0.1 * 0.09));
    const VectorX<float> pf = d.evaluate<float>(VectorX<float>::Constant(2, 2.0f));
    CHECK(pf[d.size() - 1] == 8.0f);
}

TEST_CASE("max_abs_over bounds sampled values and is attained at a corner")
{
    testgen::Gen gen(4);
    const Box box((Vector(2) << -M_PI, -3.0).finished(), (Vector(2) << M_PI, 1.0).finished());
    const Dictionary d = monomial_dictionary(4, 2);
    const Vector bound = d.max_abs_over(box);
    Vector seen = Vector::Zero(d.size());
    for (int trial = 0; trial < 2000; ++trial) seen = seen.cwiseMax(d(gen.in_box(box)).cwiseAbs());
    for (const Vector& corner : {box.lo, box.hi, (Vector(2) << box.lo[0], box.hi[1]).finished(),
                                 (Vector(2) << box.hi[0], box.lo[1]).finished()})
        seen = seen.cwiseMax(d(corner).cwiseAbs());
    CHECK(((bound - seen).array().abs() <= 1e-12 * bound.array()).all());
}

TEST_CASE("wrong state length is rejected")
{
    const Dictionary d = monomial_dictionary(2, 2);
    CHECK_THROWS_AS(d(Vector::Zero(3)), InvalidArgument);
    CHECK_THROWS_AS(d.jacobian<double>(Vector::Zero(1)), InvalidArgument);
}
