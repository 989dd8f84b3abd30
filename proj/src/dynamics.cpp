#include "kreproj/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace kreproj {

Box::Box(Vector lower, Vector upper) : lo(std::move(lower)), hi(std::move(upper))
{
    if (lo.size() != hi.size() || lo.size() == 0)
        throw InvalidArgument("Box: bounds must be non-empty and of equal length");
    for (Index i = 0; i < lo.size(); ++i)
        if (!(lo[i] < hi[i]))
            throw InvalidArgument("Box: lower bound must be strictly below upper bound on axis " +
                                  std::to_string(i));
}

bool Box::contains(const Eigen::Ref<const Vector>& x) const
{
    return x.size() == lo.size() && (x.array() >= lo.array()).all() &&
           (x.array() <= hi.array()).all();
}

Box Box::inflated(double fraction) const
{
    const Vector margin = fraction * width();
    return Box(lo - margin, hi + margin);
}

Vector Box::clamp(const Eigen::Ref<const Vector>& x) const
{
    return x.cwiseMax(lo).cwiseMin(hi);
}

void DynamicalSystem::validate() const
{
    if (dimension < 1) throw InvalidArgument("system '" + name + "': dimension must be positive");
    if (!rhs) throw InvalidArgument("system '" + name + "': missing right-hand side");
    if (domain.dim() != dimension)
        throw InvalidArgument("system '" + name + "': domain dimension mismatch");
    if (!state_labels.empty() && static_cast<Index>(state_labels.size()) != dimension)
        throw InvalidArgument("system '" + name + "': state label count mismatch");
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

double error_norm(const Vector& err, const Vector& y0, const Vector& y1, double rtol, double atol)
{
    const Vector scale = (atol + rtol * y0.cwiseAbs().cwiseMax(y1.cwiseAbs()).array()).matrix();
    return std::sqrt((err.cwiseQuotient(scale)).squaredNorm() / static_cast<double>(err.size()));
}

// Hairer, Norsett & Wanner, "Solving ODEs I", II.4 starting step heuristic.
double initial_step(const DynamicalSystem& sys, const Vector& y, const Vector& f0, double rtol,
                    double atol, double t_end)
{
    const Vector scale = (atol + rtol * y.cwiseAbs().array()).matrix();
    const double n = static_cast<double>(y.size());
    const double d0 = std::sqrt(y.cwiseQuotient(scale).squaredNorm() / n);
    const double d1 = std::sqrt(f0.cwiseQuotient(scale).squaredNorm() / n);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, t_end);
    const Vector f1 = sys.rhs(y + h0 * f0);
    const double d2 = std::sqrt((f1 - f0).cwiseQuotient(scale).squaredNorm() / n) / h0;
    const double h1 = (std::max(d1, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                  : std::pow(0.01 / std::max(d1, d2), 1.0 / 5);
    return std::min({100 * h0, h1, t_end});
}

}  // namespace

FlowResult flow(const DynamicalSystem& system, const Vector& x0, double t, const FlowOptions& opt)
{
    if (x0.size() != system.dimension)
        throw InvalidArgument("flow: initial state has length " + std::to_string(x0.size()) +
                              ", system '" + system.name + "' has dimension " +
                              std::to_string(system.dimension));
    if (!(t >= 0)) throw InvalidArgument("flow: duration must be non-negative");
    if (!(opt.rel_tol > 0) || !(opt.abs_tol > 0))
        throw InvalidArgument("flow: tolerances must be positive");

    FlowResult result{x0, false, 0};
    if (t == 0) return result;

    const Box region = system.domain.inflated(opt.domain_margin);
    Vector y = x0;
    Vector k1 = system.rhs(y);
    double time = 0;
    double h = initial_step(system, y, k1, opt.rel_tol, opt.abs_tol, t);
    const double h_min = 16 * std::numeric_limits<double>::epsilon() * t;

    while (time < t) {
        if (result.steps_taken >= opt.max_steps)
            throw IntegrationError("flow: step budget exhausted at t=" + std::to_string(time), time);
        bool last = false;
        if (time + h >= t) {
            h = t - time;
            last = true;
        }

        const Vector k2 = system.rhs(y + h * a21 * k1);
        const Vector k3 = system.rhs(y + h * (a31 * k1 + a32 * k2));
        const Vector k4 = system.rhs(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const Vector k5 = system.rhs(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Vector k6 =
            system.rhs(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const Vector y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Vector k7 = system.rhs(y_new);
        const Vector err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double en = error_norm(err, y, y_new, opt.rel_tol, opt.abs_tol);
        if (!y_new.allFinite() || !k7.allFinite() || !std::isfinite(en))
            en = std::numeric_limits<double>::infinity();

        if (en <= 1.0) {
            time = last ? t : time + h;
            y = y_new;
            k1 = k7;
            ++result.steps_taken;
            if (!region.contains(y)) {
                result.left_domain = true;
                break;
            }
            const double factor = en == 0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            h *= factor;
        } else {
            h *= std::isfinite(en) ? std::max(0.2, 0.9 * std::pow(en, -0.2)) : 0.2;
            if (h < h_min) {
                std::ostringstream msg;
                msg << "flow: non-finite state or step-size underflow in system '" << system.name
                    << "' at t=" << time;
                throw IntegrationError(msg.str(), time);
            }
        }
    }
    result.state = y;
    return result;
}

FlowResult flow(const DynamicalSystem& system, const Vector& x0, double t, double rel_tol,
                double abs_tol)
{
    FlowOptions opt;
    opt.rel_tol = rel_tol;
    opt.abs_tol = abs_tol;
    return flow(system, x0, t, opt);
}

std::vector<Vector> trajectory(const DynamicalSystem& system, const Vector& x0, double dt,
                               Index n_steps, const FlowOptions& options)
{
    std::vector<Vector> states{x0};
    states.reserve(static_cast<std::size_t>(n_steps) + 1);
    Vector x = x0;
    for (Index k = 0; k < n_steps; ++k) {
        const FlowResult r = flow(system, x, dt, options);
        if (r.left_domain) break;
        x = r.state;
        states.push_back(x);
    }
    return states;
}

DynamicalSystem example1_system(double lambda)
{
    DynamicalSystem s;
    s.name = "example1";
    s.dimension = 2;
    s.parameters = {{"lambda", lambda}};
    s.rhs = [lambda](const Vector& x) {
        Vector dx(2);
        dx << x[0], lambda * (x[1] - x[0] * x[0]);
        return dx;
    };
    s.domain = Box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0));
    s.state_labels = {"x1", "x2"};
    return s;
}

DynamicalSystem example2_system(double lambda)
{
    DynamicalSystem s = example1_system(lambda);
    s.name = "example2";
    s.rhs = [lambda](const Vector& x) {
        Vector dx(2);
        dx << -x[0] * x[0], lambda * (x[1] - x[0] * x[0]);
        return dx;
    };
    return s;
}

DynamicalSystem duffing_system()
{
    DynamicalSystem s;
    s.name = "duffing";
    s.dimension = 2;
    s.rhs = [](const Vector& x) {
        Vector dx(2);
        dx << x[1], x[0] - x[0] * x[0] * x[0];
        return dx;
    };
    s.domain = Box(Vector::Constant(2, -2.0), Vector::Constant(2, 2.0));
    s.state_labels = {"x", "v"};
    return s;
}

DynamicalSystem pendulum_system()
{
    DynamicalSystem s;
    s.name = "pendulum";
    s.dimension = 2;
    s.rhs = [](const Vector& x) {
        Vector dx(2);
        dx << x[1], -std::sin(x[0]);
        return dx;
    };
    s.domain = Box(Vector{{-std::numbers::pi, -3.0}}, Vector{{std::numbers::pi, 3.0}});
    s.state_labels = {"x", "v"};
    return s;
}

DynamicalSystem lorenz_system(double sigma, double rho, double beta)
{
    DynamicalSystem s;
    s.name = "lorenz";
    s.dimension = 3;
    s.parameters = {{"sigma", sigma}, {"rho", rho}, {"beta", beta}};
    s.rhs = [sigma, rho, beta](const Vector& x) {
        Vector dx(3);
        dx << sigma * (x[1] - x[0]), x[0] * (rho - x[2]) - x[1], x[0] * x[1] - beta * x[2];
        return dx;
    };
    s.domain = Box(Vector{{-20.0, -20.0, 10.0}}, Vector{{20.0, 20.0, 50.0}});
    s.state_labels = {"x", "y", "z"};
    return s;
}

DynamicalSystem zero_system(Index dimension)
{
    DynamicalSystem s;
    s.name = "zero";
    s.dimension = dimension;
    s.rhs = [dimension](const Vector&) { return Vector::Zero(dimension).eval(); };
    s.domain = Box(Vector::Constant(dimension, -1.0), Vector::Constant(dimension, 1.0));
    for (Index i = 0; i < dimension; ++i) s.state_labels.push_back("x" + std::to_string(i + 1));
    return s;
}

std::vector<DynamicalSystem> builtin_systems()
{
    return {example1_system(), example2_system(), duffing_system(),
            pendulum_system(), lorenz_system(),   zero_system()};
}

DynamicalSystem make_system(const std::string& name, const std::map<std::string, double>& overrides)
{
    auto param = [&](const std::string& key, double fallback) {
        auto it = overrides.find(key);
        return it == overrides.end() ? fallback : it->second;
    };
    auto reject_unknown = [&](std::initializer_list<const char*> known) {
        for (const auto& [key, value] : overrides) {
            if (std::find_if(known.begin(), known.end(),
                             [&](const char* k) { return key == k; }) == known.end())
                throw InvalidArgument("system '" + name + "' has no parameter '" + key + "'");
        }
    };

    if (name == "example1") {
        reject_unknown({"lambda"});
        return example1_system(param("lambda", 1.0));
    }
    if (name == "example2") {
        reject_unknown({"lambda"});
        return example2_system(param("lambda", 1.0));
    }
    if (name == "duffing") {
        reject_unknown({});
        return duffing_system();
    }
    if (name == "pendulum") {
        reject_unknown({});
        return pendulum_system();
    }
    if (name == "lorenz") {
        reject_unknown({"sigma", "rho", "beta"});
        return lorenz_system(param("sigma", 10.0), param("rho", 28.0), param("beta", 8.0 / 3.0));
    }
    if (name == "zero") {
        reject_unknown({"dimension"});
        return zero_system(static_cast<Index>(param("dimension", 2)));
    }
    throw InvalidArgument("unknown system '" + name + "'");
}

}  // namespace kreproj
