#pragma once

#include "kreproj/types.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace kreproj {

/// Autonomous ODE x' = f(x) on a box domain.
struct DynamicalSystem {
    using Rhs = std::function<Vector(const Vector&)>;

    std::string name;
    Index dimension = 0;
    Rhs rhs;
    Box domain;
    std::map<std::string, double> parameters;
    std::vector<std::string> state_labels;

    /// Throws InvalidArgument when the fields are inconsistent.
    void validate() const;
};

struct FlowOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-10;
    /// Integration stops and flags left_domain outside domain.inflated(margin).
    double domain_margin = 0.5;
    long max_steps = 1'000'000;
};

struct FlowResult {
    Vector state;
    bool left_domain = false;
    long steps_taken = 0;
};

/// Solution of x' = f(x) at time t from x0 using a Dormand-Prince 5(4) pair
/// with adaptive step control.
FlowResult flow(const DynamicalSystem& system, const Vector& x0, double t,
                const FlowOptions& options = {});

FlowResult flow(const DynamicalSystem& system, const Vector& x0, double t, double rel_tol,
                double abs_tol);

/// States x(k*dt; x0) for k = 0..n_steps. Stops early (shorter result) if the
/// trajectory leaves the inflated domain.
std::vector<Vector> trajectory(const DynamicalSystem& system, const Vector& x0, double dt,
                               Index n_steps, const FlowOptions& options = {});

// Benchmark systems. Parameters default to the values used in the experiments.
DynamicalSystem example1_system(double lambda = 1.0);
DynamicalSystem example2_system(double lambda = 1.0);
DynamicalSystem duffing_system();
DynamicalSystem pendulum_system();
DynamicalSystem lorenz_system(double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0);
/// f = 0 on [-1, 1]^d.
DynamicalSystem zero_system(Index dimension = 2);

std::vector<DynamicalSystem> builtin_systems();

/// Looks up a builtin by name and applies parameter overrides (e.g. "sigma").
/// Throws InvalidArgument for an unknown name or parameter.
DynamicalSystem make_system(const std::string& name,
                            const std::map<std::string, double>& overrides = {});

}  // namespace kreproj
