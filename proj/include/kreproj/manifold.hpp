#pragma once

#include "kreproj/dictionary.hpp"
#include "kreproj/dynamics.hpp"
#include "kreproj/edmd.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kreproj {

/// Product of the singular values of W above rel_tol * sigma_max.
template <typename Derived>
typename Derived::Scalar pseudo_determinant(const Eigen::MatrixBase<Derived>& W,
                                            typename Derived::Scalar rel_tol = 1e-12)
{
    using Scalar = typename Derived::Scalar;
    Eigen::JacobiSVD<MatrixX<Scalar>> svd(W.eval());
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s[0] == Scalar(0)) return Scalar(0);
    Scalar product(1);
    for (Index i = 0; i < s.size(); ++i)
        if (s[i] > rel_tol * s[0]) product *= s[i];
    return product;
}

/// Symmetric positive-semidefinite weight on the lifted space R^N.
struct Metric {
    Matrix W;
    /// Set when det^dagger(W) has been scaled to one.
    bool normalized = false;

    Index size() const { return W.rows(); }

    /// Checks symmetry, positive semi-definiteness, and the normalization claim.
    /// Throws InvalidArgument on violation.
    void validate() const;
};

Metric identity_metric(Index N);

/// Rescales W so that its pseudodeterminant is one.
Metric normalize(const Metric& metric);

/// Ones at the coordinate positions of the dictionary, zeros elsewhere.
Metric coordinate_metric(const Dictionary& dictionary);

struct MetricConditionReport {
    double min_abs_det = 0;
    Index worst_probe = -1;
    bool ok = false;
};

/// Evaluates det(DPsi(x)^T W DPsi(x)) at each probe column (d x p).
MetricConditionReport check_metric_condition(const Dictionary& dictionary, const Metric& metric,
                                             const Matrix& probes, double threshold = 1e-10);

/// Raised when a state cannot be recovered from a lifted point.
class ReconstructionError : public Error {
public:
    ReconstructionError(const std::string& what, std::string component)
        : Error(what), component_(std::move(component))
    {
    }
    const std::string& component() const { return component_; }

private:
    std::string component_;
};

/// Map from a lifted point to a state; exact on the manifold.
struct ReconstructionMap {
    std::function<Vector(const Vector&)> map;
    std::string description;

    Vector operator()(const Vector& z) const { return map(z); }
};

/// Reads the coordinate observables. Throws InvalidArgument if the dictionary
/// lacks a coordinate.
ReconstructionMap coordinate_reconstruction(const Dictionary& dictionary);

/// Like coordinate_reconstruction, but a missing coordinate x_j is recovered as
/// (x_j x_k) / x_k for some present x_k whose domain range excludes zero.
ReconstructionMap auto_reconstruction(const Dictionary& dictionary, const Box& domain);

struct Projection {
    Vector x;  ///< recovered state
    Vector p;  ///< point on the manifold (Psi(x)); equals z for the "none" projector
    double residual = 0;
    bool converged = true;
    int iterations = 0;
};

/// x = reconstruction(z), p = Psi(x).
Projection project_coordinate(const Dictionary& dictionary, const ReconstructionMap& reconstruction,
                              const Vector& z);

struct ClosestPointConfig {
    int max_iters = 100;
    /// Convergence threshold on the box-projected Gauss-Newton step, relative to 1 + |x|.
    double grad_tol = 1e-10;
    /// Starting points per axis of the search box.
    int multistart_grid = 5;
    std::optional<Box> box;
    double damping_init = 1e-8;
    /// Cost gap under which two minimizers count as tied.
    double tie_tol = 1e-10;
    /// Seed from the coordinate components of z when the dictionary has them.
    bool seed_from_coordinates = true;
    /// Run the grid starts even when an explicit seed converged.
    bool always_multistart = true;

    void validate() const;
};

/// Minimizes ||z - Psi(x)||_W^2 over the search box by damped Gauss-Newton from
/// multiple starts (explicit seeds, the coordinate guess, then a grid).
///
/// The lowest-cost converged local minimizer wins; ties within tie_tol go to the
/// lexicographically smallest x. When nothing converges the best iterate is
/// returned with converged == false.
Projection project_closest(const Dictionary& dictionary, const Metric& metric, const Vector& z,
                           const ClosestPointConfig& config, const std::vector<Vector>& seeds = {});

struct GeometricMetricOptions {
    /// Regularize Sigma when its condition number exceeds this.
    double max_condition = 1e12;
    double tau = 1e-10;
};

/// W = det(Sigma)^{1/N} Sigma^{-1} with Sigma the second moment of the residual columns (N x m).
Metric geometric_metric_from_residuals(const Matrix& residuals,
                                       const GeometricMetricOptions& options = {});

/// Geometric metric for a fitted model, with Sigma estimated from `snapshots`.
Metric geometric_metric(const KoopmanApproximation& model, const SnapshotSet& snapshots,
                        const GeometricMetricOptions& options = {});

enum class ProjectorKind { none, coordinate, closest_point };

/// How lifted points are mapped back onto the manifold.
struct Projector {
    ProjectorKind kind = ProjectorKind::none;
    std::string name;
    std::optional<Metric> metric;                       // closest_point
    std::optional<ReconstructionMap> reconstruction;    // coordinate; optional seed for closest_point
    ClosestPointConfig solver;                          // closest_point

    void validate(const Dictionary& dictionary) const;
};

Projector none_projector(const Dictionary& dictionary);
Projector coordinate_projector(const Dictionary& dictionary, const Box& domain);
Projector closest_point_projector(Metric metric, ClosestPointConfig solver, std::string name,
                                  std::optional<ReconstructionMap> seed_map = std::nullopt);

/// Applies any projector. `seeds` are extra starting guesses for closest_point.
Projection project(const Projector& projector, const Dictionary& dictionary, const Vector& z,
                   const std::vector<Vector>& seeds = {});

struct BoundCheckEntry {
    Vector x;
    double projected_error = 0;  ///< ||pi_W(K Psi(x)) - Psi(x(dt;x))||_W
    double training_error = 0;   ///< ||K Psi(x) - Psi(x(dt;x))||_W
    double slack = 0;
    bool converged = true;
    bool violated = false;
};

struct BoundCheckReport {
    std::vector<BoundCheckEntry> entries;
    Index violations = 0;
    Index unconverged = 0;
    double worst_ratio = 0;  ///< max projected / training error
};

/// Checks ||pi_W(K Psi(x)) - Psi(x(dt;x))||_W <= 2 ||K Psi(x) - Psi(x(dt;x))||_W + slack
/// at each test column, slack = 1e-8 (1 + training error).
BoundCheckReport projection_bound_check(const KoopmanApproximation& model, const Metric& metric,
                                        const Projector& projector, const Matrix& test_points,
                                        const DynamicalSystem& system, int threads = 1,
                                        double reference_tol = 1e-12);

}  // namespace kreproj
