#pragma once

#include "kreproj/dictionary.hpp"
#include "kreproj/dynamics.hpp"

#include <cstdint>
#include <string>

namespace kreproj {

/// Snapshot pairs (x_j, x(dt; x_j)) stored column-wise, d x m each.
struct SnapshotSet {
    Matrix X;
    Matrix Y;
    double dt = 0;
    std::uint64_t seed = 0;
    std::string system_name;
    /// Number of sampled points discarded because their flow left the domain.
    Index dropped = 0;

    Index count() const { return X.cols(); }
    Index state_dim() const { return X.rows(); }
};

/// The fitted operator K (N x N) with Psi(y) ~ K Psi(x).
struct KoopmanApproximation {
    Matrix K;
    Dictionary dictionary;
    double dt = 0;
    Index m = 0;
    /// Condition number of the (scaled, regularized) Gram matrix that was factored.
    double condition_number = 1;
    double residual_rms = 0;
    bool used_pseudoinverse = false;
};

/// m i.i.d. uniform points on the box, returned as d x m. Deterministic in `seed`.
Matrix sample_uniform(const Box& domain, Index m, std::uint64_t seed);

struct SnapshotOptions {
    FlowOptions flow{1e-12, 1e-12, 0.5, 1'000'000};
    /// Escalate "too many dropped points" from a warning to an error.
    bool strict = false;
    double max_drop_fraction = 0.1;
    int threads = 1;
};

/// Flows every column of `points` over dt. Points whose flow leaves the inflated
/// domain are dropped (and counted).
SnapshotSet build_snapshots(const DynamicalSystem& system, const Matrix& points, double dt,
                            const SnapshotOptions& options = {}, std::uint64_t seed = 0);

struct FitOptions {
    double ridge = 0;
    /// Divide each observable by its max |value| over the samples before solving.
    bool scale_observables = true;
    /// Above this Gram condition number the solve switches to a pseudoinverse.
    double pseudoinverse_condition = 1e12;
};

/// Least-squares minimizer of sum_j ||Psi(y_j) - K Psi(x_j)||^2 (+ ridge ||K||^2 terms),
/// i.e. K = (Psi_Y Psi_X^T)(Psi_X Psi_X^T + ridge I)^{-1}.
///
/// Throws NumericalError if the Gram matrix is rank deficient and ridge == 0.
KoopmanApproximation fit(const SnapshotSet& snapshots, const Dictionary& dictionary,
                         const FitOptions& options = {});

/// Empirical second moments G_X = Psi_X Psi_X^T / m and G_YX = Psi_Y Psi_X^T / m.
struct GramMatrices {
    Matrix G_X;
    Matrix G_YX;
};
GramMatrices gram_matrices(const SnapshotSet& snapshots, const Dictionary& dictionary);

/// Relative residual ||W (K (G_X + ridge I) - G_YX)||_F / (||W||_2 ||G_YX||_F) of the
/// (weighted) normal equations. Everything is measured in the basis where observable i
/// is divided by max_j |psi_i(x_j)|; `W` is given in that basis and defaults to I.
double normal_equation_residual(const KoopmanApproximation& model, const SnapshotSet& snapshots,
                                double ridge = 0, const Matrix* W = nullptr);

/// Lifted one-step residuals r_j = K Psi(x_j) - Psi(y_j), N x m.
Matrix lifted_residuals(const KoopmanApproximation& model, const SnapshotSet& snapshots);

}  // namespace kreproj
