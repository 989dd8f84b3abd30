#include "kreproj/edmd.hpp"
#include "kreproj/parallel.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <random>

namespace kreproj {

Matrix sample_uniform(const Box& domain, Index m, std::uint64_t seed)
{
    if (m < 1) throw InvalidArgument("sample_uniform: need m >= 1");
    std::mt19937_64 rng(seed);
    Matrix points(domain.dim(), m);
    for (Index j = 0; j < m; ++j) {
        for (Index i = 0; i < domain.dim(); ++i) {
            std::uniform_real_distribution<double> axis(domain.lo[i], domain.hi[i]);
            points(i, j) = axis(rng);
        }
    }
    return points;
}

SnapshotSet build_snapshots(const DynamicalSystem& system, const Matrix& points, double dt,
                            const SnapshotOptions& options, std::uint64_t seed)
{
    system.validate();
    if (!(dt > 0)) throw InvalidArgument("build_snapshots: dt must be positive");
    if (points.rows() != system.dimension)
        throw InvalidArgument("build_snapshots: points must have one row per state");
    for (Index j = 0; j < points.cols(); ++j)
        if (!system.domain.contains(points.col(j)))
            throw InvalidArgument("build_snapshots: sample " + std::to_string(j) +
                                  " lies outside the domain of '" + system.name + "'");

    const Index m = points.cols();
    Matrix images(system.dimension, m);
    std::vector<char> keep(static_cast<std::size_t>(m), 1);
    parallel_for(m, options.threads, [&](std::ptrdiff_t j) {
        const FlowResult r = flow(system, points.col(j), dt, options.flow);
        images.col(j) = r.state;
        keep[static_cast<std::size_t>(j)] = r.left_domain ? 0 : 1;
    });

    SnapshotSet out;
    out.dt = dt;
    out.seed = seed;
    out.system_name = system.name;
    const Index kept = std::count(keep.begin(), keep.end(), 1);
    out.X.resize(system.dimension, kept);
    out.Y.resize(system.dimension, kept);
    for (Index j = 0, c = 0; j < m; ++j) {
        if (!keep[static_cast<std::size_t>(j)]) continue;
        out.X.col(c) = points.col(j);
        out.Y.col(c) = images.col(j);
        ++c;
    }
    out.dropped = m - kept;

    if (out.dropped > 0)
        spdlog::info("build_snapshots: dropped {} of {} points leaving the domain of '{}'",
                     out.dropped, m, system.name);
    if (static_cast<double>(out.dropped) > options.max_drop_fraction * static_cast<double>(m)) {
        const std::string msg = "build_snapshots: " + std::to_string(out.dropped) + " of " +
                                std::to_string(m) + " points left the domain of '" +
                                system.name + "'";
        if (options.strict) throw Error(msg);
        spdlog::warn("{}", msg);
    }
    if (kept == 0) throw Error("build_snapshots: no snapshot pairs remain");
    return out;
}

GramMatrices gram_matrices(const SnapshotSet& snapshots, const Dictionary& dictionary)
{
    const Matrix PX = dictionary.evaluate_columns(snapshots.X);
    const Matrix PY = dictionary.evaluate_columns(snapshots.Y);
    const double m = static_cast<double>(snapshots.count());
    Matrix G = Matrix::Zero(PX.rows(), PX.rows());
    G.selfadjointView<Eigen::Lower>().rankUpdate(PX, 1.0 / m);
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
    return {G, PY * PX.transpose() / m};
}

KoopmanApproximation fit(const SnapshotSet& snapshots, const Dictionary& dictionary,
                         const FitOptions& options)
{
    if (!(options.ridge >= 0)) throw InvalidArgument("fit: ridge must be non-negative");
    if (snapshots.count() < 1) throw InvalidArgument("fit: empty snapshot set");
    if (snapshots.state_dim() != dictionary.state_dim())
        throw InvalidArgument("fit: dictionary and snapshots disagree on the state dimension");

    const Index N = dictionary.size();
    const Index m = snapshots.count();
    if (m < N)
        spdlog::warn("fit: only {} samples for {} observables; the Gram matrix is rank deficient",
                     m, N);

    Matrix PX = dictionary.evaluate_columns(snapshots.X);
    Matrix PY = dictionary.evaluate_columns(snapshots.Y);

    Vector scale = Vector::Ones(N);
    if (options.scale_observables) {
        scale = PX.cwiseAbs().rowwise().maxCoeff();
        for (Index i = 0; i < N; ++i)
            if (!(scale[i] > 0) || !std::isfinite(scale[i])) scale[i] = 1;
    }
    const Vector inv_scale = scale.cwiseInverse();
    PX = inv_scale.asDiagonal() * PX;
    PY = inv_scale.asDiagonal() * PY;

    const double md = static_cast<double>(m);
    Matrix gram = PX * PX.transpose() / md;
    const Matrix cross = PY * PX.transpose() / md;
    // Ridge acts on the unscaled coefficients: ridge * ||K||_F^2 becomes ridge * S^{-2}.
    gram.diagonal() += options.ridge * inv_scale.cwiseAbs2();

    Eigen::SelfAdjointEigenSolver<Matrix> spectrum(gram, Eigen::EigenvaluesOnly);
    const double lmax = spectrum.eigenvalues().maxCoeff();
    const double lmin = spectrum.eigenvalues().minCoeff();
    const double condition =
        lmin > 0 ? std::max(1.0, lmax / lmin) : std::numeric_limits<double>::infinity();

    Eigen::ColPivHouseholderQR<Matrix> qr(gram);
    KoopmanApproximation out{Matrix(), dictionary, snapshots.dt, m, condition, 0, false};
    if (qr.rank() < N && options.ridge == 0)
        throw NumericalError("fit: Gram matrix is numerically singular (rank " +
                             std::to_string(qr.rank()) + " < " + std::to_string(N) +
                             "); use a positive ridge, more samples, or a smaller dictionary");

    Matrix K_scaled;
    if (condition > options.pseudoinverse_condition) {
        spdlog::warn("fit: Gram condition number {:.3e} exceeds {:.1e}; using a pseudoinverse",
                     condition, options.pseudoinverse_condition);
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(gram);
        K_scaled = cod.solve(cross.transpose()).transpose();
        out.used_pseudoinverse = true;
    } else {
        K_scaled = qr.solve(cross.transpose()).transpose();
    }
    out.K = scale.asDiagonal() * K_scaled * inv_scale.asDiagonal();

    const Matrix R = out.K * dictionary.evaluate_columns(snapshots.X) -
                     dictionary.evaluate_columns(snapshots.Y);
    out.residual_rms = std::sqrt(R.colwise().squaredNorm().sum() / md);
    if (!out.K.allFinite()) throw NumericalError("fit: non-finite operator entries");
    return out;
}

Matrix lifted_residuals(const KoopmanApproximation& model, const SnapshotSet& snapshots)
{
    return model.K * model.dictionary.evaluate_columns(snapshots.X) -
           model.dictionary.evaluate_columns(snapshots.Y);
}

double normal_equation_residual(const KoopmanApproximation& model, const SnapshotSet& snapshots,
                                double ridge, const Matrix* W)
{
    const Dictionary& dict = model.dictionary;
    const Index N = dict.size();
    if (W && (W->rows() != N || W->cols() != N))
        throw InvalidArgument("normal_equation_residual: weight has the wrong size");
    const GramMatrices g = gram_matrices(snapshots, dict);
    Vector scale = dict.evaluate_columns(snapshots.X).cwiseAbs().rowwise().maxCoeff();
    for (Index i = 0; i < N; ++i)
        if (!(scale[i] > 0) || !std::isfinite(scale[i])) scale[i] = 1;
    const auto Sinv = scale.cwiseInverse().asDiagonal();

    Matrix G = g.G_X;
    G.diagonal().array() += ridge;
    const Matrix E = Sinv * (model.K * G - g.G_YX) * Sinv;
    const Matrix C = Sinv * g.G_YX * Sinv;
    const double c = C.norm();
    if (c == 0) return E.norm();
    if (!W) return E.norm() / c;
    Eigen::JacobiSVD<Matrix> svd(*W);
    const double w = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    if (w == 0) return 0;
    return (*W * E).norm() / (w * c);
}

}  // namespace kreproj
