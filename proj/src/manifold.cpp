#include "kreproj/manifold.hpp"
#include "kreproj/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace kreproj {

void Metric::validate() const
{
    if (W.rows() != W.cols() || W.rows() == 0)
        throw InvalidArgument("Metric: weight must be a non-empty square matrix");
    if (!W.allFinite()) throw InvalidArgument("Metric: weight has non-finite entries");
    const double scale = W.norm();
    if ((W - W.transpose()).norm() > 1e-12 * scale)
        throw InvalidArgument("Metric: weight is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(W, Eigen::EigenvaluesOnly);
    const double spread = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (eig.eigenvalues().minCoeff() < -1e-10 * spread)
        throw InvalidArgument("Metric: weight is not positive semi-definite");
    if (normalized && std::abs(pseudo_determinant(W) - 1.0) > 1e-6)
        throw InvalidArgument("Metric: flagged normalized but det^dagger(W) != 1");
}

Metric identity_metric(Index N)
{
    return Metric{Matrix::Identity(N, N), true};
}

Metric normalize(const Metric& metric)
{
    Eigen::JacobiSVD<Matrix> svd(metric.W);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0) throw InvalidArgument("normalize: zero metric");
    double log_pdet = 0;
    int rank = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s[i] > 1e-12 * s[0]) {
            log_pdet += std::log(s[i]);
            ++rank;
        }
    }
    return Metric{metric.W * std::exp(-log_pdet / rank), true};
}

Metric coordinate_metric(const Dictionary& dictionary)
{
    const auto& coords = dictionary.coordinate_indices();
    if (!coords)
        throw InvalidArgument("coordinate_metric: dictionary does not contain every coordinate");
    Matrix C = Matrix::Zero(dictionary.size(), dictionary.size());
    for (Index i : *coords) C(i, i) = 1;
    return Metric{C, true};
}

MetricConditionReport check_metric_condition(const Dictionary& dictionary, const Metric& metric,
                                             const Matrix& probes, double threshold)
{
    if (metric.size() != dictionary.size())
        throw InvalidArgument("check_metric_condition: metric size does not match dictionary");
    MetricConditionReport report;
    report.min_abs_det = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < probes.cols(); ++c) {
        const Matrix J = dictionary.jacobian<double>(probes.col(c));
        const double det = std::abs((J.transpose() * metric.W * J).determinant());
        if (det < report.min_abs_det) {
            report.min_abs_det = det;
            report.worst_probe = c;
        }
    }
    report.ok = probes.cols() > 0 && report.min_abs_det > threshold;
    return report;
}

ReconstructionMap coordinate_reconstruction(const Dictionary& dictionary)
{
    const auto& coords = dictionary.coordinate_indices();
    if (!coords)
        throw InvalidArgument("coordinate_reconstruction: dictionary does not contain every "
                              "coordinate");
    std::vector<Index> idx = *coords;
    std::string description;
    for (std::size_t j = 0; j < idx.size(); ++j)
        description += (j ? "; " : "") + dictionary.state_names()[j] + " = z[" +
                       std::to_string(idx[j]) + "]";
    return {[idx](const Vector& z) {
                Vector x(static_cast<Index>(idx.size()));
                for (std::size_t j = 0; j < idx.size(); ++j) x[static_cast<Index>(j)] = z[idx[j]];
                return x;
            },
            description};
}

ReconstructionMap auto_reconstruction(const Dictionary& dictionary, const Box& domain)
{
    if (dictionary.coordinate_indices()) return coordinate_reconstruction(dictionary);
    if (domain.dim() != dictionary.state_dim())
        throw InvalidArgument("auto_reconstruction: domain does not match dictionary");

    const Index d = dictionary.state_dim();
    const auto& names = dictionary.state_names();
    auto unit = [d](Index j) {
        Exponent e(static_cast<std::size_t>(d), 0);
        e[static_cast<std::size_t>(j)] = 1;
        return e;
    };

    // Per coordinate: (numerator index, denominator index or -1).
    struct Rule {
        Index numerator;
        Index denominator;
        std::string numerator_label;
        std::string denominator_label;
    };
    std::vector<Rule> rules;
    std::string description;
    for (Index j = 0; j < d; ++j) {
        if (auto direct = dictionary.find(unit(j))) {
            rules.push_back({*direct, -1, "", ""});
            description += (j ? "; " : "") + names[j] + " = " + names[j];
            continue;
        }
        bool found = false;
        for (Index k = 0; k < d && !found; ++k) {
            if (k == j) continue;
            const bool excludes_zero = domain.lo[k] > 0 || domain.hi[k] < 0;
            auto denominator = dictionary.find(unit(k));
            Exponent product = unit(j);
            product[static_cast<std::size_t>(k)] += 1;
            auto numerator = dictionary.find(product);
            if (excludes_zero && denominator && numerator) {
                rules.push_back({*numerator, *denominator, dictionary.labels()[*numerator],
                                 dictionary.labels()[*denominator]});
                description += (j ? "; " : "") + names[j] + " = " +
                               dictionary.labels()[*numerator] + " / " +
                               dictionary.labels()[*denominator];
                found = true;
            }
        }
        if (!found)
            throw InvalidArgument("auto_reconstruction: cannot recover coordinate '" + names[j] +
                                  "' from the dictionary");
    }

    std::vector<std::string> state_names = names;
    return {[rules, state_names](const Vector& z) {
                Vector x(static_cast<Index>(rules.size()));
                for (std::size_t j = 0; j < rules.size(); ++j) {
                    const Rule& r = rules[j];
                    if (r.denominator < 0) {
                        x[static_cast<Index>(j)] = z[r.numerator];
                        continue;
                    }
                    const double den = z[r.denominator];
                    if (!std::isfinite(den) || std::abs(den) < 1e-12) {
                        std::ostringstream msg;
                        msg << "reconstruction of '" << state_names[j] << "' as "
                            << r.numerator_label << " / " << r.denominator_label
                            << " is degenerate: component '" << r.denominator_label
                            << "' = " << den;
                        throw ReconstructionError(msg.str(), r.denominator_label);
                    }
                    x[static_cast<Index>(j)] = z[r.numerator] / den;
                }
                return x;
            },
            description};
}

Projection project_coordinate(const Dictionary& dictionary, const ReconstructionMap& reconstruction,
                              const Vector& z)
{
    if (z.size() != dictionary.size())
        throw InvalidArgument("project_coordinate: lifted point has wrong length");
    Projection out;
    out.x = reconstruction(z);
    out.p = dictionary(out.x);
    out.residual = (z - out.p).norm();
    return out;
}

void ClosestPointConfig::validate() const
{
    if (max_iters < 1) throw InvalidArgument("ClosestPointConfig: max_iters must be >= 1");
    if (multistart_grid < 1) throw InvalidArgument("ClosestPointConfig: multistart_grid must be >= 1");
    if (!(grad_tol > 0)) throw InvalidArgument("ClosestPointConfig: grad_tol must be positive");
    if (!(damping_init >= 0)) throw InvalidArgument("ClosestPointConfig: damping_init must be >= 0");
}

namespace {

struct Candidate {
    Vector x;
    double cost = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
};

// Newton-type step restricted to the variables not pinned at an active bound.
// Positive `g` means decreasing cost along +x.
Vector bounded_step(const Matrix& A, const Vector& g, const Vector& x, const Box* box)
{
    const Index d = x.size();
    std::vector<Index> free;
    for (Index i = 0; i < d; ++i) {
        const bool pinned = box && ((x[i] <= box->lo[i] && g[i] < 0) ||
                                    (x[i] >= box->hi[i] && g[i] > 0));
        if (!pinned) free.push_back(i);
    }
    Vector step = Vector::Zero(d);
    if (free.empty()) return step;
    const Index nf = static_cast<Index>(free.size());
    Matrix Af(nf, nf);
    Vector gf(nf);
    for (Index a = 0; a < nf; ++a) {
        gf[a] = g[free[a]];
        for (Index b = 0; b < nf; ++b) Af(a, b) = A(free[a], free[b]);
    }
    const Vector sf = Af.completeOrthogonalDecomposition().solve(gf);
    for (Index a = 0; a < nf; ++a) step[free[a]] = sf[a];
    return step;
}

// sum_i c_i Hess(psi_i)(x) for the monomial dictionary.
Matrix weighted_hessian(const Dictionary& dict, const Vector& x, const Vector& c)
{
    const Index d = x.size();
    const Eigen::MatrixXi& E = dict.exponents();
    Matrix H = Matrix::Zero(d, d);
    for (Index i = 0; i < E.rows(); ++i) {
        if (c[i] == 0) continue;
        for (Index a = 0; a < d; ++a) {
            for (Index b = a; b < d; ++b) {
                Eigen::VectorXi e = E.row(i).transpose();
                const double coef = a == b ? double(e[a]) * (e[a] - 1) : double(e[a]) * e[b];
                if (coef == 0) continue;
                e[a] -= 1;
                e[b] -= 1;
                double v = coef * c[i];
                for (Index k = 0; k < d; ++k) v *= std::pow(x[k], e[k]);
                H(a, b) += v;
                if (a != b) H(b, a) += v;
            }
        }
    }
    return H;
}

// Full Newton steps from a Gauss-Newton stationary point. Gauss-Newton converges
// only linearly when the residual is large, which leaves x slightly short of the
// minimizer; a few Newton steps reach rounding level. Steps are kept only while
// they shrink the gradient and stay inside the box.
Vector newton_polish(const Dictionary& dict, const Matrix& W, const Vector& z, Vector x,
                     const Box* box)
{
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (box && ((x - box->lo).minCoeff() <= 0 || (box->hi - x).minCoeff() <= 0)) return x;
    Vector c = W * (z - dict(x));
    Matrix J = dict.jacobian<double>(x);
    Vector g = J.transpose() * c;
    for (int k = 0; k < 4; ++k) {
        const Matrix H = J.transpose() * W * J - weighted_hessian(dict, x, c);
        Eigen::LLT<Matrix> llt(H);
        if (llt.info() != Eigen::Success) break;
        const Vector step = llt.solve(g);
        const Vector xn = x + step;
        if (!xn.allFinite() || (box && !box->contains(xn))) break;
        const Vector cn = W * (z - dict(xn));
        const Matrix Jn = dict.jacobian<double>(xn);
        const Vector gn = Jn.transpose() * cn;
        if (!(gn.norm() < g.norm())) break;
        x = xn;
        c = cn;
        J = Jn;
        g = gn;
        if (step.norm() <= 4 * eps * (1 + x.norm())) break;
    }
    return x;
}

Candidate gauss_newton(const Dictionary& dict, const Matrix& W, const Vector& z, Vector x,
                       const ClosestPointConfig& cfg, const Box* box)
{
    auto clampx = [box](const Vector& v) { return box ? box->clamp(v) : v; };
    x = clampx(x);
    Vector r = z - dict(x);
    double cost = r.dot(W * r);
    double mu = cfg.damping_init;
    constexpr double eps = std::numeric_limits<double>::epsilon();

    Candidate out;
    for (int it = 0;; ++it) {
        const Matrix J = dict.jacobian<double>(x);
        const Matrix WJ = W * J;
        const Matrix H = J.transpose() * WJ;
        const Vector g = WJ.transpose() * r;
        const double step_tol = cfg.grad_tol * (1 + x.norm());

        const Vector gn = clampx(x + bounded_step(H, g, x, box)) - x;
        if (!(cost > 0) || gn.norm() <= step_tol) {
            if (cost > 0) {
                x = newton_polish(dict, W, z, x, box);
                r = z - dict(x);
                cost = r.dot(W * r);
            }
            out.converged = true;
            out.iterations = it;
            break;
        }
        if (it == cfg.max_iters) {
            out.iterations = it;
            break;
        }

        const double floor = std::max(H.diagonal().maxCoeff(), 0.0) * 1e-12 +
                             std::numeric_limits<double>::min();
        bool accepted = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            Matrix A = H;
            A.diagonal() += mu * H.diagonal().cwiseMax(floor);
            const Vector candidate = clampx(x + bounded_step(A, g, x, box));
            const Vector rc = z - dict(candidate);
            const double cc = rc.dot(W * rc);
            // Near the minimizer the cost is flat to rounding; accept a step that
            // leaves it unchanged there if it shrinks the gradient.
            const bool flat = std::isfinite(cc) && cc <= cost * (1 + 16 * eps) &&
                              (dict.jacobian<double>(candidate).transpose() * (W * rc)).norm() <
                                  0.5 * g.norm();
            if (std::isfinite(cc) && (cc < cost || flat)) {
                x = candidate;
                r = rc;
                cost = cc;
                mu = std::max(mu * 0.1, 1e-15);
                accepted = true;
                break;
            }
            mu = std::max(mu * 10, 1e-12);
        }
        if (!accepted) {
            // No representable decrease left: accept as stationary if the
            // Gauss-Newton step is already at rounding level.
            out.converged = gn.norm() <= std::sqrt(cfg.grad_tol) * (1 + x.norm());
            out.iterations = it + 1;
            if (out.converged) {
                x = newton_polish(dict, W, z, x, box);
                r = z - dict(x);
                cost = r.dot(W * r);
            }
            break;
        }
    }
    out.x = x;
    out.cost = cost;
    return out;
}

std::vector<Vector> grid_starts(const Box& box, int per_axis)
{
    const Index d = box.dim();
    std::vector<Vector> starts;
    std::vector<int> counter(static_cast<std::size_t>(d), 0);
    while (true) {
        Vector x(d);
        for (Index i = 0; i < d; ++i)
            x[i] = box.lo[i] + (counter[static_cast<std::size_t>(i)] + 0.5) / per_axis *
                                   (box.hi[i] - box.lo[i]);
        starts.push_back(x);
        Index axis = 0;
        while (axis < d && ++counter[static_cast<std::size_t>(axis)] == per_axis)
            counter[static_cast<std::size_t>(axis++)] = 0;
        if (axis == d) break;
    }
    return starts;
}

bool lexicographically_less(const Vector& a, const Vector& b)
{
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                        b.data() + b.size());
}

const Candidate* select_best(const std::vector<Candidate>& candidates, double tie_tol)
{
    bool any_converged = false;
    for (const auto& c : candidates) any_converged |= c.converged;
    double best_cost = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates)
        if ((c.converged || !any_converged) && c.cost < best_cost) best_cost = c.cost;

    const double gap = tie_tol * best_cost + std::numeric_limits<double>::min();
    const Candidate* best = nullptr;
    for (const auto& c : candidates) {
        if ((any_converged && !c.converged) || !(c.cost <= best_cost + gap)) continue;
        if (!best || lexicographically_less(c.x, best->x)) best = &c;
    }
    return best;
}

}  // namespace

Projection project_closest(const Dictionary& dictionary, const Metric& metric, const Vector& z,
                           const ClosestPointConfig& config, const std::vector<Vector>& seeds)
{
    config.validate();
    if (z.size() != dictionary.size())
        throw InvalidArgument("project_closest: lifted point has wrong length");
    if (metric.size() != dictionary.size())
        throw InvalidArgument("project_closest: metric size does not match dictionary");
    const Box* box = config.box ? &*config.box : nullptr;

    std::vector<Vector> first;
    for (const Vector& s : seeds)
        if (s.size() == dictionary.state_dim() && s.allFinite()) first.push_back(s);
    if (config.seed_from_coordinates && dictionary.coordinate_indices()) {
        Vector guess(dictionary.state_dim());
        for (Index j = 0; j < guess.size(); ++j)
            guess[j] = z[(*dictionary.coordinate_indices())[static_cast<std::size_t>(j)]];
        if (guess.allFinite()) first.push_back(guess);
    }

    std::vector<Candidate> candidates;
    for (const Vector& s : first)
        candidates.push_back(gauss_newton(dictionary, metric.W, z, s, config, box));

    const bool seeded_ok = std::any_of(candidates.begin(), candidates.end(),
                                       [](const Candidate& c) { return c.converged; });
    if (config.always_multistart || !seeded_ok) {
        if (box) {
            for (const Vector& s : grid_starts(*box, config.multistart_grid))
                candidates.push_back(gauss_newton(dictionary, metric.W, z, s, config, box));
        } else if (candidates.empty()) {
            throw InvalidArgument("project_closest: no search box and no starting point");
        }
    }

    const Candidate* best = select_best(candidates, config.tie_tol);
    Projection out;
    out.x = best->x;
    out.p = dictionary(best->x);
    out.residual = weighted_norm(z - out.p, metric.W);
    out.converged = best->converged;
    out.iterations = best->iterations;
    return out;
}

Metric geometric_metric_from_residuals(const Matrix& residuals, const GeometricMetricOptions& opt)
{
    const Index N = residuals.rows();
    const Index m = residuals.cols();
    if (N == 0 || m == 0) throw InvalidArgument("geometric_metric: no residuals");
    if (!residuals.allFinite()) throw NumericalError("geometric_metric: non-finite residuals");

    Matrix sigma = residuals * residuals.transpose() / static_cast<double>(m);
    sigma = 0.5 * (sigma + sigma.transpose());
    const double trace = sigma.trace();
    if (!(trace > 0)) {
        spdlog::info("geometric_metric: residuals vanish; using the identity metric");
        return identity_metric(N);
    }

    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    if (!(lmin > 0) || lmax / lmin > opt.max_condition) {
        const double shift = opt.tau * trace / static_cast<double>(N);
        spdlog::info("geometric_metric: Sigma condition {:.3e} above {:.1e}; adding {:.3e} I",
                     lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity(),
                     opt.max_condition, shift);
        sigma.diagonal().array() += shift;
        eig.compute(sigma);
    }

    const Vector& lambda = eig.eigenvalues();
    const Matrix& V = eig.eigenvectors();
    // det(Sigma)^{1/N} as the geometric mean of the eigenvalues.
    const double geo_mean = std::exp(lambda.array().log().mean());
    Matrix W = V * (geo_mean * lambda.cwiseInverse()).asDiagonal() * V.transpose();
    W = 0.5 * (W + W.transpose());
    return Metric{W, true};
}

Metric geometric_metric(const KoopmanApproximation& model, const SnapshotSet& snapshots,
                        const GeometricMetricOptions& options)
{
    const Matrix R = lifted_residuals(model, snapshots);
    // Residuals at rounding level relative to the lifted data mean an invariant dictionary.
    const Matrix PY = model.dictionary.evaluate_columns(snapshots.Y);
    const double data_scale = PY.squaredNorm();
    if (R.squaredNorm() <= 1e-24 * data_scale) {
        spdlog::info("geometric_metric: residuals at rounding level; using the identity metric");
        return identity_metric(model.dictionary.size());
    }
    return geometric_metric_from_residuals(R, options);
}

void Projector::validate(const Dictionary& dictionary) const
{
    switch (kind) {
    case ProjectorKind::none: break;
    case ProjectorKind::coordinate:
        if (!reconstruction)
            throw InvalidArgument("coordinate projector '" + name + "' needs a reconstruction");
        break;
    case ProjectorKind::closest_point:
        if (!metric) throw InvalidArgument("closest-point projector '" + name + "' needs a metric");
        if (metric->size() != dictionary.size())
            throw InvalidArgument("closest-point projector '" + name +
                                  "': metric size does not match dictionary");
        solver.validate();
        break;
    }
}

Projector none_projector(const Dictionary& dictionary)
{
    Projector p;
    p.kind = ProjectorKind::none;
    p.name = "none";
    if (dictionary.coordinate_indices()) p.reconstruction = coordinate_reconstruction(dictionary);
    return p;
}

Projector coordinate_projector(const Dictionary& dictionary, const Box& domain)
{
    Projector p;
    p.kind = ProjectorKind::coordinate;
    p.name = "coordinate";
    p.reconstruction = auto_reconstruction(dictionary, domain);
    return p;
}

Projector closest_point_projector(Metric metric, ClosestPointConfig solver, std::string name,
                                  std::optional<ReconstructionMap> seed_map)
{
    Projector p;
    p.kind = ProjectorKind::closest_point;
    p.name = std::move(name);
    p.metric = std::move(metric);
    p.solver = std::move(solver);
    p.reconstruction = std::move(seed_map);
    return p;
}

Projection project(const Projector& projector, const Dictionary& dictionary, const Vector& z,
                   const std::vector<Vector>& seeds)
{
    switch (projector.kind) {
    case ProjectorKind::none: {
        if (!projector.reconstruction)
            throw InvalidArgument("none projector: dictionary has no coordinate readout");
        Projection out;
        out.x = (*projector.reconstruction)(z);
        out.p = z;
        return out;
    }
    case ProjectorKind::coordinate:
        if (!projector.reconstruction)
            throw InvalidArgument("coordinate projector '" + projector.name +
                                  "' needs a reconstruction");
        return project_coordinate(dictionary, *projector.reconstruction, z);
    case ProjectorKind::closest_point: {
        if (!projector.metric)
            throw InvalidArgument("closest-point projector '" + projector.name +
                                  "' needs a metric");
        std::vector<Vector> starts = seeds;
        if (projector.reconstruction) {
            try {
                starts.push_back((*projector.reconstruction)(z));
            } catch (const ReconstructionError&) {
                // the grid starts cover this case
            }
        }
        return project_closest(dictionary, *projector.metric, z, projector.solver, starts);
    }
    }
    throw InvalidArgument("project: unknown projector kind");
}

BoundCheckReport projection_bound_check(const KoopmanApproximation& model, const Metric& metric,
                                        const Projector& projector, const Matrix& test_points,
                                        const DynamicalSystem& system, int threads,
                                        double reference_tol)
{
    if (projector.kind != ProjectorKind::closest_point || !projector.metric)
        throw InvalidArgument("projection_bound_check: needs a closest-point projector");
    if ((projector.metric->W - metric.W).norm() > 1e-12 * metric.W.norm())
        throw InvalidArgument("projection_bound_check: projector uses a different metric");

    const Dictionary& dict = model.dictionary;
    FlowOptions fo;
    fo.rel_tol = reference_tol;
    fo.abs_tol = reference_tol;

    BoundCheckReport report;
    report.entries.resize(static_cast<std::size_t>(test_points.cols()));
    parallel_for(test_points.cols(), threads, [&](std::ptrdiff_t c) {
        BoundCheckEntry& e = report.entries[static_cast<std::size_t>(c)];
        e.x = test_points.col(c);
        const Vector z = model.K * dict(e.x);
        const Vector truth = dict(flow(system, e.x, model.dt, fo).state);
        const Projection proj = project(projector, dict, z);
        e.projected_error = weighted_norm(proj.p - truth, metric.W);
        e.training_error = weighted_norm(z - truth, metric.W);
        e.slack = 1e-8 * (1 + e.training_error);
        e.converged = proj.converged;
        e.violated = e.projected_error > 2 * e.training_error + e.slack;
    });
    for (const auto& e : report.entries) {
        report.violations += e.violated ? 1 : 0;
        report.unconverged += e.converged ? 0 : 1;
        if (e.training_error > 0)
            report.worst_ratio = std::max(report.worst_ratio, e.projected_error / e.training_error);
    }
    return report;
}

}  // namespace kreproj
