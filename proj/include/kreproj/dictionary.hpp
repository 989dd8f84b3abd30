#pragma once

#include "kreproj/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace kreproj {

using Exponent = std::vector<int>;

/// Ordered monomial observables psi_i(x) = prod_j x_j^{a_ij}.
///
/// The dictionary is immutable after construction. `coordinate_indices()`
/// is populated exactly when every degree-one monomial x_j is present, in which
/// case component coordinate_indices()[j] of evaluate(x) equals x_j.
class Dictionary {
public:
    /// Explicit exponent table (one row per observable, one column per state).
    Dictionary(Eigen::MatrixXi exponents, std::vector<std::string> state_names = {});

    Index size() const { return exponents_.rows(); }
    Index state_dim() const { return exponents_.cols(); }
    int max_degree() const { return max_degree_; }

    const Eigen::MatrixXi& exponents() const { return exponents_; }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::vector<std::string>& state_names() const { return state_names_; }
    const std::optional<std::vector<Index>>& coordinate_indices() const { return coordinates_; }

    /// Index of the observable with the given label or exponent, if present.
    std::optional<Index> find(const std::string& label) const;
    std::optional<Index> find(const Exponent& exponent) const;

    /// Psi(x), length N.
    template <typename Scalar>
    VectorX<Scalar> evaluate(const Eigen::Ref<const VectorX<Scalar>>& x) const;

    /// DPsi(x), N x d; row i is the gradient of psi_i.
    template <typename Scalar>
    MatrixX<Scalar> jacobian(const Eigen::Ref<const VectorX<Scalar>>& x) const;

    Vector operator()(const Eigen::Ref<const Vector>& x) const { return evaluate<double>(x); }

    /// Columns Psi(x_j) for the columns x_j of `points` (d x m) -> N x m.
    Matrix evaluate_columns(const Eigen::Ref<const Matrix>& points) const;

    /// Per-observable max |psi_i| over a box (exact for monomials).
    Vector max_abs_over(const Box& box) const;

private:
    template <typename Scalar>
    MatrixX<Scalar> power_table(const Eigen::Ref<const VectorX<Scalar>>& x) const;

    Eigen::MatrixXi exponents_;
    std::vector<std::string> state_names_;
    std::vector<std::string> labels_;
    std::optional<std::vector<Index>> coordinates_;
    int max_degree_ = 0;
};

/// Default state names: x | x, v | x, y, z | x1..xd.
std::vector<std::string> default_state_names(Index d);

/// Human-readable monomial label, e.g. "1", "x", "x^2*v".
std::string monomial_label(const Exponent& exponent, const std::vector<std::string>& names);

/// All exponents of total degree <= n in d variables, graded-lexicographic
/// (constant first, then degree one in coordinate order, ...).
std::vector<Exponent> graded_lex_exponents(int n, Index d);

/// Monomials of total degree <= n minus `exclude`. Throws InvalidArgument if an
/// excluded monomial is not part of the full set.
Dictionary monomial_dictionary(int n, Index d, const std::vector<Exponent>& exclude = {},
                               std::vector<std::string> state_names = {});

/// As above, with exclusions given by label (e.g. "x", "x*z").
Dictionary monomial_dictionary(int n, Index d, const std::vector<std::string>& exclude_labels,
                               std::vector<std::string> state_names);

/// ||DPsi(x) - D_h Psi(x)||_F / max(||DPsi(x)||_F, 1e-300) with D_h the central
/// difference of step h_rel * max(1, |x_j|).
double jacobian_fd_error(const Dictionary& dictionary, const Vector& x, double h_rel = 1e-5);

// ---------------------------------------------------------------------------

template <typename Scalar>
MatrixX<Scalar> Dictionary::power_table(const Eigen::Ref<const VectorX<Scalar>>& x) const
{
    // powers(k, j) = x_j^k
    MatrixX<Scalar> powers(max_degree_ + 1, state_dim());
    for (Index j = 0; j < state_dim(); ++j) {
        powers(0, j) = Scalar(1);
        for (int k = 1; k <= max_degree_; ++k) powers(k, j) = powers(k - 1, j) * x[j];
    }
    return powers;
}

template <typename Scalar>
VectorX<Scalar> Dictionary::evaluate(const Eigen::Ref<const VectorX<Scalar>>& x) const
{
    if (x.size() != state_dim())
        throw InvalidArgument("Dictionary::evaluate: state has wrong length");
    const MatrixX<Scalar> powers = power_table<Scalar>(x);
    VectorX<Scalar> psi(size());
    for (Index i = 0; i < size(); ++i) {
        Scalar value(1);
        for (Index j = 0; j < state_dim(); ++j) value *= powers(exponents_(i, j), j);
        psi[i] = value;
    }
    return psi;
}

template <typename Scalar>
MatrixX<Scalar> Dictionary::jacobian(const Eigen::Ref<const VectorX<Scalar>>& x) const
{
    if (x.size() != state_dim())
        throw InvalidArgument("Dictionary::jacobian: state has wrong length");
    const MatrixX<Scalar> powers = power_table<Scalar>(x);
    MatrixX<Scalar> J = MatrixX<Scalar>::Zero(size(), state_dim());
    for (Index i = 0; i < size(); ++i) {
        for (Index k = 0; k < state_dim(); ++k) {
            const int a = exponents_(i, k);
            if (a == 0) continue;
            Scalar value = Scalar(a) * powers(a - 1, k);
            for (Index j = 0; j < state_dim(); ++j)
                if (j != k) value *= powers(exponents_(i, j), j);
            J(i, k) = value;
        }
    }
    return J;
}

}  // namespace kreproj
