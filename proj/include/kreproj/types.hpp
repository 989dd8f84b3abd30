#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace kreproj {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using Index = Eigen::Index;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when input violates a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Raised when the ODE integrator produces a non-finite state.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, double time) : Error(what), time_(time) {}
    double time() const { return time_; }

private:
    double time_;
};

/// Raised when a linear-algebra step cannot proceed (singular Gram matrix etc).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Axis-aligned box, lo[i] < hi[i] on every axis.
struct Box {
    Vector lo;
    Vector hi;

    Box() = default;
    Box(Vector lower, Vector upper);

    Index dim() const { return lo.size(); }
    Vector width() const { return hi - lo; }
    bool contains(const Eigen::Ref<const Vector>& x) const;

    /// Box grown by `fraction` of each axis length on both sides.
    Box inflated(double fraction) const;

    /// Componentwise clamp of x into the box.
    Vector clamp(const Eigen::Ref<const Vector>& x) const;
};

/// Squared W-seminorm r^T W r.
template <typename DerivedR, typename DerivedW>
typename DerivedR::Scalar weighted_squared_norm(const Eigen::MatrixBase<DerivedR>& r,
                                                const Eigen::MatrixBase<DerivedW>& W)
{
    return r.dot(W * r);
}

/// W-seminorm sqrt(max(r^T W r, 0)); the clamp absorbs rounding for psd W.
template <typename DerivedR, typename DerivedW>
typename DerivedR::Scalar weighted_norm(const Eigen::MatrixBase<DerivedR>& r,
                                        const Eigen::MatrixBase<DerivedW>& W)
{
    using std::sqrt;
    using Scalar = typename DerivedR::Scalar;
    return sqrt(std::max(weighted_squared_norm(r, W), Scalar(0)));
}

}  // namespace kreproj
