#include "kreproj/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace kreproj {

std::vector<std::string> default_state_names(Index d)
{
    switch (d) {
    case 1: return {"x"};
    case 2: return {"x", "v"};
    case 3: return {"x", "y", "z"};
    default: {
        std::vector<std::string> names;
        for (Index i = 0; i < d; ++i) names.push_back("x" + std::to_string(i + 1));
        return names;
    }
    }
}

std::string monomial_label(const Exponent& exponent, const std::vector<std::string>& names)
{
    std::string label;
    for (std::size_t j = 0; j < exponent.size(); ++j) {
        if (exponent[j] == 0) continue;
        if (!label.empty()) label += '*';
        label += names.at(j);
        if (exponent[j] > 1) label += '^' + std::to_string(exponent[j]);
    }
    return label.empty() ? "1" : label;
}

std::vector<Exponent> graded_lex_exponents(int n, Index d)
{
    if (n < 0 || d < 1) throw InvalidArgument("graded_lex_exponents: need n >= 0 and d >= 1");
    std::vector<Exponent> out;
    Exponent current(static_cast<std::size_t>(d), 0);
    // Within one total degree, emit in decreasing lexicographic order of the tuple.
    std::function<void(std::size_t, int)> fill = [&](std::size_t axis, int remaining) {
        if (axis + 1 == current.size()) {
            current[axis] = remaining;
            out.push_back(current);
            return;
        }
        for (int a = remaining; a >= 0; --a) {
            current[axis] = a;
            fill(axis + 1, remaining - a);
        }
    };
    for (int degree = 0; degree <= n; ++degree) fill(0, degree);
    return out;
}

Dictionary::Dictionary(Eigen::MatrixXi exponents, std::vector<std::string> state_names)
    : exponents_(std::move(exponents)), state_names_(std::move(state_names))
{
    if (exponents_.rows() < 1 || exponents_.cols() < 1)
        throw InvalidArgument("Dictionary: need at least one observable and one state");
    if ((exponents_.array() < 0).any())
        throw InvalidArgument("Dictionary: exponents must be non-negative");
    if (state_names_.empty()) state_names_ = default_state_names(exponents_.cols());
    if (static_cast<Index>(state_names_.size()) != exponents_.cols())
        throw InvalidArgument("Dictionary: state name count mismatch");

    max_degree_ = exponents_.rowwise().sum().maxCoeff();
    for (Index i = 0; i < size(); ++i) {
        Exponent e(static_cast<std::size_t>(state_dim()));
        for (Index j = 0; j < state_dim(); ++j) e[static_cast<std::size_t>(j)] = exponents_(i, j);
        labels_.push_back(monomial_label(e, state_names_));
    }
    for (Index i = 0; i < size(); ++i)
        for (Index k = i + 1; k < size(); ++k)
            if (exponents_.row(i) == exponents_.row(k))
                throw InvalidArgument("Dictionary: duplicate observable " + labels_[i]);

    std::vector<Index> coords;
    for (Index j = 0; j < state_dim(); ++j) {
        Exponent unit(static_cast<std::size_t>(state_dim()), 0);
        unit[static_cast<std::size_t>(j)] = 1;
        if (auto idx = find(unit)) coords.push_back(*idx);
    }
    if (static_cast<Index>(coords.size()) == state_dim()) coordinates_ = std::move(coords);
}

std::optional<Index> Dictionary::find(const std::string& label) const
{
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) return std::nullopt;
    return static_cast<Index>(it - labels_.begin());
}

std::optional<Index> Dictionary::find(const Exponent& exponent) const
{
    if (static_cast<Index>(exponent.size()) != state_dim()) return std::nullopt;
    for (Index i = 0; i < size(); ++i) {
        bool same = true;
        for (Index j = 0; j < state_dim() && same; ++j)
            same = exponents_(i, j) == exponent[static_cast<std::size_t>(j)];
        if (same) return i;
    }
    return std::nullopt;
}

Matrix Dictionary::evaluate_columns(const Eigen::Ref<const Matrix>& points) const
{
    if (points.rows() != state_dim())
        throw InvalidArgument("Dictionary::evaluate_columns: points must be d x m");
    Matrix out(size(), points.cols());
    for (Index c = 0; c < points.cols(); ++c) out.col(c) = evaluate<double>(points.col(c));
    return out;
}

Vector Dictionary::max_abs_over(const Box& box) const
{
    if (box.dim() != state_dim()) throw InvalidArgument("Dictionary::max_abs_over: box mismatch");
    const Vector reach = box.lo.cwiseAbs().cwiseMax(box.hi.cwiseAbs());
    Vector out(size());
    for (Index i = 0; i < size(); ++i) {
        double value = 1;
        for (Index j = 0; j < state_dim(); ++j) value *= std::pow(reach[j], exponents_(i, j));
        out[i] = value;
    }
    return out;
}

namespace {

Eigen::MatrixXi to_matrix(const std::vector<Exponent>& rows, Index d)
{
    Eigen::MatrixXi m(static_cast<Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Index j = 0; j < d; ++j) m(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    return m;
}

}  // namespace

Dictionary monomial_dictionary(int n, Index d, const std::vector<Exponent>& exclude,
                               std::vector<std::string> state_names)
{
    if (n < 1) throw InvalidArgument("monomial_dictionary: degree must be >= 1");
    if (d < 1) throw InvalidArgument("monomial_dictionary: dimension must be >= 1");
    if (state_names.empty()) state_names = default_state_names(d);

    std::vector<Exponent> all = graded_lex_exponents(n, d);
    for (const Exponent& e : exclude) {
        auto it = std::find(all.begin(), all.end(), e);
        if (it == all.end()) {
            const std::string label = static_cast<Index>(e.size()) == d
                                          ? monomial_label(e, state_names)
                                          : std::string("<wrong arity>");
            throw InvalidArgument("monomial_dictionary: cannot exclude '" + label +
                                  "', not a monomial of degree <= " + std::to_string(n));
        }
        all.erase(it);
    }
    if (all.empty()) throw InvalidArgument("monomial_dictionary: every monomial excluded");
    return Dictionary(to_matrix(all, d), std::move(state_names));
}

Dictionary monomial_dictionary(int n, Index d, const std::vector<std::string>& exclude_labels,
                               std::vector<std::string> state_names)
{
    if (state_names.empty()) state_names = default_state_names(d);
    const Dictionary full = monomial_dictionary(n, d, std::vector<Exponent>{}, state_names);
    std::vector<Exponent> exclude;
    for (const std::string& label : exclude_labels) {
        auto idx = full.find(label);
        if (!idx)
            throw InvalidArgument("monomial_dictionary: cannot exclude '" + label +
                                  "', no such monomial");
        Exponent e(static_cast<std::size_t>(d));
        for (Index j = 0; j < d; ++j) e[static_cast<std::size_t>(j)] = full.exponents()(*idx, j);
        exclude.push_back(e);
    }
    return monomial_dictionary(n, d, exclude, std::move(state_names));
}

double jacobian_fd_error(const Dictionary& dictionary, const Vector& x, double h_rel)
{
    const Matrix J = dictionary.jacobian<double>(x);
    Matrix J_fd(J.rows(), J.cols());
    for (Index j = 0; j < x.size(); ++j) {
        const double h = h_rel * std::max(1.0, std::abs(x[j]));
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        J_fd.col(j) = (dictionary(xp) - dictionary(xm)) / (xp[j] - xm[j]);
    }
    return (J - J_fd).norm() / std::max(J.norm(), 1e-300);
}

}  // namespace kreproj
