#ifndef PAIRCLF_ANALYSIS_PCA_HPP
#define PAIRCLF_ANALYSIS_PCA_HPP

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "pairclf/core/error.hpp"

namespace pairclf::analysis {

struct Pca2d {
    /// n x 2 projections of the centred inputs.
    std::vector<std::array<double, 2>> coords;
    /// Two orthonormal principal directions, each of the input dimension.
    std::array<std::vector<double>, 2> components;
    std::array<double, 2> explained_ratio{0.0, 0.0};
    std::vector<double> mean;
};

namespace detail {

inline void fix_sign(Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > 1e-12) {
            if (v[i] < 0) v = -v;
            return;
        }
    }
}

/// Unit vector orthogonal to `u`, built from the basis vector that `u`
/// overlaps least.
inline Eigen::VectorXd orthogonal_to(const Eigen::VectorXd& u) {
    Eigen::Index j = 0;
    u.cwiseAbs().minCoeff(&j);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(u.size());
    e[j] = 1.0;
    e -= u.dot(e) * u;
    return e.normalized();
}

} // namespace detail

/// Two-component PCA. Eigenvectors come from the covariance matrix, or from
/// the Gram matrix when there are fewer points than dimensions.
inline Pca2d pca_2d(const std::vector<std::vector<double>>& vectors) {
    const std::size_t n = vectors.size();
    if (n < 3) throw ShapeError("pca_2d needs at least 3 vectors");
    const std::size_t d = vectors[0].size();
    if (d < 2) throw ShapeError("pca_2d needs dimension >= 2");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        if (vectors[i].size() != d) throw ShapeError("pca_2d: vectors differ in length");
        for (std::size_t j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vectors[i][j];
    }
    const Eigen::RowVectorXd mu = X.colwise().mean();
    X.rowwise() -= mu;
    const double total = X.squaredNorm();
    if (!(total > 0.0)) throw NumericalError("pca_2d: all vectors are identical");

    Eigen::VectorXd lambda(2);
    Eigen::MatrixXd comps(static_cast<Eigen::Index>(d), 2);
    if (n < d) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X * X.transpose());
        const auto& ev = es.eigenvalues();
        const Eigen::Index top = ev.size() - 1;
        for (int k = 0; k < 2; ++k) {
            lambda[k] = std::max(0.0, ev[top - k]);
            comps.col(k) = X.transpose() * es.eigenvectors().col(top - k);
        }
        comps.col(0).normalize();
        // A vanishing second eigenvalue leaves no usable direction in the
        // Gram basis; any unit vector orthogonal to the first will do.
        if (lambda[1] <= 1e-12 * lambda[0]) {
            lambda[1] = 0.0;
            comps.col(1) = detail::orthogonal_to(comps.col(0));
        } else {
            comps.col(1).normalize();
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X.transpose() * X);
        const auto& ev = es.eigenvalues();
        const Eigen::Index top = ev.size() - 1;
        for (int k = 0; k < 2; ++k) {
            lambda[k] = std::max(0.0, ev[top - k]);
            comps.col(k) = es.eigenvectors().col(top - k);
        }
        if (lambda[1] <= 1e-12 * lambda[0]) lambda[1] = 0.0;
    }

    Pca2d out;
    out.mean.assign(mu.data(), mu.data() + d);
    for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd c = comps.col(k);
        detail::fix_sign(c);
        comps.col(k) = c;
        out.components[static_cast<std::size_t>(k)].assign(c.data(), c.data() + d);
        out.explained_ratio[static_cast<std::size_t>(k)] = std::min(1.0, lambda[k] / total);
    }
    const Eigen::MatrixXd P = X * comps;
    out.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.coords[i] = {P(static_cast<Eigen::Index>(i), 0), P(static_cast<Eigen::Index>(i), 1)};
    return out;
}

} // namespace pairclf::analysis

#endif // PAIRCLF_ANALYSIS_PCA_HPP
