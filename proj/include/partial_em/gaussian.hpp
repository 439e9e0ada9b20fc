#pragma once

#include <Eigen/Dense>
#include <span>

namespace partial_em {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A symmetric positive-definite covariance together with its lower Cholesky
/// factor. Diagonal covariances keep the same representation but take O(d)
/// paths through the density code.
struct Covariance {
    Matrix matrix;        ///< includes the applied ridge
    Matrix factor;        ///< lower triangular, factor * factor^T == matrix
    double log_det = 0.0;
    double ridge = 0.0;   ///< ridge actually added (after any escalation)
    bool diagonal = false;

    Eigen::Index dim() const { return matrix.rows(); }
};

struct GaussianComponent {
    Vector mean;
    Covariance cov;
    double weight = 1.0;

    Eigen::Index dim() const { return mean.size(); }
};

/// Factorizes matrix + ridge*I. When the factorization fails the ridge is
/// multiplied by ten until it exceeds 1e-2 * trace / d, after which
/// SingularCovariance is thrown.
Covariance cholesky_regularized(const Matrix& matrix, double ridge);

/// Same as cholesky_regularized but only the diagonal of `matrix` is used.
Covariance diagonal_regularized(const Vector& variances, double ridge);

/// log N(x | mean, cov) through a triangular solve.
double log_density(const Eigen::Ref<const Vector>& x, const GaussianComponent& comp);

/// log N(x_n | mean, cov) for the rows `indices` of `points`, written to `out`.
/// Equivalent to calling log_density per row but solves all rows at once.
void log_density_rows(const RowMatrix& points, std::span<const std::size_t> indices,
                      const GaussianComponent& comp, std::span<double> out);

/// log(sum(exp(values))) with max shift. All -inf gives -inf.
double log_sum_exp(std::span<const double> values);

}  // namespace partial_em
