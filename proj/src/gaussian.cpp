#include "partial_em/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "partial_em/error.hpp"

namespace partial_em {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_symmetric(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw DimensionMismatch("covariance must be square");
    }
    const double scale = std::max(m.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw InvalidArgument("covariance is not symmetric");
    }
}

double escalation_cap(double trace, Eigen::Index d) { return 1e-2 * trace / static_cast<double>(d); }

}  // namespace

Covariance cholesky_regularized(const Matrix& matrix, double ridge) {
    if (!(ridge >= 0.0)) {
        throw InvalidArgument("ridge must be nonnegative");
    }
    check_symmetric(matrix);
    const Eigen::Index d = matrix.rows();
    if (d == 0) {
        throw DimensionMismatch("empty covariance");
    }
    const double cap = escalation_cap(matrix.trace(), d);

    double applied = ridge;
    for (;;) {
        Matrix ridged = matrix;
        if (applied > 0.0) {
            ridged.diagonal().array() += applied;
        }
        Eigen::LLT<Matrix> llt(ridged);
        if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all()) {
            Covariance cov;
            cov.factor = llt.matrixL();
            cov.log_det = 2.0 * cov.factor.diagonal().array().log().sum();
            cov.matrix = std::move(ridged);
            cov.ridge = applied;
            if (std::isfinite(cov.log_det)) {
                return cov;
            }
        }
        const double next = applied > 0.0 ? applied * 10.0 : 1e-10 * std::max(cap, 0.0);
        if (!(next > 0.0) || next > cap) {
            throw SingularCovariance("covariance is not positive definite (ridge reached " +
                                     std::to_string(applied) + ")");
        }
        applied = next;
    }
}

Covariance diagonal_regularized(const Vector& variances, double ridge) {
    if (!(ridge >= 0.0)) {
        throw InvalidArgument("ridge must be nonnegative");
    }
    const Eigen::Index d = variances.size();
    if (d == 0) {
        throw DimensionMismatch("empty covariance");
    }
    const double cap = escalation_cap(variances.sum(), d);
    double applied = ridge;
    for (;;) {
        const Vector v = variances.array() + applied;
        if ((v.array() > 0.0).all() && v.allFinite()) {
            Covariance cov;
            cov.matrix = v.asDiagonal();
            cov.factor = v.cwiseSqrt().asDiagonal();
            cov.log_det = v.array().log().sum();
            cov.ridge = applied;
            cov.diagonal = true;
            return cov;
        }
        const double next = applied > 0.0 ? applied * 10.0 : 1e-10 * std::max(cap, 0.0);
        if (!(next > 0.0) || next > cap) {
            throw SingularCovariance("diagonal covariance has a nonpositive variance");
        }
        applied = next;
    }
}

double log_density(const Eigen::Ref<const Vector>& x, const GaussianComponent& comp) {
    const Eigen::Index d = comp.dim();
    if (x.size() != d || comp.cov.dim() != d) {
        throw DimensionMismatch("point has dimension " + std::to_string(x.size()) + ", component has " +
                                std::to_string(d));
    }
    Vector z = x - comp.mean;
    if (comp.cov.diagonal) {
        z.array() /= comp.cov.factor.diagonal().array();
    } else {
        comp.cov.factor.triangularView<Eigen::Lower>().solveInPlace(z);
    }
    return -0.5 * (static_cast<double>(d) * kLog2Pi + comp.cov.log_det + z.squaredNorm());
}

void log_density_rows(const RowMatrix& points, std::span<const std::size_t> indices,
                      const GaussianComponent& comp, std::span<double> out) {
    const Eigen::Index d = comp.dim();
    if (points.cols() != d || comp.cov.dim() != d) {
        throw DimensionMismatch("points have dimension " + std::to_string(points.cols()) +
                                ", component has " + std::to_string(d));
    }
    if (out.size() != indices.size()) {
        throw DimensionMismatch("output span does not match index count");
    }
    const auto m = static_cast<Eigen::Index>(indices.size());
    if (m == 0) {
        return;
    }
    // Column j holds x_{indices[j]} - mean.
    Matrix z(d, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        z.col(j) = points.row(static_cast<Eigen::Index>(indices[j])).transpose() - comp.mean;
    }
    if (comp.cov.diagonal) {
        z.array().colwise() /= comp.cov.factor.diagonal().array();
    } else {
        comp.cov.factor.triangularView<Eigen::Lower>().solveInPlace(z);
    }
    const double constant = static_cast<double>(d) * kLog2Pi + comp.cov.log_det;
    for (Eigen::Index j = 0; j < m; ++j) {
        out[static_cast<std::size_t>(j)] = -0.5 * (constant + z.col(j).squaredNorm());
    }
}

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) {
        throw InvalidArgument("log_sum_exp of an empty sequence");
    }
    if (values.size() == 1) {
        return values[0];
    }
    const double top = *std::max_element(values.begin(), values.end());
    if (std::isinf(top)) {
        return top;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += std::exp(v - top);
    }
    return top + std::log(sum);
}

}  // namespace partial_em
