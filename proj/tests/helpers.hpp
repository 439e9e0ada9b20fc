#pragma once

#include <random>
#include <vector>

#include "oracles.hpp"
#include "partial_em/data_io.hpp"
#include "partial_em/em_engine.hpp"
#include "partial_em/model.hpp"

namespace testing_support {

namespace pe = partial_em;

inline pe::Dataset to_dataset(const std::vector<oracle::Vec>& x) {
    pe::Dataset data;
    data.points.resize(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(x[0].size()));
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x[i].size(); ++j)
            data.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[i][j];
    return data;
}

inline std::vector<oracle::Vec> to_points(const pe::Dataset& data) {
    std::vector<oracle::Vec> x(data.size(), oracle::Vec(static_cast<std::size_t>(data.dim())));
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x[i].size(); ++j)
            x[i][j] = data.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return x;
}

inline pe::Matrix to_matrix(const oracle::Mat& m) {
    pe::Matrix out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m[0].size()));
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m[i].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j];
    return out;
}

inline oracle::Mat to_mat(const pe::RowMatrix& m) {
    oracle::Mat out = oracle::zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    return out;
}

inline pe::MembershipMatrix to_membership(const oracle::Mat& w) {
    pe::RowMatrix m(static_cast<Eigen::Index>(w.size()), static_cast<Eigen::Index>(w[0].size()));
    for (std::size_t i = 0; i < w.size(); ++i)
        for (std::size_t j = 0; j < w[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w[i][j];
    return pe::MembershipMatrix(std::move(m));
}

inline pe::MixtureModel to_model(const oracle::Mixture& mix) {
    pe::MixtureModel model;
    for (std::size_t k = 0; k < mix.weights.size(); ++k) {
        pe::GaussianComponent c;
        c.mean = Eigen::Map<const pe::Vector>(mix.means[k].data(), static_cast<Eigen::Index>(mix.means[k].size()));
        c.cov = pe::cholesky_regularized(to_matrix(mix.covs[k]), 0.0);
        c.weight = mix.weights[k];
        model.components.push_back(std::move(c));
    }
    return model;
}

template <class Gen>
oracle::Mixture random_mixture(std::size_t k, std::size_t d, Gen& gen) {
    std::uniform_real_distribution<double> u(-2.0, 2.0), pw(0.2, 1.0);
    oracle::Mixture m;
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        m.weights.push_back(pw(gen));
        total += m.weights.back();
        oracle::Vec mu(d);
        for (auto& v : mu) v = u(gen);
        m.means.push_back(mu);
        m.covs.push_back(oracle::random_spd(d, gen));
    }
    for (auto& w : m.weights) w /= total;
    return m;
}

template <class Gen>
std::vector<oracle::Vec> random_points(std::size_t n, std::size_t d, Gen& gen) {
    std::normal_distribution<double> g(0.0, 1.5);
    std::vector<oracle::Vec> x(n, oracle::Vec(d));
    for (auto& row : x)
        for (auto& v : row) v = g(gen);
    return x;
}

template <class Gen>
oracle::Mat random_stochastic(std::size_t n, std::size_t k, Gen& gen) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    oracle::Mat w = oracle::zeros(n, k);
    for (auto& row : w) {
        double s = 0.0;
        for (auto& v : row) s += (v = u(gen));
        for (auto& v : row) v /= s;
    }
    return w;
}

/// Two unit-variance 2-d blobs `gap` apart along the first axis.
inline pe::Dataset two_blobs(std::size_t n_each, double gap, std::uint64_t seed) {
    pe::MixtureSpec spec;
    spec.weights = pe::Vector{{0.5, 0.5}};
    spec.means = pe::Matrix{{-gap / 2.0, 0.0}, {gap / 2.0, 0.0}};
    spec.covariances = {pe::Matrix::Identity(2, 2), pe::Matrix::Identity(2, 2)};
    return pe::sample_mixture(spec, 2 * n_each, seed);
}

}  // namespace testing_support
