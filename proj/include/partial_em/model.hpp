#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "partial_em/gaussian.hpp"

namespace partial_em {

using IndexSet = std::vector<std::size_t>;  ///< sorted ascending, no duplicates

/// N x d observations with optional integer ground-truth labels.
struct Dataset {
    RowMatrix points;
    std::optional<std::vector<int>> labels;

    std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
    Eigen::Index dim() const { return points.cols(); }

    /// Throws InvalidArgument unless N >= 1, d >= 1, entries finite and the
    /// label vector (if any) has length N.
    void validate() const;

    /// Rows `indices` in the given order; labels follow along.
    Dataset subset(std::span<const std::size_t> indices) const;
};

struct MixtureModel {
    std::vector<GaussianComponent> components;

    std::size_t size() const { return components.size(); }
    Eigen::Index dim() const { return components.empty() ? 0 : components.front().dim(); }
    Vector weights() const;

    /// K >= 1, shared dimension, positive weights summing to one within 1e-12.
    void validate() const;
};

/// N x K row-stochastic responsibilities.
struct MembershipMatrix {
    RowMatrix weights;

    MembershipMatrix() = default;
    MembershipMatrix(std::size_t n, std::size_t k) : weights(RowMatrix::Zero(n, k)) {}
    explicit MembershipMatrix(RowMatrix w) : weights(std::move(w)) {}

    std::size_t rows() const { return static_cast<std::size_t>(weights.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(weights.cols()); }
};

/// Per-point bookkeeping for the active-set policies: last hard assignment,
/// number of consecutive E-steps spent in it, and whether the point takes
/// part in the next E-step.
struct ActiveState {
    std::vector<std::int32_t> cluster;
    std::vector<std::uint32_t> streak;
    std::vector<std::uint8_t> active;

    explicit ActiveState(std::size_t n = 0) : cluster(n, -1), streak(n, 0), active(n, 1) {}
    std::size_t size() const { return cluster.size(); }
};

enum class Termination { Converged, ActiveSetEmpty, MaxIterations };

std::string to_string(Termination t);

struct ModelEvent {
    std::size_t iteration;
    std::size_t component;
    std::string kind;
};

/// Everything recorded about a single fit.
struct RunReport {
    std::size_t iterations = 0;
    MixtureModel final_model;
    double initial_loglik = 0.0;        ///< mean observed log-likelihood of the initial model
    std::vector<double> loglik_trace;   ///< mean observed log-likelihood after each M-step
    std::vector<double> f_trace;        ///< F after each E-step and each M-step (optional)
    std::uint64_t density_evals = 0;    ///< log_density calls made by E-steps
    std::uint64_t loglik_density_evals = 0;  ///< log_density calls made by the convergence test
    std::vector<std::size_t> active_counts;  ///< |active set| used by each E-step
    std::vector<IndexSet> active_sets;       ///< the sets themselves (optional)
    std::vector<MixtureModel> model_trace;   ///< model after each M-step (optional)
    std::vector<ModelEvent> events;
    std::size_t policy_touches = 0;
    double ridge = 0.0;                      ///< ridge added to every covariance update
    double wall_time = 0.0;
    Termination termination = Termination::MaxIterations;
};

/// Row-wise argmax; ties go to the lowest component index.
std::vector<int> hard_assign(const MembershipMatrix& w);

/// CSV with header `point_id,w_0,...,w_{K-1}` at 17 significant digits.
std::string membership_to_csv(const MembershipMatrix& w);
void write_membership_csv(const MembershipMatrix& w, const std::string& path);

}  // namespace partial_em
