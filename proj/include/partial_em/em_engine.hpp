#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "partial_em/model.hpp"
#include "partial_em/policies.hpp"

namespace partial_em {

enum class InitMethod { KMeansPP, RandomPoints };
enum class CovarianceKind { Full, Diagonal };

struct FitConfig {
    double tol = 1e-6;                 ///< on the change of the mean observed log-likelihood
    std::size_t max_iter = 500;
    std::optional<double> ridge;       ///< unset: 1e-6 * trace(global covariance) / d
    std::uint64_t seed = 0;
    InitMethod init = InitMethod::KMeansPP;
    CovarianceKind cov = CovarianceKind::Full;
    std::size_t threads = 1;

    bool record_f_trace = false;
    bool record_active_sets = false;
    bool record_models = false;

    void validate() const;
};

std::string to_string(InitMethod m);
std::string to_string(CovarianceKind c);
InitMethod parse_init(const std::string& s);
CovarianceKind parse_cov(const std::string& s);

/// Rows are processed in fixed chunks of this many points. Every reduction
/// sums per-chunk partials in chunk order, so results do not depend on the
/// number of worker threads.
inline constexpr std::size_t kChunkSize = 256;

/// Sample covariance of all points (biased, divides by N).
Matrix global_covariance(const Dataset& data);

/// 1e-6 * trace(global covariance) / d, falling back to 1e-6 for constant data.
double default_ridge(const Dataset& data);

/// Recomputes the rows of `w` listed in `subset` from `model`; other rows are
/// left as they are. Returns the number of log_density evaluations (|subset| K).
std::uint64_t e_step(const Dataset& data, const MixtureModel& model, std::span<const std::size_t> subset,
                     MembershipMatrix& w, std::size_t threads = 1);

struct MStepResult {
    MixtureModel model;
    std::vector<std::size_t> reinitialized;  ///< components that were empty and got reseeded
};

/// Closed-form parameter update from the full membership matrix, with `ridge`
/// added to every covariance.
MStepResult m_step(const Dataset& data, const MembershipMatrix& w, double ridge,
                   CovarianceKind cov = CovarianceKind::Full, std::size_t threads = 1);

/// sum_n log sum_k pi_k N(x_n | mu_k, Sigma_k).
double observed_loglik(const Dataset& data, const MixtureModel& model, std::size_t threads = 1);

/// sum_n sum_k q_nk (log pi_k + log N(x_n | mu_k, Sigma_k)) + sum_n H(q_n), with 0 log 0 = 0.
double f_function(const Dataset& data, const MixtureModel& model, const MembershipMatrix& q,
                  std::size_t threads = 1);

bool converged(double prev_loglik, double cur_loglik, std::size_t n, double tol);

/// Initial model: K means from k-means++ (or K distinct random points),
/// diagonal of the global covariance plus ridge, uniform weights.
MixtureModel initialize(const Dataset& data, std::size_t k, const FitConfig& config);

/// Greedy k-means++ seeding (2 + ln k candidates per step). Throws InitFailure when fewer than k distinct points exist.
std::vector<std::size_t> kmeanspp_seeds(const RowMatrix& points, std::size_t k, std::uint64_t seed);

struct FitResult {
    MixtureModel model;
    MembershipMatrix membership;
    RunReport report;
};

/// EM with a partial E-step. Under FullPolicy every E-step covers all points
/// and the loop is plain EM.
FitResult fit(const Dataset& data, std::size_t k, const Policy& policy, const FitConfig& config);

/// Same, starting from a caller-supplied model instead of `initialize`.
FitResult fit_from(const Dataset& data, MixtureModel initial, const Policy& policy, const FitConfig& config);

}  // namespace partial_em
