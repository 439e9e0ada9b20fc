#include "partial_em/em_engine.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "parallel.hpp"
#include "partial_em/error.hpp"
#include "partial_em/rng.hpp"

namespace partial_em {

namespace {

std::size_t chunk_count(std::size_t n) { return (n + kChunkSize - 1) / kChunkSize; }

std::span<const std::size_t> chunk_of(std::span<const std::size_t> indices, std::size_t c) {
    const std::size_t begin = c * kChunkSize;
    return indices.subspan(begin, std::min(kChunkSize, indices.size() - begin));
}

void check_shapes(const Dataset& data, const MixtureModel& model) {
    model.validate();
    if (model.dim() != data.dim()) {
        throw DimensionMismatch("model dimension " + std::to_string(model.dim()) + " does not match data dimension " +
                                std::to_string(data.dim()));
    }
}

/// log pi_k + log N(x_n | mu_k, Sigma_k) for the chunk rows; laid out point-major (m x K).
RowMatrix log_joint(const Dataset& data, const MixtureModel& model, std::span<const std::size_t> rows) {
    const std::size_t m = rows.size();
    const std::size_t k_count = model.size();
    RowMatrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k_count));
    std::vector<double> buf(m);
    for (std::size_t k = 0; k < k_count; ++k) {
        const auto& comp = model.components[k];
        log_density_rows(data.points, rows, comp, buf);
        const double log_w = std::log(comp.weight);
        for (std::size_t j = 0; j < m; ++j) {
            out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = log_w + buf[j];
        }
    }
    return out;
}

Vector global_variances(const Dataset& data) {
    const Vector mean = data.points.colwise().mean().transpose();
    return (data.points.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() /
           static_cast<double>(data.size());
}

Covariance global_diagonal(const Dataset& data, double ridge) {
    return diagonal_regularized(global_variances(data), ridge);
}

Covariance as_kind(Covariance diag_cov, CovarianceKind kind) {
    if (kind == CovarianceKind::Full) {
        // same matrix, dense representation
        diag_cov.diagonal = false;
    }
    return diag_cov;
}

}  // namespace

void FitConfig::validate() const {
    if (!(tol > 0.0)) throw InvalidArgument("tol must be positive");
    if (max_iter < 1) throw InvalidArgument("max_iter must be at least 1");
    if (ridge && !(*ridge >= 0.0)) throw InvalidArgument("ridge must be nonnegative");
    if (threads < 1) throw InvalidArgument("threads must be at least 1");
}

std::string to_string(InitMethod m) { return m == InitMethod::KMeansPP ? "kmeans++" : "random"; }
std::string to_string(CovarianceKind c) { return c == CovarianceKind::Full ? "full" : "diag"; }

InitMethod parse_init(const std::string& s) {
    if (s == "kmeans++" || s == "kmeanspp") return InitMethod::KMeansPP;
    if (s == "random") return InitMethod::RandomPoints;
    throw InvalidArgument("unknown init method '" + s + "'");
}

CovarianceKind parse_cov(const std::string& s) {
    if (s == "full") return CovarianceKind::Full;
    if (s == "diag") return CovarianceKind::Diagonal;
    throw InvalidArgument("unknown covariance kind '" + s + "'");
}

Matrix global_covariance(const Dataset& data) {
    const Vector mean = data.points.colwise().mean().transpose();
    const Matrix centered = data.points.rowwise() - mean.transpose();
    return centered.transpose() * centered / static_cast<double>(data.size());
}

double default_ridge(const Dataset& data) {
    const double trace = global_variances(data).sum();
    const double r = 1e-6 * trace / static_cast<double>(data.dim());
    return r > 0.0 ? r : 1e-6;
}

std::uint64_t e_step(const Dataset& data, const MixtureModel& model, std::span<const std::size_t> subset,
                     MembershipMatrix& w, std::size_t threads) {
    check_shapes(data, model);
    const std::size_t k_count = model.size();
    if (w.rows() != data.size() || w.cols() != k_count) {
        throw ShapeMismatch("membership matrix must be N x K");
    }
    detail::parallel_chunks(chunk_count(subset.size()), threads, [&](std::size_t c) {
        const auto rows = chunk_of(subset, c);
        const RowMatrix lj = log_joint(data, model, rows);
        for (std::size_t j = 0; j < rows.size(); ++j) {
            const auto row = lj.row(static_cast<Eigen::Index>(j));
            const double norm = log_sum_exp(std::span<const double>(row.data(), k_count));
            for (std::size_t k = 0; k < k_count; ++k) {
                w.weights(static_cast<Eigen::Index>(rows[j]), static_cast<Eigen::Index>(k)) =
                    std::exp(row[static_cast<Eigen::Index>(k)] - norm);
            }
        }
    });
    return static_cast<std::uint64_t>(subset.size()) * k_count;
}

MStepResult m_step(const Dataset& data, const MembershipMatrix& w, double ridge, CovarianceKind cov,
                   std::size_t threads) {
    const std::size_t n = data.size();
    const auto d = data.dim();
    const std::size_t k_count = w.cols();
    if (w.rows() != n || k_count == 0) {
        throw ShapeMismatch("membership matrix must be N x K");
    }
    const IndexSet all = full_update(n);
    const std::size_t chunks = chunk_count(n);
    const auto K = static_cast<Eigen::Index>(k_count);

    // Pass 1: soft counts and weighted sums.
    struct Sums {
        Vector counts;
        Matrix weighted;  // K x d
    };
    Sums total{Vector::Zero(K), Matrix::Zero(K, d)};
    detail::ordered_reduce(
        chunks, threads, total,
        [&](std::size_t c) {
            const auto rows = chunk_of(all, c);
            const auto begin = static_cast<Eigen::Index>(rows.front());
            const auto m = static_cast<Eigen::Index>(rows.size());
            const auto wc = w.weights.middleRows(begin, m);
            return Sums{wc.colwise().sum().transpose(), wc.transpose() * data.points.middleRows(begin, m)};
        },
        [](Sums& acc, const Sums& p) {
            acc.counts += p.counts;
            acc.weighted += p.weighted;
        });

    MStepResult result;
    const double empty_limit = 10.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(n);
    Matrix means(K, d);
    for (Eigen::Index k = 0; k < K; ++k) {
        if (total.counts[k] < empty_limit) {
            result.reinitialized.push_back(static_cast<std::size_t>(k));
            means.row(k).setZero();
        } else {
            means.row(k) = total.weighted.row(k) / total.counts[k];
        }
    }

    // Pass 2: weighted scatter around the new means.
    std::vector<Matrix> scatter(k_count);
    for (auto& s : scatter) {
        s = cov == CovarianceKind::Full ? Matrix::Zero(d, d) : Matrix::Zero(d, 1);
    }
    detail::ordered_reduce(
        chunks, threads, scatter,
        [&](std::size_t c) {
            const auto rows = chunk_of(all, c);
            const auto begin = static_cast<Eigen::Index>(rows.front());
            const auto m = static_cast<Eigen::Index>(rows.size());
            std::vector<Matrix> part(k_count);
            for (Eigen::Index k = 0; k < K; ++k) {
                const Matrix centered = data.points.middleRows(begin, m).rowwise() - means.row(k);
                const Vector wk = w.weights.block(begin, k, m, 1);
                if (cov == CovarianceKind::Full) {
                    part[static_cast<std::size_t>(k)] = centered.transpose() * wk.asDiagonal() * centered;
                } else {
                    part[static_cast<std::size_t>(k)] = centered.array().square().matrix().transpose() * wk;
                }
            }
            return part;
        },
        [](std::vector<Matrix>& acc, const std::vector<Matrix>& p) {
            for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += p[k];
        });

    double count_sum = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) count_sum += total.counts[k];

    result.model.components.resize(k_count);
    std::vector<std::size_t> used_seeds;
    for (std::size_t k = 0; k < k_count; ++k) {
        auto& comp = result.model.components[k];
        const auto ki = static_cast<Eigen::Index>(k);
        if (std::find(result.reinitialized.begin(), result.reinitialized.end(), k) != result.reinitialized.end()) {
            // Reseed at the point the current fit explains worst.
            std::size_t seed_point = 0;
            double lowest = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                if (std::find(used_seeds.begin(), used_seeds.end(), i) != used_seeds.end()) continue;
                const double top = w.weights.row(static_cast<Eigen::Index>(i)).maxCoeff();
                if (top < lowest) {
                    lowest = top;
                    seed_point = i;
                }
            }
            used_seeds.push_back(seed_point);
            comp.mean = data.points.row(static_cast<Eigen::Index>(seed_point)).transpose();
            comp.cov = as_kind(global_diagonal(data, ridge), cov);
            comp.weight = 1.0 / static_cast<double>(k_count);
            continue;
        }
        comp.mean = means.row(ki).transpose();
        comp.weight = total.counts[ki] / count_sum;
        if (cov == CovarianceKind::Full) {
            Matrix sigma = scatter[k] / total.counts[ki];
            sigma = 0.5 * (sigma + sigma.transpose()).eval();
            comp.cov = cholesky_regularized(sigma, ridge);
        } else {
            comp.cov = diagonal_regularized(scatter[k].col(0) / total.counts[ki], ridge);
        }
    }
    if (!result.reinitialized.empty()) {
        double sum = 0.0;
        for (const auto& c : result.model.components) sum += c.weight;
        for (auto& c : result.model.components) c.weight /= sum;
    }
    return result;
}

double observed_loglik(const Dataset& data, const MixtureModel& model, std::size_t threads) {
    check_shapes(data, model);
    const IndexSet all = full_update(data.size());
    const std::size_t k_count = model.size();
    double total = 0.0;
    detail::ordered_reduce(
        chunk_count(all.size()), threads, total,
        [&](std::size_t c) {
            const RowMatrix lj = log_joint(data, model, chunk_of(all, c));
            double sum = 0.0;
            for (Eigen::Index j = 0; j < lj.rows(); ++j) {
                sum += log_sum_exp(std::span<const double>(lj.row(j).data(), k_count));
            }
            return sum;
        },
        [](double& acc, double p) { acc += p; });
    return total;
}

double f_function(const Dataset& data, const MixtureModel& model, const MembershipMatrix& q, std::size_t threads) {
    check_shapes(data, model);
    if (q.rows() != data.size() || q.cols() != model.size()) {
        throw ShapeMismatch("membership matrix must be N x K");
    }
    const IndexSet all = full_update(data.size());
    double total = 0.0;
    detail::ordered_reduce(
        chunk_count(all.size()), threads, total,
        [&](std::size_t c) {
            const auto rows = chunk_of(all, c);
            const RowMatrix lj = log_joint(data, model, rows);
            double sum = 0.0;
            for (std::size_t j = 0; j < rows.size(); ++j) {
                for (Eigen::Index k = 0; k < lj.cols(); ++k) {
                    const double qk = q.weights(static_cast<Eigen::Index>(rows[j]), k);
                    if (qk > 0.0) {
                        sum += qk * (lj(static_cast<Eigen::Index>(j), k) - std::log(qk));
                    }
                }
            }
            return sum;
        },
        [](double& acc, double p) { acc += p; });
    return total;
}

bool converged(double prev_loglik, double cur_loglik, std::size_t n, double tol) {
    return std::abs(cur_loglik - prev_loglik) / static_cast<double>(n) < tol;
}

std::vector<std::size_t> kmeanspp_seeds(const RowMatrix& points, std::size_t k, std::uint64_t seed) {
    const std::size_t n = static_cast<std::size_t>(points.rows());
    if (k < 1 || k > n) {
        throw InitFailure("cannot choose " + std::to_string(k) + " seeds from " + std::to_string(n) + " points");
    }
    Rng rng(seed);
    std::vector<std::size_t> seeds{static_cast<std::size_t>(rng.below(n))};
    Vector d2 = (points.rowwise() - points.row(static_cast<Eigen::Index>(seeds[0]))).rowwise().squaredNorm();
    // Greedy variant: draw several D^2 candidates and keep the one that
    // lowers the potential most.
    const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
    while (seeds.size() < k) {
        const double total = d2.sum();
        if (!(total > 0.0)) {
            throw InitFailure("fewer than " + std::to_string(k) + " distinct points");
        }
        std::size_t best = n;
        double best_potential = std::numeric_limits<double>::infinity();
        Vector best_d2;
        for (std::size_t t = 0; t < trials; ++t) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            std::size_t pick = n;
            std::size_t last_positive = n;
            for (std::size_t i = 0; i < n; ++i) {
                const double v = d2[static_cast<Eigen::Index>(i)];
                if (v <= 0.0) continue;
                last_positive = i;
                acc += v;
                if (acc > target) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) pick = last_positive;  // rounding at the top end
            Vector cand = d2.cwiseMin(
                (points.rowwise() - points.row(static_cast<Eigen::Index>(pick))).rowwise().squaredNorm());
            const double potential = cand.sum();
            if (potential < best_potential) {
                best_potential = potential;
                best = pick;
                best_d2 = std::move(cand);
            }
        }
        seeds.push_back(best);
        d2 = std::move(best_d2);
    }
    return seeds;
}

MixtureModel initialize(const Dataset& data, std::size_t k, const FitConfig& config) {
    data.validate();
    const std::size_t n = data.size();
    if (k < 1 || k > n) {
        throw InitFailure("K must lie in [1, N]");
    }
    std::vector<std::size_t> chosen;
    if (config.init == InitMethod::KMeansPP) {
        chosen = kmeanspp_seeds(data.points, k, config.seed);
    } else {
        Rng rng(config.seed);
        IndexSet order = full_update(n);
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
        }
        for (std::size_t idx : order) {
            const auto row = data.points.row(static_cast<Eigen::Index>(idx));
            const bool duplicate = std::any_of(chosen.begin(), chosen.end(), [&](std::size_t c) {
                return data.points.row(static_cast<Eigen::Index>(c)) == row;
            });
            if (!duplicate) chosen.push_back(idx);
            if (chosen.size() == k) break;
        }
        if (chosen.size() < k) {
            throw InitFailure("fewer than " + std::to_string(k) + " distinct points");
        }
    }
    const double ridge = config.ridge.value_or(default_ridge(data));
    const Covariance cov = as_kind(global_diagonal(data, ridge), config.cov);
    MixtureModel model;
    for (std::size_t idx : chosen) {
        model.components.push_back(GaussianComponent{data.points.row(static_cast<Eigen::Index>(idx)).transpose(), cov,
                                                     1.0 / static_cast<double>(k)});
    }
    return model;
}

FitResult fit(const Dataset& data, std::size_t k, const Policy& policy, const FitConfig& config) {
    config.validate();
    return fit_from(data, initialize(data, k, config), policy, config);
}

FitResult fit_from(const Dataset& data, MixtureModel initial, const Policy& policy, const FitConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    data.validate();
    config.validate();
    validate(policy);
    check_shapes(data, initial);

    const std::size_t n = data.size();
    const std::size_t k_count = initial.size();
    const double ridge = config.ridge.value_or(default_ridge(data));

    FitResult out;
    RunReport& report = out.report;
    report.ridge = ridge;
    MixtureModel model = std::move(initial);
    MembershipMatrix w(n, k_count);
    ActiveState state(n);
    IndexSet active = full_update(n);

    double prev = observed_loglik(data, model, config.threads);
    report.loglik_density_evals += static_cast<std::uint64_t>(n) * k_count;
    report.initial_loglik = prev / static_cast<double>(n);
    report.termination = Termination::MaxIterations;

    for (std::size_t it = 1; it <= config.max_iter; ++it) {
        report.active_counts.push_back(active.size());
        if (config.record_active_sets) report.active_sets.push_back(active);

        report.density_evals += e_step(data, model, active, w, config.threads);
        if (config.record_f_trace) report.f_trace.push_back(f_function(data, model, w, config.threads));

        MStepResult ms = m_step(data, w, ridge, config.cov, config.threads);
        for (std::size_t comp : ms.reinitialized) {
            report.events.push_back(ModelEvent{it, comp, "empty_component_reinitialized"});
        }
        model = std::move(ms.model);
        if (config.record_f_trace) report.f_trace.push_back(f_function(data, model, w, config.threads));

        const double cur = observed_loglik(data, model, config.threads);
        report.loglik_density_evals += static_cast<std::uint64_t>(n) * k_count;
        report.loglik_trace.push_back(cur / static_cast<double>(n));
        if (config.record_models) report.model_trace.push_back(model);
        report.iterations = it;

        if (converged(prev, cur, n, config.tol)) {
            report.termination = Termination::Converged;
            break;
        }
        prev = cur;

        const std::vector<int> assignments = hard_assign(w);
        Selection sel = select_next(policy, PolicyInput{w, assignments, active, it}, state);
        report.policy_touches += sel.touches;
        if (sel.next.empty()) {
            report.termination = Termination::ActiveSetEmpty;
            break;
        }
        active = std::move(sel.next);
    }

    report.final_model = model;
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.model = std::move(model);
    out.membership = std::move(w);
    return out;
}

}  // namespace partial_em
