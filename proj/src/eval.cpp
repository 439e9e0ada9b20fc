#include "partial_em/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>

#include "partial_em/em_engine.hpp"
#include "partial_em/error.hpp"

namespace partial_em {

namespace {

void check_same_shape(const MembershipMatrix& a, const MembershipMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeMismatch("membership matrices differ in shape");
    }
}

/// Majority label per cluster id; ties resolve to the smaller label.
std::map<int, int> majority_labels(std::span<const int> assignments, std::span<const int> labels) {
    if (assignments.size() != labels.size()) {
        throw ShapeMismatch("assignment and label vectors differ in length");
    }
    std::map<int, std::map<int, std::size_t>> tally;
    for (std::size_t i = 0; i < assignments.size(); ++i) ++tally[assignments[i]][labels[i]];
    std::map<int, int> out;
    for (const auto& [cluster, counts] : tally) {
        int best = counts.begin()->first;
        std::size_t best_count = 0;
        for (const auto& [label, c] : counts) {
            if (c > best_count) {
                best = label;
                best_count = c;
            }
        }
        out[cluster] = best;
    }
    return out;
}

}  // namespace

std::vector<std::size_t> match_columns(const MembershipMatrix& a, const MembershipMatrix& b) {
    check_same_shape(a, b);
    const std::size_t k = a.cols();
    const auto ha = hard_assign(a);
    const auto hb = hard_assign(b);
    std::vector<std::vector<std::size_t>> overlap(k, std::vector<std::size_t>(k, 0));
    for (std::size_t n = 0; n < ha.size(); ++n) ++overlap[static_cast<std::size_t>(ha[n])][static_cast<std::size_t>(hb[n])];
    // soft overlap breaks ties between equal counts
    const Matrix soft = a.weights.transpose() * b.weights;

    std::vector<std::size_t> perm(k, k);
    std::vector<bool> used_b(k, false);
    for (std::size_t step = 0; step < k; ++step) {
        std::size_t bi = k, bj = k;
        for (std::size_t i = 0; i < k; ++i) {
            if (perm[i] != k) continue;
            for (std::size_t j = 0; j < k; ++j) {
                if (used_b[j]) continue;
                if (bi == k) {
                    bi = i;
                    bj = j;
                    continue;
                }
                const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
                const auto bii = static_cast<Eigen::Index>(bi), bjj = static_cast<Eigen::Index>(bj);
                if (overlap[i][j] > overlap[bi][bj] ||
                    (overlap[i][j] == overlap[bi][bj] && soft(ii, jj) > soft(bii, bjj))) {
                    bi = i;
                    bj = j;
                }
            }
        }
        perm[bi] = bj;
        used_b[bj] = true;
    }
    return perm;
}

double membership_error(const MembershipMatrix& a, const MembershipMatrix& b) {
    check_same_shape(a, b);
    const auto perm = match_columns(a, b);
    RowMatrix matched(a.weights.rows(), a.weights.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        matched.col(static_cast<Eigen::Index>(perm[i])) = a.weights.col(static_cast<Eigen::Index>(i));
    }
    const double ref = b.weights.norm();
    if (ref == 0.0) {
        throw InvalidArgument("reference membership matrix is zero");
    }
    return (matched - b.weights).norm() / ref;
}

double classification_error(std::span<const int> assignments, std::span<const int> labels) {
    const auto majority = majority_labels(assignments, labels);
    if (assignments.empty()) return 0.0;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (majority.at(assignments[i]) != labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(assignments.size());
}

ConfusionMatrix confusion_matrix(std::span<const int> assignments, std::span<const int> labels) {
    const auto majority = majority_labels(assignments, labels);
    ConfusionMatrix cm;
    for (const auto& [cluster, label] : majority) cm.predicted.push_back(label);
    std::sort(cm.predicted.begin(), cm.predicted.end());
    cm.predicted.erase(std::unique(cm.predicted.begin(), cm.predicted.end()), cm.predicted.end());
    cm.truth.assign(labels.begin(), labels.end());
    std::sort(cm.truth.begin(), cm.truth.end());
    cm.truth.erase(std::unique(cm.truth.begin(), cm.truth.end()), cm.truth.end());

    auto pos = [](const std::vector<int>& v, int x) {
        return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
    };
    cm.counts.assign(cm.predicted.size(), std::vector<std::uint64_t>(cm.truth.size(), 0));
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        ++cm.counts[pos(cm.predicted, majority.at(assignments[i]))][pos(cm.truth, labels[i])];
    }
    return cm;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (auto c : row) t += c;
    return t;
}

std::string ConfusionMatrix::to_text() const {
    char buf[64];
    std::string out = "predicted\\true";
    for (int t : truth) {
        std::snprintf(buf, sizeof buf, " %7d", t);
        out += buf;
    }
    out += '\n';
    for (std::size_t r = 0; r < predicted.size(); ++r) {
        std::snprintf(buf, sizeof buf, "%14d", predicted[r]);
        out += buf;
        for (auto c : counts[r]) {
            std::snprintf(buf, sizeof buf, " %7llu", static_cast<unsigned long long>(c));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

KMeansResult kmeans(const RowMatrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iter, double tol) {
    const auto n = points.rows();
    const auto seeds = kmeanspp_seeds(points, k, seed);
    KMeansResult res;
    res.centers.resize(static_cast<Eigen::Index>(k), points.cols());
    for (std::size_t j = 0; j < k; ++j) res.centers.row(static_cast<Eigen::Index>(j)) = points.row(static_cast<Eigen::Index>(seeds[j]));
    res.assignments.assign(static_cast<std::size_t>(n), 0);
    std::vector<double> dist(static_cast<std::size_t>(n));

    for (std::size_t it = 1; it <= max_iter; ++it) {
        double wcss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(k); ++j) {
                const double dd = (points.row(i) - res.centers.row(j)).squaredNorm();
                if (dd < best_d) {
                    best_d = dd;
                    best = static_cast<int>(j);
                }
            }
            res.assignments[static_cast<std::size_t>(i)] = best;
            dist[static_cast<std::size_t>(i)] = best_d;
            wcss += best_d;
        }
        res.wcss_trace.push_back(wcss);
        res.iterations = it;

        RowMatrix next = RowMatrix::Zero(static_cast<Eigen::Index>(k), points.cols());
        std::vector<std::size_t> counts(k, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(res.assignments[static_cast<std::size_t>(i)]);
            next.row(static_cast<Eigen::Index>(c)) += points.row(i);
            ++counts[c];
        }
        for (std::size_t j = 0; j < k; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            if (counts[j] > 0) {
                next.row(jj) /= static_cast<double>(counts[j]);
                continue;
            }
            // reseed the empty cluster at the worst-served point
            const auto far = static_cast<Eigen::Index>(std::max_element(dist.begin(), dist.end()) - dist.begin());
            next.row(jj) = points.row(far);
            dist[static_cast<std::size_t>(far)] = 0.0;
        }
        const double movement = (next - res.centers).rowwise().norm().maxCoeff();
        res.centers = std::move(next);
        if (movement < tol) break;
    }
    return res;
}

}  // namespace partial_em
