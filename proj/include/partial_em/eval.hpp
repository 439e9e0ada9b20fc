#pragma once

#include <cstdint>
#include <vector>

#include "partial_em/model.hpp"

namespace partial_em {

/// Column permutation p such that column j of `a` is matched to column p[j]
/// of `b`. Greedy on the hard-assignment overlap counts, largest first.
std::vector<std::size_t> match_columns(const MembershipMatrix& a, const MembershipMatrix& b);

/// ||a' - b||_F / ||b||_F where a' is `a` with its columns matched to `b`.
double membership_error(const MembershipMatrix& a, const MembershipMatrix& b);

/// Fraction of points whose label differs from the majority label of their
/// cluster (ties go to the smaller label).
double classification_error(std::span<const int> assignments, std::span<const int> labels);

struct ConfusionMatrix {
    std::vector<int> predicted;  ///< row labels (majority labels of clusters)
    std::vector<int> truth;      ///< column labels
    std::vector<std::vector<std::uint64_t>> counts;

    std::uint64_t total() const;
    std::string to_text() const;
};

ConfusionMatrix confusion_matrix(std::span<const int> assignments, std::span<const int> labels);

struct KMeansResult {
    RowMatrix centers;
    std::vector<int> assignments;
    std::size_t iterations = 0;
    std::vector<double> wcss_trace;  ///< within-cluster sum of squares after each assignment step
};

/// Lloyd's algorithm from k-means++ seeds. Stops once no center moves more
/// than `tol`. An empty cluster is moved to the point farthest from its center.
KMeansResult kmeans(const RowMatrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300,
                    double tol = 1e-6);

}  // namespace partial_em
