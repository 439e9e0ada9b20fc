#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>

#include "partial_em/model.hpp"

namespace partial_em {

struct FullPolicy {};

struct TauPolicy {
    std::uint32_t tau = 1;
};

struct LazyPolicy {
    double threshold = 0.9;
    std::size_t full_every = 5;
};

struct StarPolicy {
    /// Unset: keep exactly the heap leaves. Set: keep at least the lowest
    /// ceil(tail_fraction * s) heap positions of each per-cluster heap.
    std::optional<double> tail_fraction;
};

using Policy = std::variant<FullPolicy, TauPolicy, LazyPolicy, StarPolicy>;

/// Throws InvalidArgument when a policy parameter is out of range.
void validate(const Policy& policy);

/// "full", "tau:25", "lazy:0.9:5", "star", "star:0.6".
Policy parse_policy(const std::string& text);
std::string policy_label(const Policy& policy);

/// Whether the active set of the next iteration is always a subset of the current one.
bool is_nested(const Policy& policy);

/// What a policy may look at after an E-step.
struct PolicyInput {
    const MembershipMatrix& membership;    ///< all N rows, stale ones included
    std::span<const int> assignments;      ///< hard assignment of every point
    std::span<const std::size_t> active;   ///< the set the E-step just used
    std::size_t iteration;                 ///< 1-based index of the finished iteration
};

struct Selection {
    IndexSet next;
    std::size_t touches = 0;  ///< per-point operations performed, for the O(N) check
};

IndexSet full_update(std::size_t n);

/// Applies the streak recurrence to every point of `subset`: streak + 1 when
/// the assignment is unchanged, otherwise 1. Other points are untouched.
void update_streaks(ActiveState& state, std::span<const int> assignments,
                    std::span<const std::size_t> subset);

/// Streak update followed by {n in subset : streak[n] < tau}.
Selection tau_update(ActiveState& state, std::span<const int> assignments,
                     std::span<const std::size_t> subset, std::uint32_t tau);

/// Full dataset when (iteration + 1) is a multiple of full_every, otherwise
/// {n : max_k w[n][k] > threshold} over all N points.
Selection lazy_update(const MembershipMatrix& w, std::size_t iteration, const LazyPolicy& cfg);

/// Union over clusters of the tail of a max-heap built from the active points
/// assigned to that cluster, keyed on their weight for the cluster.
Selection star_update(const MembershipMatrix& w, std::span<const int> assignments,
                      std::span<const std::size_t> subset, const StarPolicy& cfg);

/// In-place bottom-up max-heap construction over `keys` (array layout: the
/// children of i are 2i+1 and 2i+2). `order` is permuted alongside the keys.
/// Returns the number of key comparisons.
std::size_t build_max_heap(std::vector<double>& keys, std::vector<std::size_t>& order);

/// Number of tail positions kept for a heap of size s.
std::size_t heap_tail_size(std::size_t s, const std::optional<double>& tail_fraction);

/// Dispatch: updates `state` (streaks and active flags) and returns the next active set.
Selection select_next(const Policy& policy, const PolicyInput& input, ActiveState& state);

}  // namespace partial_em
