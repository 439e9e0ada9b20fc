#include "partial_em/policies.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "partial_em/error.hpp"

namespace partial_em {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

double parse_double(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw InvalidArgument("bad " + what + ": '" + s + "'");
    }
    if (used != s.size()) {
        throw InvalidArgument("bad " + what + ": '" + s + "'");
    }
    return v;
}

unsigned long long parse_count(const std::string& s, const std::string& what) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
        throw InvalidArgument("bad " + what + ": '" + s + "'");
    }
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw InvalidArgument("bad " + what + ": '" + s + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) {
            return parts;
        }
        start = pos + 1;
    }
}

void sift_down(std::vector<double>& keys, std::vector<std::size_t>& order, std::size_t i, std::size_t& cmps) {
    const std::size_t s = keys.size();
    for (;;) {
        std::size_t largest = i;
        const std::size_t l = 2 * i + 1;
        const std::size_t r = l + 1;
        if (l < s) {
            ++cmps;
            if (keys[l] > keys[largest]) largest = l;
        }
        if (r < s) {
            ++cmps;
            if (keys[r] > keys[largest]) largest = r;
        }
        if (largest == i) {
            return;
        }
        std::swap(keys[i], keys[largest]);
        std::swap(order[i], order[largest]);
        i = largest;
    }
}

}  // namespace

void validate(const Policy& policy) {
    std::visit(overloaded{
                   [](const FullPolicy&) {},
                   [](const TauPolicy& p) {
                       if (p.tau < 1) throw InvalidArgument("tau must be at least 1");
                   },
                   [](const LazyPolicy& p) {
                       if (!(p.threshold > 0.0 && p.threshold < 1.0))
                           throw InvalidArgument("lazy threshold must lie in (0, 1)");
                       if (p.full_every < 1) throw InvalidArgument("lazy full-step period must be at least 1");
                   },
                   [](const StarPolicy& p) {
                       if (p.tail_fraction && !(*p.tail_fraction > 0.0 && *p.tail_fraction <= 1.0))
                           throw InvalidArgument("star tail fraction must lie in (0, 1]");
                   },
               },
               policy);
}

Policy parse_policy(const std::string& text) {
    const auto parts = split(text, ':');
    const std::string& name = parts[0];
    Policy policy;
    if (name == "full" && parts.size() == 1) {
        policy = FullPolicy{};
    } else if (name == "tau" && parts.size() == 2) {
        const auto tau = parse_count(parts[1], "tau");
        if (tau > UINT32_MAX) throw InvalidArgument("tau too large");
        policy = TauPolicy{static_cast<std::uint32_t>(tau)};
    } else if (name == "lazy" && parts.size() <= 3) {
        LazyPolicy p;
        if (parts.size() >= 2) p.threshold = parse_double(parts[1], "lazy threshold");
        if (parts.size() == 3) p.full_every = parse_count(parts[2], "lazy period");
        policy = p;
    } else if (name == "star" && parts.size() <= 2) {
        StarPolicy p;
        if (parts.size() == 2) p.tail_fraction = parse_double(parts[1], "star tail fraction");
        policy = p;
    } else {
        throw InvalidArgument("unknown policy '" + text + "' (expected full, tau:<n>, lazy[:T[:every]], star[:f])");
    }
    validate(policy);
    return policy;
}

std::string policy_label(const Policy& policy) {
    return std::visit(overloaded{
                          [](const FullPolicy&) -> std::string { return "full"; },
                          [](const TauPolicy& p) { return "tau:" + std::to_string(p.tau); },
                          [](const LazyPolicy& p) {
                              char buf[64];
                              std::snprintf(buf, sizeof buf, "lazy:%g:%zu", p.threshold, p.full_every);
                              return std::string(buf);
                          },
                          [](const StarPolicy& p) {
                              if (!p.tail_fraction) return std::string("star");
                              char buf[64];
                              std::snprintf(buf, sizeof buf, "star:%g", *p.tail_fraction);
                              return std::string(buf);
                          },
                      },
                      policy);
}

bool is_nested(const Policy& policy) {
    return std::holds_alternative<TauPolicy>(policy) || std::holds_alternative<StarPolicy>(policy);
}

IndexSet full_update(std::size_t n) {
    IndexSet all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
}

void update_streaks(ActiveState& state, std::span<const int> assignments, std::span<const std::size_t> subset) {
    for (const std::size_t n : subset) {
        const int c = assignments[n];
        if (state.streak[n] > 0 && state.cluster[n] == c) {
            ++state.streak[n];
        } else {
            state.streak[n] = 1;
            state.cluster[n] = c;
        }
    }
}

Selection tau_update(ActiveState& state, std::span<const int> assignments, std::span<const std::size_t> subset,
                     std::uint32_t tau) {
    update_streaks(state, assignments, subset);
    Selection sel;
    for (const std::size_t n : subset) {
        if (state.streak[n] < tau) {
            sel.next.push_back(n);
        }
    }
    sel.touches = 2 * subset.size();
    return sel;
}

Selection lazy_update(const MembershipMatrix& w, std::size_t iteration, const LazyPolicy& cfg) {
    Selection sel;
    const std::size_t n_points = w.rows();
    sel.touches = n_points;
    if ((iteration + 1) % cfg.full_every == 0) {
        sel.next = full_update(n_points);
        return sel;
    }
    for (std::size_t n = 0; n < n_points; ++n) {
        if (w.weights.row(static_cast<Eigen::Index>(n)).maxCoeff() > cfg.threshold) {
            sel.next.push_back(n);
        }
    }
    return sel;
}

std::size_t build_max_heap(std::vector<double>& keys, std::vector<std::size_t>& order) {
    std::size_t cmps = 0;
    const std::size_t s = keys.size();
    for (std::size_t i = s / 2; i-- > 0;) {
        sift_down(keys, order, i, cmps);
    }
    return cmps;
}

std::size_t heap_tail_size(std::size_t s, const std::optional<double>& tail_fraction) {
    std::size_t leaves = s - s / 2;
    if (tail_fraction) {
        const auto widened = static_cast<std::size_t>(std::ceil(*tail_fraction * static_cast<double>(s)));
        leaves = std::max(leaves, std::min(widened, s));
    }
    return leaves;
}

Selection star_update(const MembershipMatrix& w, std::span<const int> assignments,
                      std::span<const std::size_t> subset, const StarPolicy& cfg) {
    Selection sel;
    const std::size_t k_count = w.cols();
    std::vector<std::vector<std::size_t>> members(k_count);
    for (const std::size_t n : subset) {
        members[static_cast<std::size_t>(assignments[n])].push_back(n);
    }
    sel.touches = subset.size();
    std::vector<double> keys;
    std::vector<std::uint8_t> keep(w.rows(), 0);
    for (std::size_t k = 0; k < k_count; ++k) {
        auto& order = members[k];
        const std::size_t s = order.size();
        if (s == 0) continue;
        keys.resize(s);
        for (std::size_t i = 0; i < s; ++i) {
            keys[i] = w.weights(static_cast<Eigen::Index>(order[i]), static_cast<Eigen::Index>(k));
        }
        sel.touches += s + build_max_heap(keys, order);
        const std::size_t tail = heap_tail_size(s, cfg.tail_fraction);
        for (std::size_t i = s - tail; i < s; ++i) keep[order[i]] = 1;
        sel.touches += tail;
    }
    // subset is sorted, so this keeps the result sorted without a sort
    for (const std::size_t n : subset) {
        if (keep[n]) sel.next.push_back(n);
    }
    sel.touches += subset.size();
    return sel;
}

Selection select_next(const Policy& policy, const PolicyInput& input, ActiveState& state) {
    Selection sel = std::visit(
        overloaded{
            [&](const FullPolicy&) {
                update_streaks(state, input.assignments, input.active);
                return Selection{full_update(input.membership.rows()), input.membership.rows()};
            },
            [&](const TauPolicy& p) { return tau_update(state, input.assignments, input.active, p.tau); },
            [&](const LazyPolicy& p) {
                update_streaks(state, input.assignments, input.active);
                return lazy_update(input.membership, input.iteration, p);
            },
            [&](const StarPolicy& p) {
                update_streaks(state, input.assignments, input.active);
                return star_update(input.membership, input.assignments, input.active, p);
            },
        },
        policy);
    std::fill(state.active.begin(), state.active.end(), std::uint8_t{0});
    for (const std::size_t n : sel.next) {
        state.active[n] = 1;
    }
    return sel;
}

}  // namespace partial_em
