#include "partial_em/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "partial_em/error.hpp"

namespace partial_em {

void Dataset::validate() const {
    if (points.rows() < 1 || points.cols() < 1) {
        throw InvalidArgument("dataset must have at least one point and one dimension");
    }
    if (!points.allFinite()) {
        throw InvalidArgument("dataset contains non-finite entries");
    }
    if (labels && labels->size() != size()) {
        throw InvalidArgument("label count does not match point count");
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.points.resize(static_cast<Eigen::Index>(indices.size()), points.cols());
    std::vector<int> sub_labels;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= size()) {
            throw InvalidArgument("subset index out of range");
        }
        out.points.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(indices[i]));
        if (labels) {
            sub_labels.push_back((*labels)[indices[i]]);
        }
    }
    if (labels) {
        out.labels = std::move(sub_labels);
    }
    return out;
}

Vector MixtureModel::weights() const {
    Vector w(static_cast<Eigen::Index>(components.size()));
    for (std::size_t k = 0; k < components.size(); ++k) {
        w[static_cast<Eigen::Index>(k)] = components[k].weight;
    }
    return w;
}

void MixtureModel::validate() const {
    if (components.empty()) {
        throw InvalidArgument("mixture needs at least one component");
    }
    const Eigen::Index d = dim();
    double total = 0.0;
    for (const auto& c : components) {
        if (c.dim() != d || c.cov.dim() != d) {
            throw DimensionMismatch("mixture components disagree on dimension");
        }
        if (!(c.weight > 0.0)) {
            throw InvalidArgument("mixture weights must be positive");
        }
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw InvalidArgument("mixture weights do not sum to one");
    }
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::Converged:
            return "Converged";
        case Termination::ActiveSetEmpty:
            return "ActiveSetEmpty";
        case Termination::MaxIterations:
            return "MaxIterations";
    }
    return "Unknown";
}

std::vector<int> hard_assign(const MembershipMatrix& w) {
    std::vector<int> out(w.rows(), 0);
    for (Eigen::Index n = 0; n < w.weights.rows(); ++n) {
        int best = 0;
        for (Eigen::Index k = 1; k < w.weights.cols(); ++k) {
            if (w.weights(n, k) > w.weights(n, best)) {
                best = static_cast<int>(k);
            }
        }
        out[static_cast<std::size_t>(n)] = best;
    }
    return out;
}

std::string membership_to_csv(const MembershipMatrix& w) {
    std::string out = "point_id";
    for (std::size_t k = 0; k < w.cols(); ++k) {
        out += ",w_" + std::to_string(k);
    }
    out += '\n';
    char buf[32];
    for (std::size_t n = 0; n < w.rows(); ++n) {
        out += std::to_string(n);
        for (std::size_t k = 0; k < w.cols(); ++k) {
            std::snprintf(buf, sizeof buf, ",%.17g",
                          w.weights(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void write_membership_csv(const MembershipMatrix& w, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path + " for writing");
    }
    f << membership_to_csv(w);
}

}  // namespace partial_em
