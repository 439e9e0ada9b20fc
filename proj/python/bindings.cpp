#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "partial_em/data_io.hpp"
#include "partial_em/em_engine.hpp"
#include "partial_em/error.hpp"
#include "partial_em/eval.hpp"
#include "partial_em/gaussian.hpp"
#include "partial_em/policies.hpp"

namespace py = pybind11;
using namespace partial_em;

namespace {

Dataset make_dataset(const RowMatrix& points, std::optional<std::vector<int>> labels) {
    Dataset d{points, std::move(labels)};
    d.validate();
    return d;
}

MixtureModel make_model(const Vector& weights, const RowMatrix& means, const std::vector<Matrix>& covs) {
    if (static_cast<std::size_t>(weights.size()) != covs.size() || weights.size() != means.rows())
        throw DimensionMismatch("weights, means and covariances disagree on K");
    MixtureModel m;
    for (Eigen::Index k = 0; k < weights.size(); ++k) {
        GaussianComponent c;
        c.mean = means.row(k).transpose();
        c.cov = cholesky_regularized(covs[static_cast<std::size_t>(k)], 0.0);
        c.weight = weights[k];
        m.components.push_back(std::move(c));
    }
    m.validate();
    return m;
}

py::dict model_dict(const MixtureModel& m) {
    const auto k = static_cast<Eigen::Index>(m.size());
    RowMatrix means(k, m.dim());
    std::vector<Matrix> covs;
    for (Eigen::Index i = 0; i < k; ++i) {
        means.row(i) = m.components[static_cast<std::size_t>(i)].mean.transpose();
        covs.push_back(m.components[static_cast<std::size_t>(i)].cov.matrix);
    }
    py::dict d;
    d["weights"] = m.weights();
    d["means"] = means;
    d["covariances"] = covs;
    return d;
}

py::dict fit_py(const RowMatrix& points, std::size_t k, const std::string& policy, double tol, std::size_t max_iter,
                std::uint64_t seed, std::size_t threads, const std::string& init, const std::string& cov) {
    FitConfig cfg;
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    cfg.seed = seed;
    cfg.threads = threads;
    cfg.init = parse_init(init);
    cfg.cov = parse_cov(cov);
    const auto pol = parse_policy(policy);
    FitResult res;
    {
        py::gil_scoped_release release;
        res = fit(make_dataset(points, std::nullopt), k, pol, cfg);
    }
    py::dict d = model_dict(res.model);
    d["membership"] = res.membership.weights;
    d["assignments"] = hard_assign(res.membership);
    d["iterations"] = res.report.iterations;
    d["termination"] = to_string(res.report.termination);
    d["loglik_trace"] = res.report.loglik_trace;
    d["active_counts"] = res.report.active_counts;
    d["density_evals"] = res.report.density_evals;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
    py::register_exception<SingularCovariance>(m, "SingularCovariance", base.ptr());
    py::register_exception<InitFailure>(m, "InitFailure", base.ptr());
    py::register_exception<ShapeMismatch>(m, "ShapeMismatch", base.ptr());

    m.def("fit", &fit_py, py::arg("points"), py::arg("k"), py::arg("policy") = "full", py::arg("tol") = 1e-6,
          py::arg("max_iter") = 500, py::arg("seed") = 0, py::arg("threads") = 1, py::arg("init") = "kmeans++",
          py::arg("cov") = "full");

    m.def(
        "observed_loglik",
        [](const RowMatrix& points, const Vector& weights, const RowMatrix& means, const std::vector<Matrix>& covs) {
            return observed_loglik(make_dataset(points, std::nullopt), make_model(weights, means, covs));
        },
        py::arg("points"), py::arg("weights"), py::arg("means"), py::arg("covariances"));

    m.def(
        "example1",
        [](std::size_t n, std::uint64_t seed) {
            auto d = sample_mixture(example1_spec(), n, seed);
            return py::make_tuple(d.points, *d.labels);
        },
        py::arg("n") = 1000, py::arg("seed") = 0);

    m.def(
        "load_csv",
        [](const std::string& path, bool has_labels) {
            auto d = load_csv(path, has_labels);
            return py::make_tuple(d.points, d.labels);
        },
        py::arg("path"), py::arg("has_labels") = false);

    m.def(
        "kmeans",
        [](const RowMatrix& points, std::size_t k, std::uint64_t seed) {
            auto r = kmeans(points, k, seed);
            return py::make_tuple(r.centers, r.assignments);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0);

    m.def(
        "membership_error",
        [](const RowMatrix& a, const RowMatrix& b) {
            return membership_error(MembershipMatrix(a), MembershipMatrix(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "classification_error",
        [](const std::vector<int>& assign, const std::vector<int>& labels) {
            return classification_error(assign, labels);
        },
        py::arg("assignments"), py::arg("labels"));

    m.def("log_sum_exp", [](const std::vector<double>& v) { return log_sum_exp(v); }, py::arg("values"));
}
