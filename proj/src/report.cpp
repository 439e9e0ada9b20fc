#include "partial_em/report.hpp"

namespace partial_em {

namespace {

nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

nlohmann::json model_to_json(const MixtureModel& model) {
    nlohmann::json j;
    j["weights"] = nlohmann::json::array();
    j["means"] = nlohmann::json::array();
    j["covariances"] = nlohmann::json::array();
    for (const auto& c : model.components) {
        j["weights"].push_back(c.weight);
        j["means"].push_back(std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size()));
        j["covariances"].push_back(matrix_json(c.cov.matrix));
    }
    return j;
}

nlohmann::json report_to_json(const RunReport& report, const Policy& policy, const FitConfig& config, std::size_t k) {
    nlohmann::json j;
    j["iterations"] = report.iterations;
    j["termination"] = to_string(report.termination);
    j["initial_loglik"] = report.initial_loglik;
    j["loglik_trace"] = report.loglik_trace;
    j["f_trace"] = report.f_trace;
    j["active_counts"] = report.active_counts;
    j["density_evals"] = report.density_evals;
    j["loglik_density_evals"] = report.loglik_density_evals;
    j["wall_time_secs"] = report.wall_time;
    j["model"] = model_to_json(report.final_model);
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : report.events) {
        events.push_back({{"iteration", e.iteration}, {"component", e.component}, {"kind", e.kind}});
    }
    j["events"] = std::move(events);

    nlohmann::json echo;
    echo["policy"] = policy_label(policy);
    echo["k"] = k;
    echo["tol"] = config.tol;
    echo["max_iter"] = config.max_iter;
    echo["ridge"] = report.ridge;
    echo["seed"] = config.seed;
    echo["init"] = to_string(config.init);
    echo["cov"] = to_string(config.cov);
    j["config_echo"] = std::move(echo);
    return j;
}

}  // namespace partial_em
