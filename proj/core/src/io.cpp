#include "crplus/io.hpp"

#include <cstdio>

#include "json.hpp"

namespace crplus {

using nlohmann::ordered_json;

namespace {

ordered_json metadata(const Provenance& p) {
    ordered_json config = ordered_json::object();
    for (const auto& [key, value] : p.config) config[key] = value;
    return {{"tool", kToolName},
            {"version", kToolVersion},
            {"command", p.command},
            {"input", p.input_path},
            {"input_sha256", p.input_sha256},
            {"config", config}};
}

ordered_json risk_json(const RiskReport& r) {
    ordered_json levels = ordered_json::array();
    for (const auto& l : r.levels)
        levels.push_back({{"theta", l.theta}, {"quantile", l.quantile}, {"expected_shortfall", l.expected_shortfall}});
    return {{"mean", r.mean},
            {"variance", r.variance},
            {"tail_mass", r.tail_mass},
            {"certified", r.certified},
            {"levels", levels}};
}

}  // namespace

std::string risk_report_json(const RiskReport& report, std::string_view pmf_path, const Provenance& provenance) {
    ordered_json doc = {{"metadata", metadata(provenance)}, {"pmf", pmf_path}, {"risk", risk_json(report)}};
    return doc.dump(2) + "\n";
}

std::string scenario_report_json(const ScenarioReport& report, std::string_view pmf_path,
                                 const Provenance& provenance) {
    ordered_json weights = ordered_json::object();
    for (const auto& term : report.mixture) weights[term.stress.descriptor()] = term.weight;
    ordered_json doc = {{"metadata", metadata(provenance)},
                        {"scenario", report.scenario},
                        {"writeoff", report.writeoff},
                        {"normalizer", report.normalizer},
                        {"mixture_weights", weights},
                        {"risk", risk_json(report.risk)},
                        {"pmf", pmf_path}};
    return doc.dump(2) + "\n";
}

std::string sim_result_csv(const SimResult& result) {
    std::string out = "loss,count,probability,se\n";
    char buf[128];
    for (const auto& [loss, count] : result.loss_counts) {
        const int len = std::snprintf(buf, sizeof buf, "%zu,%llu,%.17g,%.17g\n", loss,
                                      static_cast<unsigned long long>(count), result.probability(loss),
                                      result.probability_se(loss));
        out.append(buf, static_cast<std::size_t>(len));
    }
    return out;
}

std::string sim_result_json(const SimResult& result, const Portfolio& portfolio, std::string_view csv_path,
                            const Provenance& provenance) {
    ordered_json obligors = ordered_json::array();
    for (std::size_t a = 0; a < result.obligors.size(); ++a) {
        const auto& t = result.obligors[a];
        obligors.push_back({{"id", portfolio.obligors[a].id},
                            {"pd", portfolio.obligors[a].pd},
                            {"mean_defaults", t.mean(result.draws)},
                            {"mean_defaults_se", t.standard_error(result.draws)},
                            {"defaulted_draws", t.defaulted_draws}});
    }
    ordered_json factors = ordered_json::array();
    for (std::size_t k = 0; k < result.factors.size(); ++k) {
        const auto& f = result.factors[k];
        const double alpha = portfolio.sectors[k].alpha;
        factors.push_back({{"id", portfolio.sectors[k].id},
                           {"alpha", alpha},
                           {"mean", f.mean(result.draws)},
                           {"variance", f.variance(result.draws)},
                           {"variance_expected", 1.0 / alpha},
                           {"variance_se", f.variance_standard_error(result.draws, alpha)}});
    }
    ordered_json doc = {{"metadata", metadata(provenance)},
                        {"seed", result.seed},
                        {"draws", result.draws},
                        {"draws_per_block", kDrawsPerBlock},
                        {"losses_csv", csv_path},
                        {"obligors", obligors},
                        {"factors", factors}};
    return doc.dump(2) + "\n";
}

}  // namespace crplus
