#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crplus/conditional.hpp"
#include "crplus/engine.hpp"
#include "crplus/simulate.hpp"

namespace crplus {

inline constexpr std::string_view kToolName = "crplus";
inline constexpr std::string_view kToolVersion = "0.1.0";

/// Metadata block attached to every output document.
struct Provenance {
    std::string command;
    std::string input_path;
    std::string input_sha256;
    /// Config echo, in insertion order.
    std::vector<std::pair<std::string, std::string>> config;
};

std::string risk_report_json(const RiskReport& report, std::string_view pmf_path,
                             const Provenance& provenance);

/// Fields: scenario, writeoff, normalizer, mixture_weights (keyed by stress descriptor),
/// risk, pmf path, metadata.
std::string scenario_report_json(const ScenarioReport& report, std::string_view pmf_path,
                                 const Provenance& provenance);

/// `loss,count,probability,se` rows in increasing loss order.
std::string sim_result_csv(const SimResult& result);

/// Sidecar with seed, draw count, per-obligor default statistics and factor checks.
std::string sim_result_json(const SimResult& result, const Portfolio& portfolio,
                            std::string_view csv_path, const Provenance& provenance);

}  // namespace crplus
