#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crplus/engine.hpp"
#include "crplus/model.hpp"
#include "crplus/pmf.hpp"

namespace crplus {

/// One stressed distribution in a conditional mixture.
struct MixtureTerm {
    StressVector stress;
    double weight = 0.0;
};

/// Loss distribution conditional on the default of one or two named obligors.
struct ScenarioReport {
    Pmf conditional_pmf;
    std::vector<std::string> scenario;
    bool writeoff = false;
    /// Unnormalized weights; divided by `normalizer` they sum to one.
    std::vector<MixtureTerm> mixture;
    double normalizer = 1.0;
    RiskReport risk;
};

struct ScenarioOptions {
    bool writeoff = false;
    std::vector<double> thetas{0.99};
};

/// Mixture weights for the single-default scenario: w_A0 on the base distribution and
/// w_Aj on the +e_j stress. Terms with zero weight are omitted.
std::vector<MixtureTerm> single_default_mixture(const Portfolio& portfolio, std::size_t obligor);

/// Mixture weights for the two-default scenario (base, +e_j, +2e_j, +e_i+e_j) before
/// division by the normalizer 1 + sum_k w_1k w_2k / alpha_k. The two ordered cross
/// terms (i, j) and (j, i) share one distribution and are merged.
std::vector<MixtureTerm> double_default_mixture(const Portfolio& portfolio, std::size_t first,
                                                std::size_t second);

/// 1 + sum_k w_1k w_2k / alpha_k.
double double_default_normalizer(const Portfolio& portfolio, std::size_t first, std::size_t second);

/// E[D_A | X = x]. Requires P[X = x] > 0 and x within the truncation limit.
double cond_default_intensity(const LossEngine& engine, const Portfolio& portfolio,
                              std::string_view obligor, Loss x);

/// E[D_A1 D_A2 | X = x] for distinct obligors.
double joint_cond_intensity(const LossEngine& engine, const Portfolio& portfolio,
                            std::string_view first, std::string_view second, Loss x);

/// E[D_A1 D_A2] = p_1 p_2 (1 + sum_k w_1k w_2k / alpha_k) for distinct obligors.
double joint_default_intensity(const Portfolio& portfolio, std::string_view first,
                               std::string_view second);

/// Conditional PD of `obligor` given the default of every obligor in `defaulted`
/// (one or two ids), E[D_B prod D_A] / E[prod D_A]. With one defaulted obligor this is
/// p_B (1 + sum_k w_Ak w_Bk / alpha_k).
double stressed_pd(const Portfolio& portfolio, std::string_view obligor,
                   std::span<const std::string> defaulted);
double stressed_pd(const Portfolio& portfolio, std::string_view obligor,
                   std::string_view defaulted);

/// Portfolio copy in which the listed obligors have a zero loss severity. Intensities
/// are unchanged; sector severity pmfs pick up the extra mass at zero.
Portfolio with_zero_severity(const Portfolio& portfolio, std::span<const std::string> obligors);

/// Conditional loss distribution given the default of `obligor`.
ScenarioReport loss_given_one_default(const LossEngine& engine, const Portfolio& portfolio,
                                      std::string_view obligor, const ScenarioOptions& options = {});

/// Conditional loss distribution given the joint default of two distinct obligors.
ScenarioReport loss_given_two_defaults(const LossEngine& engine, const Portfolio& portfolio,
                                       std::string_view first, std::string_view second,
                                       const ScenarioOptions& options = {});

/// Dispatches on scenario size (1 or 2).
ScenarioReport loss_given_defaults(const LossEngine& engine, const Portfolio& portfolio,
                                   std::span<const std::string> scenario,
                                   const ScenarioOptions& options = {});

/// Weighted sum of stressed distributions, in term order, convolved with `kernel`.
Pmf mix_stressed(const LossEngine& engine, std::span<const MixtureTerm> terms, double normalizer,
                 const Pmf& kernel);

/// Per-bucket standard error, under the model, of the D_A-weighted Monte Carlo estimator of
/// the single-default conditional pmf after `draws` draws. Uses E[D_A^2 1{X=x}], whose
/// factorial part pairs A with itself in the two-default mixture.
std::vector<double> weighted_estimator_standard_errors(const LossEngine& engine, const Portfolio& portfolio,
                                                      std::string_view obligor, std::uint64_t draws);

/// "Stressed input parameters" comparison model: the scenario obligors are removed, every
/// other PD is replaced by its stressed_pd, and the defaulted severities are added back
/// as a known loss (omitted under write-off).
Pmf stressed_input_distribution(const Portfolio& portfolio, std::span<const std::string> scenario,
                                bool writeoff, std::size_t limit,
                                double tail_tolerance = kDefaultTailTolerance);

}  // namespace crplus
