#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crplus/model.hpp"

namespace crplus {

struct SimConfig {
    std::uint64_t draws = 100'000;
    std::uint64_t seed = 42;
    bool record_default_counts = true;
};

/// Draws are grouped in blocks of this size; each block owns an independently seeded
/// generator, so tallies do not depend on the number of threads.
inline constexpr std::uint64_t kDrawsPerBlock = 1 << 14;

struct ObligorTally {
    double sum_defaults = 0.0;          ///< sum of D_A
    double sum_defaults_sq = 0.0;       ///< sum of D_A^2
    std::uint64_t defaulted_draws = 0;  ///< draws with D_A >= 1

    double mean(std::uint64_t draws) const;
    double standard_error(std::uint64_t draws) const;

    bool operator==(const ObligorTally&) const = default;
};

struct FactorTally {
    double sum = 0.0;
    double sum_sq = 0.0;

    double mean(std::uint64_t draws) const;
    double variance(std::uint64_t draws) const;
    /// Standard error of variance(draws) for a unit-mean Gamma factor with shape alpha.
    double variance_standard_error(std::uint64_t draws, double alpha) const;

    bool operator==(const FactorTally&) const = default;
};

struct SimResult {
    std::uint64_t draws = 0;
    std::uint64_t seed = 0;
    std::map<Loss, std::uint64_t> loss_counts;
    std::vector<ObligorTally> obligors;  ///< parallel to Portfolio::obligors when recorded
    std::vector<FactorTally> factors;    ///< systematic sectors

    double probability(Loss x) const;
    double probability_se(Loss x) const;

    bool operator==(const SimResult&) const = default;
};

/// Monte Carlo simulation of the portfolio loss. Reproducible given the seed.
SimResult simulate(const Portfolio& portfolio, const SimConfig& config);

struct BucketEstimate {
    double estimate = 0.0;
    double standard_error = 0.0;
};

struct ConditionalEstimate {
    std::uint64_t draws = 0;
    /// Estimator of the D-weighted conditional pmf: sum_i prod_A D_A,i 1{X_i = x} / (n E[prod_A D_A]).
    std::map<Loss, BucketEstimate> weighted;
    /// Plain rejection estimator on draws where every scenario obligor has D_A >= 1.
    /// Only filled for single-default scenarios.
    std::map<Loss, BucketEstimate> rejection;
    std::uint64_t accepted_draws = 0;
    double normalizer = 0.0;  ///< E[prod_A D_A], the analytic weight normalizer
};

/// Conditional loss pmf estimates given the default of one obligor.
ConditionalEstimate estimate_conditional_one_default(const Portfolio& portfolio,
                                                     std::string_view obligor,
                                                     const SimConfig& config);

/// D-weighted conditional loss pmf estimate given the joint default of two obligors.
ConditionalEstimate estimate_conditional_two_defaults(const Portfolio& portfolio,
                                                      std::string_view first,
                                                      std::string_view second,
                                                      const SimConfig& config);

ConditionalEstimate estimate_conditional(const Portfolio& portfolio,
                                         std::span<const std::string> scenario,
                                         const SimConfig& config);

/// Both sides of E[1{X=x} prod D_A] = E[1{X = x - sum E~_A} prod p_A^S], estimated from
/// the same factor and loss draws.
struct IdentityReport {
    Loss x = 0;
    double left = 0.0;
    double left_se = 0.0;
    double right = 0.0;
    double right_se = 0.0;
    double combined_se = 0.0;  ///< sqrt(left_se^2 + right_se^2)
    double paired_se = 0.0;    ///< standard error of the per-draw difference
    std::uint64_t draws = 0;

    double difference() const { return left - right; }
    bool agrees(double sigmas = 3.0) const;
};

IdentityReport verify_fundamental_identity(const Portfolio& portfolio, std::string_view first,
                                           std::optional<std::string_view> second, Loss x,
                                           const SimConfig& config);

}  // namespace crplus
