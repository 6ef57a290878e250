#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crplus {

/// Integer loss amount in pre-discretized currency units.
using Loss = std::size_t;

/// Distribution of the loss incurred per default event of one obligor.
/// Support points are non-negative integers; a single atom is a deterministic severity.
struct SeverityDist {
    std::map<Loss, double> probabilities;

    static SeverityDist deterministic(Loss value) { return SeverityDist{{{value, 1.0}}}; }

    double mean() const;
    double second_moment() const;
    Loss max_loss() const;
    bool is_deterministic() const { return probabilities.size() == 1; }

    bool operator==(const SeverityDist&) const = default;
};

struct Obligor {
    std::string id;
    double pd = 0.0;
    /// Factor loadings w_0..w_N; index 0 is the idiosyncratic loading.
    std::vector<double> weights;
    SeverityDist severity;

    bool operator==(const Obligor&) const = default;
};

struct Sector {
    std::string id;
    /// Gamma shape of the sector factor; the factor has unit mean and variance 1/alpha.
    double alpha = 1.0;

    bool operator==(const Sector&) const = default;
};

struct Portfolio {
    std::vector<Sector> sectors;
    std::vector<Obligor> obligors;

    std::size_t sector_count() const { return sectors.size(); }
    std::optional<std::size_t> find_obligor(std::string_view id) const;
    /// Throws InputError for an unknown id.
    std::size_t obligor_index(std::string_view id) const;
    const Obligor& obligor(std::string_view id) const { return obligors[obligor_index(id)]; }

    bool operator==(const Portfolio&) const = default;
};

struct Diagnostic {
    std::string entity;  ///< e.g. "obligor 'A'" or "sector 's1'"
    std::string rule;    ///< short rule key, e.g. "weight-sum"
    std::string message;
};

struct ParseOptions {
    /// Rescale loadings that miss the unit sum instead of rejecting them.
    bool renormalize_weights = false;
};

inline constexpr double kWeightSumTolerance = 1e-9;
inline constexpr double kSeveritySumTolerance = 1e-12;

/// Checks every portfolio invariant. Returns an empty list for a valid portfolio.
std::vector<Diagnostic> validate(const Portfolio& portfolio);

/// Parses the JSON portfolio format and validates the result. Throws InputError.
Portfolio parse_portfolio(std::string_view text, const ParseOptions& options = {});
Portfolio load_portfolio(const std::filesystem::path& path, const ParseOptions& options = {});

/// Inverse of parse_portfolio for valid portfolios.
std::string serialize_portfolio(const Portfolio& portfolio);

}  // namespace crplus
