#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "crplus/model.hpp"
#include "crplus/pmf.hpp"

namespace crplus {

/// Per-sector quantities derived from a portfolio. Index 0 is the idiosyncratic sector
/// in `mu` and `q`; `alpha` and `delta` are indexed by systematic sector, 0..N-1.
struct SectorSystem {
    std::vector<double> mu;              ///< N+1 sector default intensities
    std::vector<double> delta;           ///< N failure probabilities mu/(mu+alpha)
    std::vector<double> alpha;           ///< N Gamma shapes
    std::vector<std::optional<Pmf>> q;   ///< N+1 sector severity pmfs; empty for inert sectors
    std::size_t limit = 0;

    std::size_t sector_count() const { return alpha.size(); }
    bool inert(std::size_t k) const { return !q[k].has_value(); }
};

SectorSystem assemble(const Portfolio& portfolio, std::size_t limit);

/// Non-negative exponent offsets for the N systematic sectors.
class StressVector {
public:
    StressVector() = default;
    explicit StressVector(std::size_t sectors) : offsets_(sectors, 0) {}
    explicit StressVector(std::vector<unsigned> offsets) : offsets_(std::move(offsets)) {}

    static StressVector none(std::size_t sectors) { return StressVector(sectors); }
    static StressVector unit(std::size_t sectors, std::size_t j);
    static StressVector pair(std::size_t sectors, std::size_t i, std::size_t j);

    std::size_t size() const { return offsets_.size(); }
    unsigned operator[](std::size_t j) const { return offsets_[j]; }
    const std::vector<unsigned>& offsets() const { return offsets_; }
    bool is_zero() const;
    unsigned total() const;

    StressVector& increment(std::size_t j);

    /// "base", "+e_3", "+2e_1", "+e_1+e_2"; sectors are numbered from 1.
    std::string descriptor() const;

    auto operator<=>(const StressVector&) const = default;

private:
    std::vector<unsigned> offsets_;
};

/// Sector loss pmf: compound Poisson for k = 0, compound negative binomial with exponent
/// alpha_k + exponent_offset and the unstressed delta_k otherwise. Inert sectors are a
/// point mass at 0.
Pmf sector_loss(const SectorSystem& system, std::size_t k, unsigned exponent_offset);

struct PortfolioMoments {
    double mean = 0.0;
    double variance = 0.0;
};
PortfolioMoments portfolio_moments(const Portfolio& portfolio);

/// ceil(mean + 12 * stddev) of the portfolio loss, at least 1.
std::size_t suggest_truncation(const Portfolio& portfolio);

inline constexpr double kDefaultTailTolerance = 1e-9;

/// Portfolio loss distributions for arbitrary stress vectors over one SectorSystem.
///
/// Results are memoized per stress vector. A stressed distribution is derived from a
/// cached one with one fewer exponent offset by a single negative binomial increment,
/// so scenario workloads pay O(L * |Q_k|) per new stress instead of a fresh N-fold
/// convolution. The cache is safe for concurrent use.
class LossEngine {
public:
    explicit LossEngine(SectorSystem system, double tail_tolerance = kDefaultTailTolerance);

    LossEngine(const LossEngine&) = delete;
    LossEngine& operator=(const LossEngine&) = delete;

    const SectorSystem& system() const { return system_; }
    std::size_t limit() const { return system_.limit; }
    double tail_tolerance() const { return tail_tolerance_; }

    /// Unstressed portfolio loss distribution.
    const Pmf& base() const;

    /// Memoized. Throws TruncationError when the tail mass exceeds the tolerance.
    std::shared_ptr<const Pmf> loss_distribution(const StressVector& stress) const;

    /// Reference route without the scenario cache: convolution of every stressed sector
    /// pmf in sector order.
    Pmf loss_distribution_direct(const StressVector& stress) const;

    /// Memoized sector pmf for (k, exponent_offset).
    std::shared_ptr<const Pmf> sector_pmf(std::size_t k, unsigned exponent_offset) const;

    std::size_t cached_scenarios() const;

private:
    std::shared_ptr<const Pmf> lookup(const StressVector& stress) const;
    std::shared_ptr<const Pmf> compute(const StressVector& stress) const;
    void check_tail(const Pmf& pmf, const StressVector& stress) const;

    SectorSystem system_;
    double tail_tolerance_;
    std::shared_ptr<const Pmf> base_;

    mutable std::shared_mutex mutex_;
    mutable std::map<StressVector, std::shared_ptr<const Pmf>> scenarios_;
    mutable std::map<std::pair<std::size_t, unsigned>, std::shared_ptr<const Pmf>> sectors_;
};

struct RiskLevel {
    double theta = 0.0;
    Loss quantile = 0;
    double expected_shortfall = 0.0;
};

struct RiskReport {
    double mean = 0.0;
    double variance = 0.0;
    double tail_mass = 0.0;
    bool certified = true;
    std::vector<RiskLevel> levels;
};

RiskReport risk_report(const Pmf& pmf, const std::vector<double>& thetas,
                       double tail_tolerance = kDefaultTailTolerance);

}  // namespace crplus
