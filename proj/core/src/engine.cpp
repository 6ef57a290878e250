#include "crplus/engine.hpp"

#include <cmath>
#include <mutex>
#include <sstream>

#include "crplus/error.hpp"

namespace crplus {

SectorSystem assemble(const Portfolio& portfolio, std::size_t limit) {
    if (auto diags = validate(portfolio); !diags.empty())
        throw InputError("assemble: invalid portfolio (" + diags.front().entity + ": " +
                         diags.front().message + ")");
    const std::size_t n = portfolio.sector_count();
    SectorSystem sys;
    sys.limit = limit;
    sys.mu.assign(n + 1, 0.0);
    sys.q.resize(n + 1);
    for (const auto& s : portfolio.sectors) sys.alpha.push_back(s.alpha);

    for (std::size_t k = 0; k <= n; ++k) {
        std::vector<double> q(limit + 1, 0.0);
        double mu = 0.0;
        double beyond = 0.0;
        for (const auto& o : portfolio.obligors) {
            const double intensity = o.weights[k] * o.pd;
            if (intensity == 0.0) continue;
            mu += intensity;
            for (const auto& [loss, p] : o.severity.probabilities) {
                if (loss <= limit)
                    q[loss] += intensity * p;
                else
                    beyond += intensity * p;
            }
        }
        sys.mu[k] = mu;
        if (mu > 0.0) {
            for (double& v : q) v /= mu;
            sys.q[k] = Pmf(std::move(q), beyond / mu);
        }
    }
    sys.delta.resize(n);
    for (std::size_t k = 1; k <= n; ++k) sys.delta[k - 1] = sys.mu[k] / (sys.mu[k] + sys.alpha[k - 1]);
    return sys;
}

StressVector StressVector::unit(std::size_t sectors, std::size_t j) {
    StressVector s(sectors);
    return s.increment(j);
}

StressVector StressVector::pair(std::size_t sectors, std::size_t i, std::size_t j) {
    StressVector s(sectors);
    s.increment(i);
    return s.increment(j);
}

bool StressVector::is_zero() const { return total() == 0; }

unsigned StressVector::total() const {
    unsigned t = 0;
    for (unsigned o : offsets_) t += o;
    return t;
}

StressVector& StressVector::increment(std::size_t j) {
    if (j >= offsets_.size()) throw InputError("stress vector: sector index out of range");
    ++offsets_[j];
    return *this;
}

std::string StressVector::descriptor() const {
    if (is_zero()) return "base";
    std::string out;
    for (std::size_t j = 0; j < offsets_.size(); ++j) {
        if (offsets_[j] == 0) continue;
        out += '+';
        if (offsets_[j] > 1) out += std::to_string(offsets_[j]);
        out += "e_" + std::to_string(j + 1);
    }
    return out;
}

Pmf sector_loss(const SectorSystem& system, std::size_t k, unsigned exponent_offset) {
    if (k > system.sector_count()) throw InputError("sector_loss: sector index out of range");
    if (k == 0 && exponent_offset != 0)
        throw InputError("sector_loss: the idiosyncratic sector cannot be stressed");
    if (system.inert(k)) return Pmf::point_mass(0, system.limit);
    if (k == 0) return compound_poisson(system.mu[0], *system.q[0], system.limit);
    return compound_negbin(system.alpha[k - 1] + exponent_offset, system.delta[k - 1], *system.q[k],
                           system.limit);
}

PortfolioMoments portfolio_moments(const Portfolio& portfolio) {
    const std::size_t n = portfolio.sector_count();
    PortfolioMoments m;
    std::vector<double> sector_mean(n + 1, 0.0);
    for (const auto& o : portfolio.obligors) {
        const double e1 = o.severity.mean();
        m.mean += o.pd * e1;
        m.variance += o.pd * o.severity.second_moment();
        for (std::size_t k = 1; k <= n; ++k) sector_mean[k] += o.weights[k] * o.pd * e1;
    }
    for (std::size_t k = 1; k <= n; ++k)
        m.variance += sector_mean[k] * sector_mean[k] / portfolio.sectors[k - 1].alpha;
    return m;
}

std::size_t suggest_truncation(const Portfolio& portfolio) {
    const auto m = portfolio_moments(portfolio);
    const double l = std::ceil(m.mean + 12.0 * std::sqrt(m.variance));
    return l < 1.0 ? 1 : static_cast<std::size_t>(l);
}

LossEngine::LossEngine(SectorSystem system, double tail_tolerance)
    : system_(std::move(system)), tail_tolerance_(tail_tolerance) {
    if (!(tail_tolerance_ > 0.0 && tail_tolerance_ < 1.0))
        throw InputError("tail tolerance must lie in (0, 1)");
    const StressVector zero(system_.sector_count());
    auto base = std::make_shared<const Pmf>(loss_distribution_direct(zero));
    base_ = base;
    scenarios_.emplace(zero, std::move(base));
}

const Pmf& LossEngine::base() const { return *base_; }

std::shared_ptr<const Pmf> LossEngine::sector_pmf(std::size_t k, unsigned exponent_offset) const {
    const auto key = std::make_pair(k, exponent_offset);
    {
        std::shared_lock lock(mutex_);
        if (auto it = sectors_.find(key); it != sectors_.end()) return it->second;
    }
    auto pmf = std::make_shared<const Pmf>(sector_loss(system_, k, exponent_offset));
    std::unique_lock lock(mutex_);
    return sectors_.emplace(key, std::move(pmf)).first->second;
}

Pmf LossEngine::loss_distribution_direct(const StressVector& stress) const {
    if (stress.size() != system_.sector_count())
        throw InputError("stress vector dimension does not match the sector count");
    Pmf out = *sector_pmf(0, 0);
    for (std::size_t k = 1; k <= system_.sector_count(); ++k)
        out = convolve(out, *sector_pmf(k, stress[k - 1]));
    check_tail(out, stress);
    return out;
}

std::shared_ptr<const Pmf> LossEngine::lookup(const StressVector& stress) const {
    std::shared_lock lock(mutex_);
    if (auto it = scenarios_.find(stress); it != scenarios_.end()) return it->second;
    return nullptr;
}

std::shared_ptr<const Pmf> LossEngine::compute(const StressVector& stress) const {
    if (auto hit = lookup(stress)) return hit;

    // Peel one offset off the highest stressed sector; the remainder is memoized too.
    std::size_t j = stress.size();
    while (stress[j - 1] == 0) --j;
    std::vector<unsigned> parent_offsets = stress.offsets();
    --parent_offsets[j - 1];
    const auto parent = compute(StressVector(std::move(parent_offsets)));

    auto pmf = system_.inert(j)
                   ? parent
                   : std::make_shared<const Pmf>(
                         negbin_exponent_increment(*parent, system_.delta[j - 1], *system_.q[j]));
    std::unique_lock lock(mutex_);
    return scenarios_.emplace(stress, std::move(pmf)).first->second;
}

std::shared_ptr<const Pmf> LossEngine::loss_distribution(const StressVector& stress) const {
    if (stress.size() != system_.sector_count())
        throw InputError("stress vector dimension does not match the sector count");
    auto pmf = compute(stress);
    check_tail(*pmf, stress);
    return pmf;
}

std::size_t LossEngine::cached_scenarios() const {
    std::shared_lock lock(mutex_);
    return scenarios_.size();
}

void LossEngine::check_tail(const Pmf& pmf, const StressVector& stress) const {
    if (pmf.tail_mass() <= tail_tolerance_) return;
    std::ostringstream msg;
    msg.precision(6);
    msg << "tail mass " << pmf.tail_mass() << " beyond truncation limit " << system_.limit
        << " exceeds tolerance " << tail_tolerance_ << " (stress " << stress.descriptor() << ")";
    throw TruncationError(msg.str(), pmf.tail_mass(), tail_tolerance_);
}

RiskReport risk_report(const Pmf& pmf, const std::vector<double>& thetas, double tail_tolerance) {
    const auto m = moments(pmf, tail_tolerance);
    RiskReport r{m.mean, m.variance, pmf.tail_mass(), m.certified, {}};
    for (double theta : thetas)
        r.levels.push_back({theta, quantile(pmf, theta), expected_shortfall(pmf, theta)});
    return r;
}

}  // namespace crplus
