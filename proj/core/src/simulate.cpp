#include "crplus/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <random>

#include "crplus/error.hpp"

namespace crplus {

double ObligorTally::mean(std::uint64_t draws) const { return sum_defaults / static_cast<double>(draws); }

double ObligorTally::standard_error(std::uint64_t draws) const {
    const double n = static_cast<double>(draws);
    const double m = sum_defaults / n;
    return std::sqrt(std::max(0.0, sum_defaults_sq / n - m * m) / n);
}

double FactorTally::mean(std::uint64_t draws) const { return sum / static_cast<double>(draws); }

double FactorTally::variance(std::uint64_t draws) const {
    const double n = static_cast<double>(draws);
    const double m = sum / n;
    return (sum_sq / n - m * m) * n / (n - 1.0);
}

double FactorTally::variance_standard_error(std::uint64_t draws, double alpha) const {
    // Fourth central moment of Gamma(alpha, 1/alpha) is 3(alpha+2)/alpha^3.
    const double mu4 = 3.0 * (alpha + 2.0) / (alpha * alpha * alpha);
    const double sigma4 = 1.0 / (alpha * alpha);
    return std::sqrt((mu4 - sigma4) / static_cast<double>(draws));
}

double SimResult::probability(Loss x) const {
    auto it = loss_counts.find(x);
    return it == loss_counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(draws);
}

double SimResult::probability_se(Loss x) const {
    const double p = probability(x);
    return std::sqrt(p * (1.0 - p) / static_cast<double>(draws));
}

bool IdentityReport::agrees(double sigmas) const {
    return std::abs(difference()) <= sigmas * combined_se;
}

namespace {

using Generator = std::mt19937_64;

Generator block_generator(std::uint64_t seed, std::uint64_t block) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
    return Generator(seq);
}

class SeveritySampler {
public:
    explicit SeveritySampler(const SeverityDist& dist) {
        double c = 0.0;
        for (const auto& [loss, p] : dist.probabilities) {
            c += p;
            values_.push_back(loss);
            cdf_.push_back(c);
        }
        cdf_.back() = 1.0;
    }

    Loss operator()(Generator& gen, std::uniform_real_distribution<double>& unif) const {
        if (values_.size() == 1) return values_[0];
        const double u = unif(gen);
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        return values_[std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), values_.size() - 1)];
    }

private:
    std::vector<Loss> values_;
    std::vector<double> cdf_;
};

struct Draw {
    std::vector<double> factors;     // S_0..S_N, S_0 = 1
    std::vector<long long> defaults;  // D_A
    std::vector<double> intensities;  // p_A^S
    Loss loss = 0;
};

/// Samples factors, default counts and losses for one draw of the model.
class DrawSampler {
public:
    explicit DrawSampler(const Portfolio& portfolio) : portfolio_(portfolio) {
        if (auto diags = validate(portfolio); !diags.empty())
            throw InputError("simulate: invalid portfolio (" + diags.front().entity + ": " +
                             diags.front().message + ")");
        for (const auto& o : portfolio.obligors) severities_.emplace_back(o.severity);
    }

    /// Per-block distribution objects; libstdc++ distributions carry cached state.
    struct Workspace {
        std::vector<std::gamma_distribution<double>> gammas;
        std::vector<bool> boosted;
        std::poisson_distribution<long long> poisson;
        std::uniform_real_distribution<double> unif{0.0, 1.0};
        Draw draw;
    };

    Workspace workspace() const {
        Workspace ws;
        for (const auto& s : portfolio_.sectors) {
            // Shape below one: sample shape alpha+1 and apply the U^(1/alpha) power adjustment.
            const bool boost = s.alpha < 1.0;
            ws.gammas.emplace_back(boost ? s.alpha + 1.0 : s.alpha, 1.0);
            ws.boosted.push_back(boost);
        }
        ws.draw.factors.assign(portfolio_.sector_count() + 1, 1.0);
        ws.draw.defaults.assign(portfolio_.obligors.size(), 0);
        ws.draw.intensities.assign(portfolio_.obligors.size(), 0.0);
        return ws;
    }

    void sample(Generator& gen, Workspace& ws) const {
        Draw& d = ws.draw;
        for (std::size_t k = 0; k < portfolio_.sector_count(); ++k) {
            const double alpha = portfolio_.sectors[k].alpha;
            double g = ws.gammas[k](gen);
            if (ws.boosted[k]) g *= std::pow(ws.unif(gen), 1.0 / alpha);
            d.factors[k + 1] = g / alpha;
        }
        d.loss = 0;
        for (std::size_t a = 0; a < portfolio_.obligors.size(); ++a) {
            const auto& o = portfolio_.obligors[a];
            double lambda = 0.0;
            for (std::size_t k = 0; k < o.weights.size(); ++k) lambda += o.weights[k] * d.factors[k];
            lambda *= o.pd;
            d.intensities[a] = lambda;
            long long count = 0;
            if (lambda > 0.0) count = ws.poisson(gen, decltype(ws.poisson)::param_type(lambda));
            d.defaults[a] = count;
            for (long long i = 0; i < count; ++i) d.loss += severities_[a](gen, ws.unif);
        }
    }

    Loss extra_severity(std::size_t obligor, Generator& gen, Workspace& ws) const {
        return severities_[obligor](gen, ws.unif);
    }

private:
    const Portfolio& portfolio_;
    std::vector<SeveritySampler> severities_;
};

/// Runs `body(gen, workspace, count, tally)` once per block, possibly in parallel; the
/// returned tallies are in block order.
template <class Tally, class Body>
std::vector<Tally> run_blocks(const DrawSampler& sampler, const SimConfig& config, const Tally& prototype,
                              Body body) {
    if (config.draws == 0) throw InputError("simulate: draws must be >= 1");
    const std::uint64_t blocks = (config.draws + kDrawsPerBlock - 1) / kDrawsPerBlock;
    std::vector<Tally> tallies(blocks, prototype);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(blocks); ++bi) {
        try {
            const auto b = static_cast<std::uint64_t>(bi);
            Generator gen = block_generator(config.seed, b);
            auto ws = sampler.workspace();
            const std::uint64_t count = std::min(kDrawsPerBlock, config.draws - b * kDrawsPerBlock);
            body(gen, ws, count, tallies[b]);
        } catch (...) {
#pragma omp critical(crplus_sim_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return tallies;
}

struct Histogram {
    std::vector<double> sum;
    std::vector<double> sum_sq;

    void add(Loss x, double w) {
        if (x >= sum.size()) {
            sum.resize(x + 1, 0.0);
            sum_sq.resize(x + 1, 0.0);
        }
        sum[x] += w;
        sum_sq[x] += w * w;
    }

    void merge(const Histogram& other) {
        if (other.sum.size() > sum.size()) {
            sum.resize(other.sum.size(), 0.0);
            sum_sq.resize(other.sum.size(), 0.0);
        }
        for (std::size_t x = 0; x < other.sum.size(); ++x) {
            sum[x] += other.sum[x];
            sum_sq[x] += other.sum_sq[x];
        }
    }
};

struct SimBlock {
    std::vector<std::uint64_t> counts;
    std::vector<ObligorTally> obligors;
    std::vector<FactorTally> factors;
};

}  // namespace

SimResult simulate(const Portfolio& portfolio, const SimConfig& config) {
    const DrawSampler sampler(portfolio);
    SimBlock prototype;
    if (config.record_default_counts) prototype.obligors.resize(portfolio.obligors.size());
    prototype.factors.resize(portfolio.sector_count());

    const auto blocks = run_blocks(sampler, config, prototype,
                                   [&](Generator& gen, DrawSampler::Workspace& ws, std::uint64_t count,
                                       SimBlock& tally) {
        for (std::uint64_t i = 0; i < count; ++i) {
            sampler.sample(gen, ws);
            const Draw& d = ws.draw;
            if (d.loss >= tally.counts.size()) tally.counts.resize(d.loss + 1, 0);
            ++tally.counts[d.loss];
            for (std::size_t a = 0; a < tally.obligors.size(); ++a) {
                const auto v = static_cast<double>(d.defaults[a]);
                tally.obligors[a].sum_defaults += v;
                tally.obligors[a].sum_defaults_sq += v * v;
                if (d.defaults[a] > 0) ++tally.obligors[a].defaulted_draws;
            }
            for (std::size_t k = 0; k < tally.factors.size(); ++k) {
                tally.factors[k].sum += d.factors[k + 1];
                tally.factors[k].sum_sq += d.factors[k + 1] * d.factors[k + 1];
            }
        }
    });

    SimResult result;
    result.draws = config.draws;
    result.seed = config.seed;
    result.obligors = prototype.obligors;
    result.factors = prototype.factors;
    for (const auto& b : blocks) {
        for (std::size_t x = 0; x < b.counts.size(); ++x)
            if (b.counts[x] > 0) result.loss_counts[x] += b.counts[x];
        for (std::size_t a = 0; a < b.obligors.size(); ++a) {
            result.obligors[a].sum_defaults += b.obligors[a].sum_defaults;
            result.obligors[a].sum_defaults_sq += b.obligors[a].sum_defaults_sq;
            result.obligors[a].defaulted_draws += b.obligors[a].defaulted_draws;
        }
        for (std::size_t k = 0; k < b.factors.size(); ++k) {
            result.factors[k].sum += b.factors[k].sum;
            result.factors[k].sum_sq += b.factors[k].sum_sq;
        }
    }
    return result;
}

namespace {

// E[prod D_A] over one or two distinct obligors, from the model inputs.
double default_product_mean(const Portfolio& portfolio, std::span<const std::size_t> ids) {
    double m = 1.0;
    for (std::size_t a : ids) m *= portfolio.obligors[a].pd;
    if (ids.size() == 2) {
        double s = 1.0;
        const auto& w1 = portfolio.obligors[ids[0]].weights;
        const auto& w2 = portfolio.obligors[ids[1]].weights;
        for (std::size_t k = 1; k <= portfolio.sector_count(); ++k)
            s += w1[k] * w2[k] / portfolio.sectors[k - 1].alpha;
        m *= s;
    }
    return m;
}

std::vector<std::size_t> scenario_indices(const Portfolio& portfolio, std::span<const std::string> scenario) {
    if (scenario.empty() || scenario.size() > 2) throw InputError("a scenario names one or two obligors");
    std::vector<std::size_t> ids;
    for (const auto& id : scenario) ids.push_back(portfolio.obligor_index(id));
    if (ids.size() == 2 && ids[0] == ids[1])
        throw InputError("scenario obligors must be distinct (got '" + scenario[0] + "' twice)");
    for (std::size_t a : ids)
        if (portfolio.obligors[a].pd == 0.0)
            throw InputError("obligor '" + portfolio.obligors[a].id +
                             "' has pd 0: zero accepted draws, conditioning is undefined");
    return ids;
}

struct ConditionalBlock {
    Histogram weighted;
    std::vector<std::uint64_t> rejected_counts;
    std::uint64_t accepted = 0;
};

}  // namespace

ConditionalEstimate estimate_conditional(const Portfolio& portfolio, std::span<const std::string> scenario,
                                         const SimConfig& config) {
    const std::vector<std::size_t> ids = scenario_indices(portfolio, scenario);
    const DrawSampler sampler(portfolio);
    const bool rejection = ids.size() == 1;

    const auto blocks = run_blocks(sampler, config, ConditionalBlock{},
                                   [&](Generator& gen, DrawSampler::Workspace& ws, std::uint64_t count,
                                       ConditionalBlock& tally) {
        for (std::uint64_t i = 0; i < count; ++i) {
            sampler.sample(gen, ws);
            const Draw& d = ws.draw;
            double w = 1.0;
            for (std::size_t a : ids) w *= static_cast<double>(d.defaults[a]);
            if (w == 0.0) continue;
            tally.weighted.add(d.loss, w);
            if (rejection) {
                ++tally.accepted;
                if (d.loss >= tally.rejected_counts.size()) tally.rejected_counts.resize(d.loss + 1, 0);
                ++tally.rejected_counts[d.loss];
            }
        }
    });

    Histogram weighted;
    std::vector<std::uint64_t> rejected;
    ConditionalEstimate est;
    est.draws = config.draws;
    est.normalizer = default_product_mean(portfolio, ids);
    for (const auto& b : blocks) {
        weighted.merge(b.weighted);
        est.accepted_draws += b.accepted;
        if (b.rejected_counts.size() > rejected.size()) rejected.resize(b.rejected_counts.size(), 0);
        for (std::size_t x = 0; x < b.rejected_counts.size(); ++x) rejected[x] += b.rejected_counts[x];
    }

    const double n = static_cast<double>(config.draws);
    bool any = false;
    for (std::size_t x = 0; x < weighted.sum.size(); ++x) {
        if (weighted.sum[x] == 0.0) continue;
        any = true;
        const double m = weighted.sum[x] / n;
        const double var = std::max(0.0, weighted.sum_sq[x] / n - m * m);
        est.weighted[x] = {m / est.normalizer, std::sqrt(var / n) / est.normalizer};
    }
    if (!any) throw NumericalError("conditional estimate: zero accepted draws");
    if (rejection) {
        const double m = static_cast<double>(est.accepted_draws);
        for (std::size_t x = 0; x < rejected.size(); ++x) {
            if (rejected[x] == 0) continue;
            const double p = static_cast<double>(rejected[x]) / m;
            est.rejection[x] = {p, std::sqrt(p * (1.0 - p) / m)};
        }
    }
    return est;
}

ConditionalEstimate estimate_conditional_one_default(const Portfolio& portfolio, std::string_view obligor,
                                                     const SimConfig& config) {
    const std::string ids[] = {std::string(obligor)};
    return estimate_conditional(portfolio, ids, config);
}

ConditionalEstimate estimate_conditional_two_defaults(const Portfolio& portfolio, std::string_view first,
                                                      std::string_view second, const SimConfig& config) {
    const std::string ids[] = {std::string(first), std::string(second)};
    return estimate_conditional(portfolio, ids, config);
}

namespace {

struct IdentityBlock {
    double left = 0.0, left_sq = 0.0;
    double right = 0.0, right_sq = 0.0;
    double diff_sq = 0.0;
};

}  // namespace

IdentityReport verify_fundamental_identity(const Portfolio& portfolio, std::string_view first,
                                           std::optional<std::string_view> second, Loss x,
                                           const SimConfig& config) {
    std::vector<std::size_t> ids{portfolio.obligor_index(first)};
    if (second) {
        ids.push_back(portfolio.obligor_index(*second));
        if (ids[0] == ids[1]) throw InputError("identity check needs two distinct obligors");
    }
    const DrawSampler sampler(portfolio);

    const auto blocks = run_blocks(sampler, config, IdentityBlock{},
                                   [&](Generator& gen, DrawSampler::Workspace& ws, std::uint64_t count,
                                       IdentityBlock& tally) {
        for (std::uint64_t i = 0; i < count; ++i) {
            sampler.sample(gen, ws);
            const Draw& d = ws.draw;
            double left = d.loss == x ? 1.0 : 0.0;
            double right = 1.0;
            Loss shifted = d.loss;
            for (std::size_t a : ids) {
                left *= static_cast<double>(d.defaults[a]);
                right *= d.intensities[a];
                shifted += sampler.extra_severity(a, gen, ws);
            }
            if (shifted != x) right = 0.0;
            tally.left += left;
            tally.left_sq += left * left;
            tally.right += right;
            tally.right_sq += right * right;
            tally.diff_sq += (left - right) * (left - right);
        }
    });

    IdentityBlock total;
    for (const auto& b : blocks) {
        total.left += b.left;
        total.left_sq += b.left_sq;
        total.right += b.right;
        total.right_sq += b.right_sq;
        total.diff_sq += b.diff_sq;
    }
    const double n = static_cast<double>(config.draws);
    auto se = [n](double sum, double sum_sq) {
        const double m = sum / n;
        return std::sqrt(std::max(0.0, sum_sq / n - m * m) / n);
    };
    IdentityReport r;
    r.x = x;
    r.draws = config.draws;
    r.left = total.left / n;
    r.right = total.right / n;
    r.left_se = se(total.left, total.left_sq);
    r.right_se = se(total.right, total.right_sq);
    r.combined_se = std::sqrt(r.left_se * r.left_se + r.right_se * r.right_se);
    r.paired_se = se(total.left - total.right, total.diff_sq);
    return r;
}

}  // namespace crplus
