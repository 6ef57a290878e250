#include "crplus/conditional.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <memory>
#include <sstream>

#include "crplus/error.hpp"

namespace crplus {

namespace {

const std::vector<double>& loadings(const Portfolio& portfolio, std::size_t obligor) {
    return portfolio.obligors[obligor].weights;
}

void check_distinct(std::size_t first, std::size_t second, const Portfolio& portfolio) {
    if (first == second)
        throw InputError("scenario obligors must be distinct (got '" + portfolio.obligors[first].id +
                         "' twice)");
}

void check_x(const LossEngine& engine, Loss x) {
    if (x > engine.limit())
        throw InputError("loss level " + std::to_string(x) + " is beyond the truncation limit " +
                         std::to_string(engine.limit()));
}

double base_probability(const LossEngine& engine, Loss x) {
    check_x(engine, x);
    const double px = engine.base()[x];
    if (!(px > 0.0))
        throw InputError("P[X = " + std::to_string(x) + "] is zero; conditioning on it is undefined");
    return px;
}

Pmf severity_kernel(const Portfolio& portfolio, std::span<const std::size_t> obligors,
                    std::size_t limit) {
    Pmf kernel = Pmf::point_mass(0, limit);
    for (std::size_t i : obligors)
        kernel = convolve_kernel(kernel, Pmf::from_severity(portfolio.obligors[i].severity, limit));
    return kernel;
}

// sum_t w_t sum_e kernel[e] P_t[x - e]
double mixture_coefficient(const LossEngine& engine, std::span<const MixtureTerm> terms,
                           const Pmf& kernel, Loss x) {
    const std::size_t top = std::min<std::size_t>(x, kernel.support_end());
    double total = 0.0;
    for (const auto& term : terms) {
        const auto pmf = engine.loss_distribution(term.stress);
        double s = 0.0;
        for (std::size_t e = 0; e <= top; ++e) s += kernel[e] * (*pmf)[x - e];
        total += term.weight * s;
    }
    return total;
}

// E[S_k^power] for a unit-mean Gamma factor with shape alpha.
double gamma_moment(double alpha, unsigned power) {
    double m = 1.0;
    for (unsigned i = 0; i < power; ++i) m *= 1.0 + static_cast<double>(i) / alpha;
    return m;
}

// E[prod_m sum_k w_{m,k} S_k] with S_0 = 1, by expansion over sector index tuples.
double factor_moment(const Portfolio& portfolio, std::span<const std::size_t> obligors) {
    const std::size_t dims = portfolio.sector_count() + 1;
    const std::size_t r = obligors.size();
    std::vector<std::size_t> index(r, 0);
    std::vector<unsigned> counts(dims, 0);
    double total = 0.0;
    while (true) {
        double w = 1.0;
        std::fill(counts.begin(), counts.end(), 0u);
        for (std::size_t m = 0; m < r; ++m) {
            w *= loadings(portfolio, obligors[m])[index[m]];
            ++counts[index[m]];
        }
        if (w != 0.0) {
            double e = 1.0;
            for (std::size_t k = 1; k < dims; ++k)
                if (counts[k] > 0) e *= gamma_moment(portfolio.sectors[k - 1].alpha, counts[k]);
            total += w * e;
        }
        std::size_t m = 0;
        while (m < r && ++index[m] == dims) index[m++] = 0;
        if (m == r) break;
    }
    return total;
}

std::vector<std::size_t> resolve(const Portfolio& portfolio, std::span<const std::string> ids) {
    std::vector<std::size_t> out;
    for (const auto& id : ids) out.push_back(portfolio.obligor_index(id));
    return out;
}

void check_conditional_tail(const LossEngine& engine, const Pmf& pmf) {
    if (pmf.tail_mass() <= engine.tail_tolerance()) return;
    std::ostringstream msg;
    msg.precision(6);
    msg << "conditional distribution tail mass " << pmf.tail_mass() << " beyond truncation limit "
        << engine.limit() << " exceeds tolerance " << engine.tail_tolerance();
    throw TruncationError(msg.str(), pmf.tail_mass(), engine.tail_tolerance());
}

}  // namespace

std::vector<MixtureTerm> single_default_mixture(const Portfolio& portfolio, std::size_t obligor) {
    const std::size_t n = portfolio.sector_count();
    const auto& w = loadings(portfolio, obligor);
    std::vector<MixtureTerm> terms;
    if (w[0] != 0.0) terms.push_back({StressVector::none(n), w[0]});
    for (std::size_t j = 1; j <= n; ++j)
        if (w[j] != 0.0) terms.push_back({StressVector::unit(n, j - 1), w[j]});
    return terms;
}

namespace {

// Expansion of E[(sum_k w1k S_k)(sum_k w2k S_k) f(S)] over stressed laws; also valid for
// first == second, where it yields the second factorial moment weights.
std::vector<MixtureTerm> pair_mixture(const Portfolio& portfolio, std::size_t first, std::size_t second) {
    const std::size_t n = portfolio.sector_count();
    const auto& w1 = loadings(portfolio, first);
    const auto& w2 = loadings(portfolio, second);
    std::vector<MixtureTerm> terms;
    auto push = [&](StressVector s, double weight) {
        if (weight != 0.0) terms.push_back({std::move(s), weight});
    };

    push(StressVector::none(n), w1[0] * w2[0]);
    for (std::size_t j = 1; j <= n; ++j)
        push(StressVector::unit(n, j - 1), w1[0] * w2[j] + w1[j] * w2[0]);
    for (std::size_t j = 1; j <= n; ++j) {
        const double alpha = portfolio.sectors[j - 1].alpha;
        push(StressVector::pair(n, j - 1, j - 1), w1[j] * w2[j] * ((alpha + 1.0) / alpha));
    }
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = i + 1; j <= n; ++j)
            push(StressVector::pair(n, i - 1, j - 1), w1[i] * w2[j] + w1[j] * w2[i]);
    return terms;
}

}  // namespace

std::vector<MixtureTerm> double_default_mixture(const Portfolio& portfolio, std::size_t first,
                                                std::size_t second) {
    check_distinct(first, second, portfolio);
    return pair_mixture(portfolio, first, second);
}

double double_default_normalizer(const Portfolio& portfolio, std::size_t first, std::size_t second) {
    check_distinct(first, second, portfolio);
    const auto& w1 = loadings(portfolio, first);
    const auto& w2 = loadings(portfolio, second);
    double s = 1.0;
    for (std::size_t k = 1; k <= portfolio.sector_count(); ++k)
        s += w1[k] * w2[k] / portfolio.sectors[k - 1].alpha;
    return s;
}

double cond_default_intensity(const LossEngine& engine, const Portfolio& portfolio,
                              std::string_view obligor, Loss x) {
    const std::size_t a = portfolio.obligor_index(obligor);
    const double pd = portfolio.obligors[a].pd;
    const double px = base_probability(engine, x);
    if (pd == 0.0) return 0.0;
    const std::size_t ids[] = {a};
    const Pmf kernel = severity_kernel(portfolio, ids, engine.limit());
    const auto terms = single_default_mixture(portfolio, a);
    return pd * mixture_coefficient(engine, terms, kernel, x) / px;
}

double joint_cond_intensity(const LossEngine& engine, const Portfolio& portfolio,
                            std::string_view first, std::string_view second, Loss x) {
    const std::size_t a = portfolio.obligor_index(first);
    const std::size_t b = portfolio.obligor_index(second);
    check_distinct(a, b, portfolio);
    const double px = base_probability(engine, x);
    const double pd = portfolio.obligors[a].pd * portfolio.obligors[b].pd;
    if (pd == 0.0) return 0.0;
    const std::size_t ids[] = {std::min(a, b), std::max(a, b)};
    const Pmf kernel = severity_kernel(portfolio, ids, engine.limit());
    const auto terms = double_default_mixture(portfolio, a, b);
    return pd * mixture_coefficient(engine, terms, kernel, x) / px;
}

double joint_default_intensity(const Portfolio& portfolio, std::string_view first,
                               std::string_view second) {
    const std::size_t a = portfolio.obligor_index(first);
    const std::size_t b = portfolio.obligor_index(second);
    return portfolio.obligors[a].pd * portfolio.obligors[b].pd *
           double_default_normalizer(portfolio, a, b);
}

double stressed_pd(const Portfolio& portfolio, std::string_view obligor,
                   std::span<const std::string> defaulted) {
    if (defaulted.empty() || defaulted.size() > 2)
        throw InputError("stressed_pd: condition on one or two defaulted obligors");
    const std::size_t b = portfolio.obligor_index(obligor);
    std::vector<std::size_t> given = resolve(portfolio, defaulted);
    if (given.size() == 2) check_distinct(given[0], given[1], portfolio);
    for (std::size_t a : given) {
        if (a == b)
            throw InputError("stressed_pd: obligor '" + std::string(obligor) +
                             "' is itself part of the scenario");
        if (portfolio.obligors[a].pd == 0.0)
            throw InputError("stressed_pd: defaulted obligor '" + portfolio.obligors[a].id +
                             "' has pd 0, so its default has probability zero");
    }
    const double denominator = factor_moment(portfolio, given);
    given.push_back(b);
    return portfolio.obligors[b].pd * factor_moment(portfolio, given) / denominator;
}

double stressed_pd(const Portfolio& portfolio, std::string_view obligor, std::string_view defaulted) {
    const std::string ids[] = {std::string(defaulted)};
    return stressed_pd(portfolio, obligor, ids);
}

Portfolio with_zero_severity(const Portfolio& portfolio, std::span<const std::string> obligors) {
    Portfolio out = portfolio;
    for (const auto& id : obligors) out.obligors[out.obligor_index(id)].severity = SeverityDist::deterministic(0);
    return out;
}

Pmf mix_stressed(const LossEngine& engine, std::span<const MixtureTerm> terms, double normalizer,
                 const Pmf& kernel) {
    const auto count = static_cast<std::int64_t>(terms.size());
    std::vector<std::shared_ptr<const Pmf>> parts(terms.size());
    std::exception_ptr failure;
    // Components may be computed concurrently; the reduction below runs in term order.
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t t = 0; t < count; ++t) {
        try {
            parts[static_cast<std::size_t>(t)] = engine.loss_distribution(terms[static_cast<std::size_t>(t)].stress);
        } catch (...) {
#pragma omp critical(crplus_mix_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<double> acc(engine.limit() + 1, 0.0);
    for (std::size_t t = 0; t < terms.size(); ++t) {
        const double w = terms[t].weight / normalizer;
        const auto probs = parts[t]->probs();
        for (std::size_t x = 0; x < acc.size(); ++x) acc[x] += w * probs[x];
    }
    return convolve_kernel(Pmf(std::move(acc)), kernel);
}

ScenarioReport loss_given_one_default(const LossEngine& engine, const Portfolio& portfolio,
                                      std::string_view obligor, const ScenarioOptions& options) {
    const std::size_t a = portfolio.obligor_index(obligor);
    const std::string id(obligor);
    const auto terms = single_default_mixture(portfolio, a);

    ScenarioReport report;
    report.scenario = {id};
    report.writeoff = options.writeoff;
    report.mixture = terms;
    report.normalizer = 1.0;

    if (options.writeoff) {
        const std::string ids[] = {id};
        const LossEngine stressed(assemble(with_zero_severity(portfolio, ids), engine.limit()),
                                  engine.tail_tolerance());
        report.conditional_pmf = mix_stressed(stressed, terms, 1.0, Pmf::point_mass(0, engine.limit()));
    } else {
        const std::size_t ids[] = {a};
        report.conditional_pmf =
            mix_stressed(engine, terms, 1.0, severity_kernel(portfolio, ids, engine.limit()));
    }
    check_conditional_tail(engine, report.conditional_pmf);
    report.risk = risk_report(report.conditional_pmf, options.thetas, engine.tail_tolerance());
    return report;
}

ScenarioReport loss_given_two_defaults(const LossEngine& engine, const Portfolio& portfolio,
                                       std::string_view first, std::string_view second,
                                       const ScenarioOptions& options) {
    const std::size_t a = portfolio.obligor_index(first);
    const std::size_t b = portfolio.obligor_index(second);
    check_distinct(a, b, portfolio);

    ScenarioReport report;
    report.scenario = {std::string(first), std::string(second)};
    report.writeoff = options.writeoff;
    report.mixture = double_default_mixture(portfolio, a, b);
    report.normalizer = double_default_normalizer(portfolio, a, b);

    if (options.writeoff) {
        const LossEngine stressed(assemble(with_zero_severity(portfolio, report.scenario), engine.limit()),
                                  engine.tail_tolerance());
        report.conditional_pmf = mix_stressed(stressed, report.mixture, report.normalizer,
                                              Pmf::point_mass(0, engine.limit()));
    } else {
        const std::size_t ids[] = {std::min(a, b), std::max(a, b)};
        report.conditional_pmf = mix_stressed(engine, report.mixture, report.normalizer,
                                              severity_kernel(portfolio, ids, engine.limit()));
    }
    check_conditional_tail(engine, report.conditional_pmf);
    report.risk = risk_report(report.conditional_pmf, options.thetas, engine.tail_tolerance());
    return report;
}

ScenarioReport loss_given_defaults(const LossEngine& engine, const Portfolio& portfolio,
                                   std::span<const std::string> scenario,
                                   const ScenarioOptions& options) {
    if (scenario.size() == 1) return loss_given_one_default(engine, portfolio, scenario[0], options);
    if (scenario.size() == 2)
        return loss_given_two_defaults(engine, portfolio, scenario[0], scenario[1], options);
    throw InputError("a scenario names one or two obligors");
}

std::vector<double> weighted_estimator_standard_errors(const LossEngine& engine, const Portfolio& portfolio,
                                                      std::string_view obligor, std::uint64_t draws) {
    const std::size_t a = portfolio.obligor_index(obligor);
    const double pd = portfolio.obligors[a].pd;
    if (!(pd > 0.0)) throw InputError("obligor '" + std::string(obligor) + "' has pd 0");
    if (draws == 0) throw InputError("draws must be >= 1");
    const std::size_t once[] = {a};
    const std::size_t twice[] = {a, a};
    // E[D 1{X=x}] = p C[x] and E[D(D-1) 1{X=x}] = p^2 M[x], with M the self-paired mixture
    // shifted by two independent severities.
    const Pmf c = mix_stressed(engine, single_default_mixture(portfolio, a), 1.0,
                               severity_kernel(portfolio, once, engine.limit()));
    const Pmf m = mix_stressed(engine, pair_mixture(portfolio, a, a), 1.0,
                               severity_kernel(portfolio, twice, engine.limit()));
    const double n = static_cast<double>(draws);
    std::vector<double> se(engine.limit() + 1);
    for (std::size_t x = 0; x < se.size(); ++x) {
        const double first = pd * c[x];
        const double second = pd * pd * m[x] + first;
        se[x] = std::sqrt(std::max(0.0, second - first * first) / n) / pd;
    }
    return se;
}

Pmf stressed_input_distribution(const Portfolio& portfolio, std::span<const std::string> scenario,
                                bool writeoff, std::size_t limit, double tail_tolerance) {
    const std::vector<std::size_t> given = resolve(portfolio, scenario);
    Portfolio rerun;
    rerun.sectors = portfolio.sectors;
    for (std::size_t i = 0; i < portfolio.obligors.size(); ++i) {
        if (std::find(given.begin(), given.end(), i) != given.end()) continue;
        Obligor o = portfolio.obligors[i];
        o.pd = stressed_pd(portfolio, o.id, scenario);
        rerun.obligors.push_back(std::move(o));
    }
    const LossEngine engine(assemble(rerun, limit), tail_tolerance);
    if (writeoff) return engine.base();
    std::vector<std::size_t> sorted = given;
    std::sort(sorted.begin(), sorted.end());
    Pmf out = convolve_kernel(engine.base(), severity_kernel(portfolio, sorted, limit));
    check_conditional_tail(engine, out);
    return out;
}

}  // namespace crplus
