#include <gtest/gtest.h>

#include "crplus/engine.hpp"
#include "crplus/error.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

using namespace crplus;
using crplus::oracle::make_portfolio;

namespace {

Obligor obligor(std::string id, double pd, std::vector<double> weights, SeverityDist severity) {
    return Obligor{std::move(id), pd, std::move(weights), std::move(severity)};
}

void expect_close(std::span<const double> a, std::span<const double> b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

double expected_loss(const Portfolio& p) {
    double m = 0.0;
    for (const auto& o : p.obligors) m += o.pd * o.severity.mean();
    return m;
}

// Same portfolio with sectors and obligors reordered; loadings follow their sectors.
Portfolio permuted(const Portfolio& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(p.sector_count());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);
    Portfolio out;
    for (std::size_t k : order) out.sectors.push_back(p.sectors[k]);
    for (const auto& o : p.obligors) {
        Obligor c = o;
        for (std::size_t k = 0; k < order.size(); ++k) c.weights[k + 1] = o.weights[order[k] + 1];
        out.obligors.push_back(std::move(c));
    }
    std::shuffle(out.obligors.begin(), out.obligors.end(), rng);
    return out;
}

}  // namespace

TEST(Assemble, SingleObligor) {
    const auto p = make_portfolio({1.0}, {obligor("A", 0.1, {0.0, 1.0}, SeverityDist::deterministic(1))});
    const auto sys = assemble(p, 10);
    EXPECT_DOUBLE_EQ(sys.mu[1], 0.1);
    EXPECT_DOUBLE_EQ(sys.delta[0], 1.0 / 11.0);
    EXPECT_TRUE(sys.inert(0));
    ASSERT_FALSE(sys.inert(1));
    EXPECT_EQ((*sys.q[1])[1], 1.0);
}

TEST(Assemble, IntensitiesAdd) {
    const auto p = make_portfolio({1.0}, {obligor("A", 0.1, {0.0, 1.0}, SeverityDist::deterministic(1)),
                                          obligor("B", 0.3, {0.0, 1.0}, SeverityDist::deterministic(1))});
    const auto sys = assemble(p, 10);
    EXPECT_NEAR(sys.mu[1], 0.4, 1e-15);
    EXPECT_NEAR((*sys.q[1])[1], 1.0, 1e-15);
}

TEST(Assemble, SeverityMixture) {
    const auto p = make_portfolio({1.0}, {obligor("A", 0.2, {0.0, 1.0}, SeverityDist::deterministic(2)),
                                          obligor("B", 0.2, {0.0, 1.0}, SeverityDist::deterministic(4))});
    const auto sys = assemble(p, 10);
    const auto& q = *sys.q[1];
    EXPECT_NEAR(q[2], 0.5, 1e-15);
    EXPECT_NEAR(q[4], 0.5, 1e-15);
    EXPECT_NEAR(q.total(), 1.0, 1e-12);
}

TEST(Assemble, ReferenceInvariants) {
    const auto p = oracle::reference_portfolio();
    const auto sys = assemble(p, 80);
    for (std::size_t k = 0; k <= sys.sector_count(); ++k) {
        EXPECT_GE(sys.mu[k], 0.0);
        if (!sys.inert(k)) EXPECT_NEAR(sys.q[k]->total(), 1.0, 1e-12);
    }
    for (std::size_t j = 0; j < sys.sector_count(); ++j) {
        EXPECT_GE(sys.delta[j], 0.0);
        EXPECT_LT(sys.delta[j], 1.0);
        EXPECT_NEAR(sys.delta[j], sys.mu[j + 1] / (sys.mu[j + 1] + sys.alpha[j]), 1e-15);
    }
    EXPECT_NEAR(sys.mu[0], 0.4 * 0.3 + 0.6 * 0.2 + 0.8 + 0.3 * 0.5, 1e-15);
}

TEST(StressVector, Descriptors) {
    EXPECT_EQ(StressVector::none(3).descriptor(), "base");
    EXPECT_EQ(StressVector::unit(3, 2).descriptor(), "+e_3");
    EXPECT_EQ(StressVector::pair(3, 0, 0).descriptor(), "+2e_1");
    EXPECT_EQ(StressVector::pair(3, 1, 0).descriptor(), "+e_1+e_2");
    EXPECT_EQ(StressVector::pair(3, 0, 1), StressVector::pair(3, 1, 0));
    EXPECT_EQ(StressVector::pair(3, 0, 0).total(), 2u);
    EXPECT_THROW(StressVector::unit(2, 2), InputError);
}

TEST(SectorLoss, GeometricAndIncrementedExponent) {
    const auto p = make_portfolio({1.0}, {obligor("A", 0.1, {0.0, 1.0}, SeverityDist::deterministic(1))});
    const auto sys = assemble(p, 60);
    const auto g = sector_loss(sys, 1, 0);
    for (std::size_t n = 0; n <= 50; ++n)
        EXPECT_NEAR(g[n], (10.0 / 11.0) * std::pow(1.0 / 11.0, static_cast<double>(n)), 1e-12);
    const auto h = sector_loss(sys, 1, 1);
    EXPECT_NEAR(h[0], std::pow(10.0 / 11.0, 2), 1e-15);
    EXPECT_NEAR(h[0], 0.826446, 1e-6);
    const auto oracle = oracle::negbin_pmf(2.0, 1.0 / 11.0, 60);
    expect_close(h.probs(), oracle, 1e-12);
}

TEST(SectorLoss, InertAndIdiosyncratic) {
    const auto p = make_portfolio({1.0, 2.0}, {obligor("A", 0.1, {0.5, 0.5, 0.0}, SeverityDist::deterministic(1))});
    const auto sys = assemble(p, 8);
    expect_close(sector_loss(sys, 2, 0).probs(), Pmf::point_mass(0, 8).probs(), 0.0);
    expect_close(sector_loss(sys, 2, 2).probs(), Pmf::point_mass(0, 8).probs(), 0.0);
    EXPECT_THROW(sector_loss(sys, 0, 1), InputError);
}

TEST(LossDistribution, ClosedForms) {
    // compound Poisson with a single idiosyncratic obligor
    const auto idio = make_portfolio({}, {obligor("A", 0.2, {1.0}, SeverityDist::deterministic(2))});
    LossEngine e1(assemble(idio, 40));
    const auto poisson = oracle::poisson_pmf(0.2, 20);
    for (std::size_t n = 0; n <= 20; ++n) EXPECT_NEAR(e1.base()[2 * n], poisson[n], 1e-12);
    expect_close(e1.base().probs(), compound_poisson(0.2, Pmf::point_mass(2, 2), 40).probs(), 0.0);

    const auto sector = make_portfolio({1.0}, {obligor("A", 0.1, {0.0, 1.0}, SeverityDist::deterministic(1))});
    LossEngine e2(assemble(sector, 60));
    for (std::size_t n = 0; n <= 50; ++n)
        EXPECT_NEAR(e2.base()[n], (10.0 / 11.0) * std::pow(1.0 / 11.0, static_cast<double>(n)), 1e-12);
}

TEST(LossDistribution, EmptyPortfolioIsPointMass) {
    const auto p = make_portfolio({1.5}, {});
    LossEngine e(assemble(p, 5));
    expect_close(e.base().probs(), Pmf::point_mass(0, 5).probs(), 0.0);
    expect_close(e.loss_distribution(StressVector::unit(1, 0))->probs(), Pmf::point_mass(0, 5).probs(), 0.0);
}

TEST(LossDistribution, MeanMatchesExpectedLoss) {
    const auto p = oracle::reference_portfolio();
    LossEngine e(assemble(p, 150));
    ASSERT_LT(e.base().tail_mass(), 1e-12);
    EXPECT_NEAR(mean(e.base()), expected_loss(p), 1e-9);
    const auto m = portfolio_moments(p);
    EXPECT_NEAR(m.mean, expected_loss(p), 1e-12);
    EXPECT_NEAR(variance(e.base()), m.variance, 1e-8);
}

TEST(LossDistribution, AgreesWithFactorQuadrature) {
    const auto p = oracle::reference_portfolio();
    LossEngine e(assemble(p, 40), 0.5);
    const auto oracle = oracle::integrate_over_factors(p, {}, 40, 60);
    expect_close(e.base().probs(), oracle.pmf, 1e-10);
}

TEST(LossDistribution, PermutationInvariant) {
    const auto p = oracle::reference_portfolio();
    LossEngine e(assemble(p, 120));
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        LossEngine f(assemble(permuted(p, seed), 120));
        expect_close(f.base().probs(), e.base().probs(), 1e-12);
    }
}

TEST(LossDistribution, SplittingAnObligorChangesNothing) {
    auto p = oracle::reference_portfolio();
    LossEngine e(assemble(p, 120));
    Obligor half = p.obligors[1];
    half.pd /= 2;
    p.obligors[1].pd /= 2;
    half.id = "B2";
    p.obligors.push_back(half);
    LossEngine f(assemble(p, 120));
    expect_close(f.base().probs(), e.base().probs(), 1e-12);
}

TEST(LossDistribution, CachedMatchesDirect) {
    const auto p = oracle::random_portfolio(21, 60, 4, 6, 0.1);
    LossEngine e(assemble(p, 2 * suggest_truncation(p)));
    std::vector<StressVector> stresses{StressVector::none(4)};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i; j < 4; ++j) stresses.push_back(StressVector::pair(4, i, j));
    for (std::size_t j = 0; j < 4; ++j) stresses.push_back(StressVector::unit(4, j));
    for (const auto& s : stresses) {
        const auto cached = e.loss_distribution(s);
        const auto direct = e.loss_distribution_direct(s);
        expect_close(cached->probs(), direct.probs(), 1e-13);
        EXPECT_NEAR(cached->tail_mass(), direct.tail_mass(), 1e-13);
    }
    EXPECT_EQ(e.loss_distribution(StressVector::pair(4, 1, 2)).get(),
              e.loss_distribution(StressVector::pair(4, 2, 1)).get());
}

TEST(LossDistribution, StressRaisesTheMean) {
    const auto p = make_portfolio({0.7}, {obligor("A", 0.3, {0.0, 1.0}, SeverityDist::deterministic(2)),
                                          obligor("B", 0.5, {0.2, 0.8}, SeverityDist::deterministic(1))});
    LossEngine e(assemble(p, 200));
    EXPECT_GT(mean(*e.loss_distribution(StressVector::unit(1, 0))), mean(e.base()));
    EXPECT_GT(mean(*e.loss_distribution(StressVector::pair(1, 0, 0))),
              mean(*e.loss_distribution(StressVector::unit(1, 0))));
}

TEST(LossDistribution, ConcurrentCallsMatchSerial) {
    const auto p = oracle::random_portfolio(5, 80, 5, 8, 0.1);
    const auto sys = assemble(p, 2 * suggest_truncation(p));
    std::vector<StressVector> stresses;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = i; j < 5; ++j) stresses.push_back(StressVector::pair(5, i, j));

    LossEngine serial(sys);
    std::vector<std::vector<double>> expected;
    for (const auto& s : stresses) {
        const auto r = serial.loss_distribution(s);
        expected.emplace_back(r->probs().begin(), r->probs().end());
    }

    LossEngine shared(sys);
    std::vector<std::thread> threads;
    std::vector<std::vector<std::vector<double>>> seen(6);
    for (std::size_t t = 0; t < seen.size(); ++t) {
        threads.emplace_back([&, t] {
            for (std::size_t n = 0; n < stresses.size(); ++n) {
                const auto& s = stresses[(n + 3 * t) % stresses.size()];
                const auto r = shared.loss_distribution(s);
                seen[t].emplace_back(r->probs().begin(), r->probs().end());
            }
        });
    }
    for (auto& th : threads) th.join();
    for (std::size_t t = 0; t < seen.size(); ++t)
        for (std::size_t n = 0; n < stresses.size(); ++n) EXPECT_EQ(seen[t][n], expected[(n + 3 * t) % stresses.size()]);
    EXPECT_EQ(shared.cached_scenarios(), serial.cached_scenarios());
}

TEST(LossEngine, ReportsTruncationOverflow) {
    const auto p = oracle::reference_portfolio();
    try {
        LossEngine e(assemble(p, 10));
        FAIL();
    } catch (const TruncationError& err) {
        EXPECT_GT(err.tail_mass(), 1e-9);
        EXPECT_EQ(err.tolerance(), kDefaultTailTolerance);
    }
    LossEngine loose(assemble(p, 60), 1e-3);
    EXPECT_THROW(loose.loss_distribution(StressVector(std::vector<unsigned>{40, 0})), TruncationError);
}

TEST(SuggestTruncation, CoversTheTail) {
    const auto p = oracle::reference_portfolio();
    const auto m = portfolio_moments(p);
    const auto limit = suggest_truncation(p);
    EXPECT_EQ(limit, static_cast<std::size_t>(std::ceil(m.mean + 12 * std::sqrt(m.variance))));
    EXPECT_EQ(suggest_truncation(make_portfolio({}, {})), 1u);
}

TEST(RiskReport, Examples) {
    const auto point = risk_report(Pmf::point_mass(4, 6), {0.99});
    EXPECT_DOUBLE_EQ(point.mean, 4.0);
    EXPECT_DOUBLE_EQ(point.variance, 0.0);
    ASSERT_EQ(point.levels.size(), 1u);
    EXPECT_EQ(point.levels[0].quantile, 4u);
    EXPECT_NEAR(point.levels[0].expected_shortfall, 4.0, 1e-12);

    const auto small = risk_report(Pmf({0.5, 0.3, 0.2}), {0.75});
    EXPECT_EQ(small.levels[0].quantile, 1u);
    EXPECT_NEAR(small.levels[0].expected_shortfall, 1.8, 1e-14);

    const auto p = make_portfolio({1.0}, {obligor("A", 0.1, {0.0, 1.0}, SeverityDist::deterministic(1))});
    LossEngine e(assemble(p, 60));
    const auto geo = risk_report(e.base(), {0.5});
    EXPECT_EQ(geo.levels[0].quantile, 0u);
    EXPECT_TRUE(geo.certified);
}
