// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "crplus/conditional.hpp"
#include "crplus/engine.hpp"
#include "crplus/simulate.hpp"
#include "oracles.hpp"

using namespace crplus;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

Obligor obligor(std::string id, double pd, std::vector<double> weights, SeverityDist severity) {
    return Obligor{std::move(id), pd, std::move(weights), std::move(severity)};
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

constexpr std::size_t kRefLimit = 150;

Verdict closed_form_negbin() {
    double worst = 0.0;
    for (const auto [alpha, pd] : {std::pair{1.0, 0.1}, std::pair{2.5, 0.3}}) {
        const auto p = oracle::make_portfolio({alpha}, {obligor("A", pd, {0.0, 1.0}, SeverityDist::deterministic(1))});
        LossEngine e(assemble(p, 200));
        const auto expected = oracle::negbin_pmf(alpha, pd / (pd + alpha), 50);
        for (std::size_t n = 0; n <= 50; ++n) worst = std::max(worst, std::abs(e.base()[n] - expected[n]));
    }
    // P[n] = (10/11)(1/11)^n spelled out for the first case
    const auto p = oracle::make_portfolio({1.0}, {obligor("A", 0.1, {0.0, 1.0}, SeverityDist::deterministic(1))});
    LossEngine e(assemble(p, 200));
    for (std::size_t n = 0; n <= 50; ++n)
        worst = std::max(worst, std::abs(e.base()[n] - (10.0 / 11.0) * std::pow(1.0 / 11.0, static_cast<double>(n))));
    return {worst <= 1e-12, fmt("max |engine - closed form| = %.3g over n <= 50 (tol 1e-12)", worst)};
}

Verdict closed_form_poisson() {
    const auto p = oracle::make_portfolio({}, {obligor("A", 0.2, {1.0}, SeverityDist::deterministic(2))});
    LossEngine e(assemble(p, 100));
    const auto poisson = oracle::poisson_pmf(0.2, 50);
    double worst = 0.0;
    for (std::size_t x = 0; x <= 100; ++x) {
        const double expected = x % 2 == 0 ? poisson[x / 2] : 0.0;
        worst = std::max(worst, std::abs(e.base()[x] - expected));
    }
    return {worst <= 1e-12, fmt("max |engine - Poisson on atoms| = %.3g (tol 1e-12)", worst)};
}

Verdict moment_identity(const Portfolio& p, const LossEngine& e) {
    double expected = 0.0;
    for (const auto& o : p.obligors) expected += o.pd * o.severity.mean();
    const double gap = std::abs(mean(e.base()) - expected);
    const double tail = e.base().tail_mass();
    return {gap <= 1e-9 && tail < 1e-12,
            fmt("|mean - sum p E| = %.3g (tol 1e-9), tail mass %.3g (< 1e-12)", gap, tail)};
}

Verdict single_total_probability(const Portfolio& p, const LossEngine& e) {
    double worst = 0.0;
    for (const auto& o : p.obligors) {
        double s = 0.0;
        for (Loss x = 0; x <= e.limit(); ++x)
            if (e.base()[x] > 0.0) s += cond_default_intensity(e, p, o.id, x) * e.base()[x];
        worst = std::max(worst, std::abs(s - o.pd));
    }
    return {worst <= 1e-8, fmt("5 obligors, max |sum_x E[D|X=x] P[X=x] - p| = %.3g (tol 1e-8)", worst)};
}

Verdict pair_total_probability(const Portfolio& p, const LossEngine& e) {
    double worst = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < p.obligors.size(); ++i) {
        for (std::size_t j = i + 1; j < p.obligors.size(); ++j, ++pairs) {
            const auto& a = p.obligors[i];
            const auto& b = p.obligors[j];
            double s = 0.0;
            for (Loss x = 0; x <= e.limit(); ++x)
                if (e.base()[x] > 0.0) s += joint_cond_intensity(e, p, a.id, b.id, x) * e.base()[x];
            double target = 1.0;
            for (std::size_t k = 1; k <= p.sector_count(); ++k)
                target += a.weights[k] * b.weights[k] / p.sectors[k - 1].alpha;
            target *= a.pd * b.pd;
            worst = std::max(worst, std::abs(s - target));
        }
    }
    return {worst <= 1e-8 && pairs == 10, fmt("%d pairs, max deviation %.3g (tol 1e-8)", pairs, worst)};
}

Verdict mixture_identity(const Portfolio& p) {
    double worst = 0.0;
    for (std::size_t i = 0; i < p.obligors.size(); ++i) {
        for (std::size_t j = 0; j < p.obligors.size(); ++j) {
            if (i == j) continue;
            double target = 1.0;
            for (std::size_t k = 1; k <= p.sector_count(); ++k)
                target += p.obligors[i].weights[k] * p.obligors[j].weights[k] / p.sectors[k - 1].alpha;
            double sum = 0.0;
            for (const auto& t : double_default_mixture(p, i, j)) sum += t.weight;
            worst = std::max(worst, std::abs(sum - target));
        }
    }
    return {worst <= 1e-12, fmt("20 ordered pairs, max |sum of weights - normalizer| = %.3g (tol 1e-12)", worst)};
}

Verdict bayes(const Portfolio& p, const LossEngine& e) {
    double worst = 0.0;
    for (const auto& o : p.obligors) {
        const auto r = loss_given_one_default(e, p, o.id);
        for (Loss x = 0; x <= e.limit(); ++x) {
            const double px = e.base()[x];
            const double rhs = px > 0.0 ? cond_default_intensity(e, p, o.id, x) * px / o.pd : 0.0;
            worst = std::max(worst, std::abs(r.conditional_pmf[x] - rhs));
        }
    }
    return {worst <= 1e-12, fmt("5 obligors, every x <= %zu: max deviation %.3g (tol 1e-12)", e.limit(), worst)};
}

// SE is the estimator's standard error under the model (weighted_estimator_standard_errors);
// the count against the per-bucket sample SE is reported alongside.
Verdict mc_convergence(const Portfolio& p, const LossEngine& e) {
    constexpr std::uint64_t draws = 1'000'000;
    std::size_t eligible = 0, within = 0, within_sample = 0;
    for (const auto& o : p.obligors) {
        const auto analytic = loss_given_one_default(e, p, o.id).conditional_pmf;
        const auto model_se = weighted_estimator_standard_errors(e, p, o.id, draws);
        const auto est = estimate_conditional_one_default(p, o.id, {.draws = draws, .seed = 20240601, .record_default_counts = false});
        for (Loss x = 0; x <= e.limit(); ++x) {
            if (static_cast<double>(draws) * est.normalizer * analytic[x] < 25.0) continue;
            ++eligible;
            const auto it = est.weighted.find(x);
            const double m = it == est.weighted.end() ? 0.0 : it->second.estimate;
            const double se = it == est.weighted.end() ? 0.0 : it->second.standard_error;
            if (std::abs(m - analytic[x]) <= 3.0 * model_se[x]) ++within;
            if (std::abs(m - analytic[x]) <= 3.0 * se) ++within_sample;
        }
    }
    const double share = eligible ? static_cast<double>(within) / static_cast<double>(eligible) : 0.0;
    return {eligible > 0 && share >= 0.99,
            fmt("%zu/%zu buckets (%.2f%%) within 3 SE (sample-SE count %zu), 5 obligors, 1e6 draws each, "
                "seed 20240601 (need >= 99%%)",
                within, eligible, 100.0 * share, within_sample)};
}

Verdict identity_r2(const Portfolio& p, const LossEngine& e) {
    const Loss median = quantile(e.base(), 0.5);
    std::string detail = fmt("x = median = %zu;", median);
    bool pass = true;
    const std::pair<const char*, const char*> pairs[] = {{"A", "B"}, {"A", "C"}};
    const char* labels[] = {"same-sector", "cross-sector"};
    for (int i = 0; i < 2; ++i) {
        const auto r = verify_fundamental_identity(p, pairs[i].first, pairs[i].second, median,
                                                   {.draws = 1'000'000, .seed = 777, .record_default_counts = false});
        const double z = r.combined_se > 0 ? r.difference() / r.combined_se : 0.0;
        pass = pass && r.agrees(3.0) && r.left > 0.0;
        detail += fmt(" %s (%s,%s): left %.6g right %.6g, |diff|/SE = %.2f;", labels[i], pairs[i].first,
                      pairs[i].second, r.left, r.right, std::abs(z));
    }
    detail += " need <= 3";
    return {pass, detail};
}

Verdict panjer_vs_naive() {
    // Sector pmfs of random low-intensity portfolios against explicit enumeration of at most
    // ten claims: exact for x <= 10 s_min without zero-size claims, and on the whole support
    // when the claim-count tail beyond ten is negligible.
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    int instances = 0;
    for (int trial = 0; trial < 40; ++trial, ++instances) {
        const bool zero_claims = trial % 2 == 1;
        std::vector<Obligor> list;
        for (int a = 0; a < 4; ++a) {
            const double w0 = 0.3 * u(rng);
            const double w1 = (1 - w0) * u(rng);
            SeverityDist sev;
            const Loss lo = zero_claims && a == 0 ? 0 : 1 + static_cast<Loss>(3 * u(rng));
            sev.probabilities = {{lo, 0.5}, {lo + 1 + static_cast<Loss>(2 * u(rng)), 0.5}};
            list.push_back(obligor("O" + std::to_string(a), (zero_claims ? 0.08 : 0.25) * u(rng),
                                   {w0, w1, 1 - w0 - w1}, sev));
        }
        const double alpha_floor = zero_claims ? 4.0 : 0.3;
        const auto p = oracle::make_portfolio({alpha_floor + 3 * u(rng), alpha_floor + 3 * u(rng)}, list);
        const std::size_t limit = 40;
        const auto sys = assemble(p, limit);
        for (std::size_t k = 0; k <= sys.sector_count(); ++k) {
            if (sys.inert(k)) continue;
            if (sys.mu[k] > 1.0) return {false, "instance generator produced mu > 1"};
            const auto& q = *sys.q[k];
            const auto counts = k == 0 ? oracle::poisson_pmf(sys.mu[0], 10)
                                       : oracle::negbin_pmf(sys.alpha[k - 1], sys.delta[k - 1], 10);
            const auto naive = oracle::enumerate_compound(counts, q.probs(), limit);
            const auto panjer = sector_loss(sys, k, 0);
            std::size_t top = limit;
            if (q[0] == 0.0) {
                std::size_t s_min = 1;
                while (q[s_min] == 0.0) ++s_min;
                top = std::min(limit, 10 * s_min + s_min - 1);
            } else {
                double tail = 1.0;
                for (double c : counts) tail -= c;
                if (tail > 1e-11) return {false, fmt("claim-count tail %.3g too large for the zero-claim check", tail)};
            }
            for (std::size_t x = 0; x <= top; ++x) worst = std::max(worst, std::abs(panjer[x] - naive[x]));
        }
    }
    return {worst <= 1e-10,
            fmt("%d portfolios (half with zero-size claims), all sectors: max deviation %.3g (tol 1e-10)", instances, worst)};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    return cli::run(args, out, err);
}

Verdict determinism() {
    const fs::path dir = fs::temp_directory_path() / "crplus_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string portfolio = CRPLUS_TEST_DATA_DIR "/reference_portfolio.json";

    for (const char* run : {"mc1", "mc2"})
        if (cli({"mc", "--portfolio", portfolio, "--draws", "1000000", "--seed", "42", "--out", (dir / run).string()}))
            return {false, "mc command failed"};
    const bool identical = slurp(dir / "mc1" / "mc_losses.csv") == slurp(dir / "mc2" / "mc_losses.csv") &&
                           slurp(dir / "mc1" / "mc_summary.json") == slurp(dir / "mc2" / "mc_summary.json");

    auto p = oracle::reference_portfolio();
    std::reverse(p.obligors.begin(), p.obligors.end());
    std::rotate(p.obligors.begin(), p.obligors.begin() + 2, p.obligors.end());
    std::swap(p.sectors[0], p.sectors[1]);
    for (auto& o : p.obligors) std::swap(o.weights[1], o.weights[2]);
    {
        std::ofstream(dir / "permuted.json") << serialize_portfolio(p);
    }
    if (cli({"dist", "--portfolio", portfolio, "--out", (dir / "d1").string()}) ||
        cli({"dist", "--portfolio", (dir / "permuted.json").string(), "--out", (dir / "d2").string()}))
        return {false, "dist command failed"};
    const auto a = pmf_from_csv(slurp(dir / "d1" / "pmf.csv"));
    const auto b = pmf_from_csv(slurp(dir / "d2" / "pmf.csv"));
    double worst = a.limit() == b.limit() ? 0.0 : 1.0;
    for (std::size_t x = 0; x <= std::min(a.limit(), b.limit()); ++x) worst = std::max(worst, std::abs(a[x] - b[x]));
    fs::remove_all(dir);
    return {identical && worst <= 1e-12,
            fmt("mc outputs byte-identical: %s; dist under obligor+sector permutation: max deviation %.3g (tol 1e-12)",
                identical ? "yes" : "no", worst)};
}

Verdict performance() {
    const auto p = oracle::random_portfolio(1000, 1000, 10, 200, 0.04);
    const auto start = std::chrono::steady_clock::now();
    LossEngine e(assemble(p, 50'000));
    const auto r = loss_given_two_defaults(e, p, p.obligors[17].id, p.obligors[523].id, {.thetas = {0.99, 0.999}});
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {seconds < 60.0,
            fmt("1000 obligors, 10 sectors, L = 50000: base + two-default scenario in %.2f s (limit 60 s); "
                "%zu mixture terms, conditional mean %.1f, VaR99.9 %zu",
                seconds, r.mixture.size(), r.risk.mean, r.risk.levels[1].quantile)};
}

}  // namespace

int main() {
    const auto reference = oracle::reference_portfolio();
    const LossEngine engine(assemble(reference, kRefLimit));

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"closed-form negative binomial", closed_form_negbin},
        {"closed-form compound Poisson", closed_form_poisson},
        {"moment identity", [&] { return moment_identity(reference, engine); }},
        {"single-default total probability", [&] { return single_total_probability(reference, engine); }},
        {"two-default total probability", [&] { return pair_total_probability(reference, engine); }},
        {"mixture-weight identity", [&] { return mixture_identity(reference); }},
        {"Bayes coherence", [&] { return bayes(reference, engine); }},
        {"MC convergence of the weighted estimator", [&] { return mc_convergence(reference, engine); }},
        {"two-default identity by MC", [&] { return identity_r2(reference, engine); }},
        {"Panjer vs naive enumeration", panjer_vs_naive},
        {"determinism", determinism},
        {"performance sanity", performance},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        const auto start = std::chrono::steady_clock::now();
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %2zu %-4s %s: %s [%.2fs]\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    v.detail.c_str(), s);
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
