#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crplus/model.hpp"

namespace crplus {

/// Dense probability mass function on the integer losses {0, ..., limit}.
///
/// Mass that falls beyond the truncation limit is not dropped silently: it is
/// carried in tail_mass(), so that probabilities plus tail mass always sum to one
/// up to round-off. Negative round-off noise (down to -1e-14) is clipped to zero
/// on construction.
class Pmf {
public:
    /// Point mass at 0 on {0}.
    Pmf();
    /// Tail mass is derived as 1 - sum(probs).
    explicit Pmf(std::vector<double> probs);
    Pmf(std::vector<double> probs, double tail_mass);

    static Pmf point_mass(Loss at, std::size_t limit);
    /// Severity distribution as a pmf on {0..limit}; atoms beyond the limit go to the tail.
    static Pmf from_severity(const SeverityDist& severity, std::size_t limit);

    std::size_t limit() const { return probs_.size() - 1; }
    double tail_mass() const { return tail_mass_; }
    std::span<const double> probs() const { return probs_; }
    /// Probability at x; zero beyond the truncation limit.
    double at(Loss x) const { return x < probs_.size() ? probs_[x] : 0.0; }
    double operator[](std::size_t x) const { return probs_[x]; }
    /// Sum of the stored probabilities, accumulated with compensation.
    double total() const;
    /// Largest index carrying non-zero mass (0 for an all-zero vector).
    std::size_t support_end() const;

    /// Same distribution on a different limit; shrinking moves mass into the tail.
    Pmf with_limit(std::size_t limit) const;

private:
    std::vector<double> probs_;
    double tail_mass_ = 0.0;
};

/// Truncated convolution. Both operands must share the truncation limit.
Pmf convolve(const Pmf& a, const Pmf& b);

/// Convolution with a short kernel (e.g. a severity pmf); kernel may have any limit.
Pmf convolve_kernel(const Pmf& base, const Pmf& kernel);

/// Compound Poisson law exp(intensity * (Q(z) - 1)) via Panjer recursion with a=0, b=intensity.
Pmf compound_poisson(double intensity, const Pmf& severity, std::size_t limit);

/// Compound negative binomial law ((1 - delta) / (1 - delta * Q(z)))^alpha via Panjer
/// recursion with a=delta, b=(alpha-1)*delta.
Pmf compound_negbin(double alpha, double delta, const Pmf& severity, std::size_t limit);

/// base * (1 - delta) / (1 - delta * Q(z)): raises the negative binomial exponent of a
/// sector with failure probability delta and severity Q by one, in O(limit * |Q|).
Pmf negbin_exponent_increment(const Pmf& base, double delta, const Pmf& severity);

double mean(const Pmf& p);
double variance(const Pmf& p);

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
    /// False when the tail mass exceeds the tolerance the moments were certified against.
    bool certified = true;
};
Moments moments(const Pmf& p, double tail_tolerance);

/// min{x >= 0 : P[X <= x] >= theta}. Throws NumericalError if the truncated support
/// does not reach theta.
Loss quantile(const Pmf& p, double theta);

/// Tail average beyond the theta-quantile with the discrete boundary adjustment
/// (sum_{x>q} x p[x] + q (F(q) - theta)) / (1 - theta).
double expected_shortfall(const Pmf& p, double theta);

/// CSV with header `x,probability`, one row per index, trailing `# tail_mass=<value>`.
std::string to_csv(const Pmf& p);
Pmf pmf_from_csv(std::string_view text);

}  // namespace crplus
