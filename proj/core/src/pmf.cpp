#include "crplus/pmf.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "crplus/error.hpp"

namespace crplus {

namespace {

constexpr double kClipTolerance = 1e-14;
constexpr double kUpperTolerance = 1e-12;
// Severity mass that may sit in a tail of unknown location.
constexpr double kSeverityTailTolerance = 1e-12;
// Below this many multiply-adds a convolution is not worth a parallel region.
constexpr std::size_t kParallelWork = 1 << 20;

double compensated_sum(std::span<const double> values) {
    double sum = 0.0, c = 0.0;
    for (double v : values) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            c += (sum - t) + v;
        else
            c += (v - t) + sum;
        sum = t;
    }
    return sum + c;
}

std::vector<double> severity_coefficients(const Pmf& severity, std::size_t limit) {
    if (severity.tail_mass() > kSeverityTailTolerance && severity.limit() < limit)
        throw InputError("severity pmf carries tail mass below the truncation limit");
    const std::size_t m = std::min(severity.support_end(), limit);
    return {severity.probs().begin(), severity.probs().begin() + static_cast<std::ptrdiff_t>(m + 1)};
}

}  // namespace

Pmf::Pmf() : probs_{1.0}, tail_mass_(0.0) {}

Pmf::Pmf(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw InputError("pmf needs at least one support point");
    for (double& v : probs_) {
        if (!std::isfinite(v)) throw NumericalError("pmf entry is not finite");
        if (v < 0.0) {
            if (v < -kClipTolerance) throw NumericalError("pmf entry is negative beyond round-off");
            v = 0.0;
        }
        if (v > 1.0 + kUpperTolerance) throw NumericalError("pmf entry exceeds one");
    }
    tail_mass_ = 1.0 - total();
}

Pmf::Pmf(std::vector<double> probs, double tail_mass) : Pmf(std::move(probs)) {
    tail_mass_ = tail_mass;
}

Pmf Pmf::point_mass(Loss at, std::size_t limit) {
    std::vector<double> probs(limit + 1, 0.0);
    if (at <= limit) {
        probs[at] = 1.0;
        return Pmf(std::move(probs), 0.0);
    }
    return Pmf(std::move(probs), 1.0);
}

Pmf Pmf::from_severity(const SeverityDist& severity, std::size_t limit) {
    std::vector<double> probs(limit + 1, 0.0);
    double tail = 0.0;
    for (const auto& [loss, p] : severity.probabilities) {
        if (loss <= limit)
            probs[loss] += p;
        else
            tail += p;
    }
    return Pmf(std::move(probs), tail);
}

double Pmf::total() const { return compensated_sum(probs_); }

std::size_t Pmf::support_end() const {
    for (std::size_t i = probs_.size(); i-- > 0;)
        if (probs_[i] != 0.0) return i;
    return 0;
}

Pmf Pmf::with_limit(std::size_t limit) const {
    std::vector<double> probs(limit + 1, 0.0);
    const std::size_t keep = std::min(limit, this->limit());
    std::copy_n(probs_.begin(), keep + 1, probs.begin());
    double tail = tail_mass_;
    if (limit < this->limit())
        tail += compensated_sum(std::span<const double>(probs_).subspan(limit + 1));
    return Pmf(std::move(probs), tail);
}

Pmf convolve(const Pmf& a, const Pmf& b) {
    if (a.limit() != b.limit())
        throw InputError("convolve: truncation limits differ (" + std::to_string(a.limit()) + " vs " +
                         std::to_string(b.limit()) + ")");
    const std::size_t limit = a.limit();
    const std::size_t ea = a.support_end();
    const std::size_t eb = b.support_end();
    const std::size_t end = std::min(limit, ea + eb);

    // b reversed so that the inner product runs over contiguous memory in both operands.
    std::vector<double> rb(eb + 1);
    for (std::size_t k = 0; k <= eb; ++k) rb[k] = b[eb - k];
    const double* pa = a.probs().data();
    const double* pr = rb.data();

    std::vector<double> out(limit + 1, 0.0);
    const auto n_end = static_cast<std::int64_t>(end);
    const bool parallel = (end + 1) * (std::min(ea, eb) + 1) > kParallelWork;
#pragma omp parallel for schedule(dynamic, 64) if (parallel)
    for (std::int64_t ni = 0; ni <= n_end; ++ni) {
        const auto n = static_cast<std::size_t>(ni);
        const std::size_t lo = n > eb ? n - eb : 0;
        const std::size_t hi = std::min(n, ea);
        const double* pb = pr + (eb - n);  // pb[j] == b[n - j]
        double s = 0.0;
#pragma omp simd reduction(+ : s)
        for (std::size_t j = lo; j <= hi; ++j) s += pa[j] * pb[j];
        out[n] = s;
    }
    return Pmf(std::move(out));
}

Pmf convolve_kernel(const Pmf& base, const Pmf& kernel) {
    const std::size_t limit = base.limit();
    const std::vector<double> k = severity_coefficients(kernel, limit);
    const std::size_t eb = base.support_end();
    std::vector<double> out(limit + 1, 0.0);
    for (std::size_t e = 0; e < k.size(); ++e) {
        if (k[e] == 0.0) continue;
        const std::size_t stop = std::min(limit, eb + e);
        for (std::size_t n = e; n <= stop; ++n) out[n] += k[e] * base[n - e];
    }
    return Pmf(std::move(out));
}

Pmf compound_poisson(double intensity, const Pmf& severity, std::size_t limit) {
    if (!(intensity >= 0.0) || !std::isfinite(intensity))
        throw InputError("compound_poisson: intensity must be finite and >= 0");
    const std::vector<double> q = severity_coefficients(severity, limit);
    const double q0 = q[0];
    if (intensity == 0.0 || q.size() == 1) {
        // Only zero-size claims can occur below the limit; claims beyond it land in the tail.
        const double at_zero = std::exp(intensity * (q0 - 1.0));
        std::vector<double> probs(limit + 1, 0.0);
        probs[0] = at_zero;
        return Pmf(std::move(probs));
    }
    std::vector<double> g(limit + 1, 0.0);
    g[0] = std::exp(intensity * (q0 - 1.0));
    if (g[0] == 0.0)
        throw NumericalError("compound_poisson: P[0] underflows for intensity " + std::to_string(intensity));

    const std::size_t m = q.size() - 1;
    std::vector<double> jq(m + 1);
    for (std::size_t j = 0; j <= m; ++j) jq[j] = static_cast<double>(j) * q[j];
    for (std::size_t n = 1; n <= limit; ++n) {
        const std::size_t top = std::min(n, m);
        double s = 0.0;
        for (std::size_t j = 1; j <= top; ++j) s += jq[j] * g[n - j];
        g[n] = intensity / static_cast<double>(n) * s;
    }
    return Pmf(std::move(g));
}

Pmf compound_negbin(double alpha, double delta, const Pmf& severity, std::size_t limit) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw InputError("compound_negbin: alpha must be finite and > 0");
    if (!(delta >= 0.0) || !(delta < 1.0)) throw InputError("compound_negbin: delta must lie in [0, 1)");
    const std::vector<double> q = severity_coefficients(severity, limit);
    const double q0 = q[0];
    std::vector<double> g(limit + 1, 0.0);
    g[0] = std::pow((1.0 - delta) / (1.0 - delta * q0), alpha);
    if (delta == 0.0 || q.size() == 1) return Pmf(std::move(g));
    if (g[0] == 0.0) throw NumericalError("compound_negbin: P[0] underflows");

    const double a = delta;
    const double b = (alpha - 1.0) * delta;
    const double scale = 1.0 / (1.0 - a * q0);
    const std::size_t m = q.size() - 1;
    std::vector<double> jq(m + 1);
    for (std::size_t j = 0; j <= m; ++j) jq[j] = static_cast<double>(j) * q[j];
    for (std::size_t n = 1; n <= limit; ++n) {
        const std::size_t top = std::min(n, m);
        double plain = 0.0, weighted = 0.0;
        for (std::size_t j = 1; j <= top; ++j) {
            plain += q[j] * g[n - j];
            weighted += jq[j] * g[n - j];
        }
        g[n] = scale * (a * plain + b / static_cast<double>(n) * weighted);
    }
    return Pmf(std::move(g));
}

Pmf negbin_exponent_increment(const Pmf& base, double delta, const Pmf& severity) {
    if (!(delta >= 0.0) || !(delta < 1.0))
        throw InputError("negbin_exponent_increment: delta must lie in [0, 1)");
    if (delta == 0.0) return base;
    const std::size_t limit = base.limit();
    const std::vector<double> q = severity_coefficients(severity, limit);
    const std::size_t m = q.size() - 1;
    const double scale = 1.0 / (1.0 - delta * q[0]);
    const double lead = 1.0 - delta;
    std::vector<double> g(limit + 1, 0.0);
    for (std::size_t n = 0; n <= limit; ++n) {
        const std::size_t top = std::min(n, m);
        double s = 0.0;
        for (std::size_t j = 1; j <= top; ++j) s += q[j] * g[n - j];
        g[n] = scale * (lead * base[n] + delta * s);
    }
    return Pmf(std::move(g));
}

double mean(const Pmf& p) {
    double s = 0.0;
    for (std::size_t x = 1; x <= p.limit(); ++x) s += static_cast<double>(x) * p[x];
    return s;
}

double variance(const Pmf& p) {
    // sum x^2 p - m^2, rearranged around the mean for accuracy.
    const double m = mean(p);
    double s = 0.0;
    for (std::size_t x = 0; x <= p.limit(); ++x) {
        const double d = static_cast<double>(x) - m;
        s += d * d * p[x];
    }
    return s + m * m * (1.0 - p.total());
}

Moments moments(const Pmf& p, double tail_tolerance) {
    return {mean(p), variance(p), p.tail_mass() <= tail_tolerance};
}

namespace {

void check_theta(double theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw InputError("theta must lie in (0, 1)");
}

}  // namespace

Loss quantile(const Pmf& p, double theta) {
    check_theta(theta);
    double cdf = 0.0, c = 0.0;
    for (std::size_t x = 0; x <= p.limit(); ++x) {
        const double y = p[x] - c;
        const double t = cdf + y;
        c = (t - cdf) - y;
        cdf = t;
        if (cdf >= theta) return x;
    }
    std::ostringstream msg;
    msg.precision(6);
    msg << "quantile at theta=" << theta << " is beyond the truncation limit " << p.limit()
        << " (tail mass " << p.tail_mass() << ")";
    throw NumericalError(msg.str());
}

double expected_shortfall(const Pmf& p, double theta) {
    const Loss q = quantile(p, theta);
    double cdf_q = 0.0;
    for (std::size_t x = 0; x <= q; ++x) cdf_q += p[x];
    double beyond = 0.0;
    for (std::size_t x = q + 1; x <= p.limit(); ++x) beyond += static_cast<double>(x) * p[x];
    return (beyond + static_cast<double>(q) * (cdf_q - theta)) / (1.0 - theta);
}

std::string to_csv(const Pmf& p) {
    std::string out = "x,probability\n";
    out.reserve(out.size() + 28 * (p.limit() + 1));
    char buf[64];
    for (std::size_t x = 0; x <= p.limit(); ++x) {
        const int len = std::snprintf(buf, sizeof buf, "%zu,%.17g\n", x, p[x]);
        out.append(buf, static_cast<std::size_t>(len));
    }
    const int len = std::snprintf(buf, sizeof buf, "# tail_mass=%.17g\n", p.tail_mass());
    out.append(buf, static_cast<std::size_t>(len));
    return out;
}

Pmf pmf_from_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line.rfind("x,probability", 0) != 0)
        throw InputError("pmf csv: missing 'x,probability' header");
    std::vector<double> probs;
    std::optional<double> tail;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# tail_mass=", 0) == 0) {
            tail = std::stod(line.substr(12));
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw InputError("pmf csv: malformed row '" + line + "'");
        std::size_t x = 0;
        const auto [ptr, ec] = std::from_chars(line.data(), line.data() + comma, x);
        if (ec != std::errc{} || ptr != line.data() + comma)
            throw InputError("pmf csv: malformed loss in '" + line + "'");
        if (x >= probs.size()) probs.resize(x + 1, 0.0);
        probs[x] = std::stod(line.substr(comma + 1));
    }
    if (probs.empty()) throw InputError("pmf csv: no rows");
    return tail ? Pmf(std::move(probs), *tail) : Pmf(std::move(probs));
}

}  // namespace crplus
