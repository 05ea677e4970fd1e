#pragma once

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "inkdiff/errors.hpp"
#include "inkdiff/rng.hpp"

#include "json.hpp"

namespace inkdiff {

// Variance schedule and everything derived from it. Indexing follows the
// usual convention: step t runs 1..T, so beta_at(1) is the first step.
// l has T+1 entries with l_at(0) == 1.
struct NoiseSchedule {
    int T = 0;
    double base = 0.0, lo = 0.0, hi = 0.0;  // construction parameters
    std::vector<double> beta;       // size T
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // running product of alpha
    std::vector<double> sigma;      // reverse-step noise scale, sqrt(beta) by default
    std::vector<double> l;          // size T+1, noise-level boundaries

    double beta_at(int t) const { return beta[static_cast<size_t>(t - 1)]; }
    double alpha_at(int t) const { return alpha[static_cast<size_t>(t - 1)]; }
    double alpha_bar_at(int t) const {
        // alpha_bar_0 == 1 so the t=1 renoising target is well-defined
        return t == 0 ? 1.0 : alpha_bar[static_cast<size_t>(t - 1)];
    }
    double sigma_at(int t) const { return sigma[static_cast<size_t>(t - 1)]; }
    double l_at(int t) const { return l[static_cast<size_t>(t)]; }

    void require_step(int t) const {
        if (t < 1 || t > T) throw DataError("diffusion step t out of range 1..T");
    }
};

// beta_t = base + g_t where g_1..g_T is a geometric sequence from lo to hi.
// Endpoints are assigned exactly; interior points come from the log-space form.
inline NoiseSchedule make_schedule(int T, double base, double lo, double hi) {
    if (T < 2) throw DataError("schedule needs T >= 2");
    if (!(lo > 0.0) || !(hi > lo)) throw DataError("schedule needs 0 < lo < hi");
    if (!(base + hi < 1.0)) throw DataError("schedule needs base + hi < 1");
    if (!(base + lo > 0.0)) throw DataError("schedule needs base + lo > 0");

    NoiseSchedule s;
    s.T = T;
    s.base = base;
    s.lo = lo;
    s.hi = hi;
    s.beta.resize(static_cast<size_t>(T));
    const double loglo = std::log(lo), loghi = std::log(hi);
    for (int i = 0; i < T; ++i) {
        double g = std::exp(loglo + (loghi - loglo) * static_cast<double>(i) / (T - 1));
        s.beta[static_cast<size_t>(i)] = base + g;
    }
    s.beta.front() = base + lo;
    s.beta.back() = base + hi;

    s.alpha.resize(s.beta.size());
    s.alpha_bar.resize(s.beta.size());
    s.sigma.resize(s.beta.size());
    s.l.resize(s.beta.size() + 1);
    s.l[0] = 1.0;
    double prod = 1.0;
    for (size_t i = 0; i < s.beta.size(); ++i) {
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
        s.sigma[i] = std::sqrt(s.beta[i]);
        s.l[i + 1] = std::sqrt(prod);
    }
    return s;
}

namespace detail {
inline void require_same_size(size_t a, size_t b, const char* what) {
    if (a != b) throw DataError(std::string("shape mismatch in ") + what);
}
inline void require_level(double alpha_bar) {
    if (!(alpha_bar > 0.0) || !(alpha_bar <= 1.0))
        throw DataError("noise level alpha_bar must be in (0, 1]");
}
}  // namespace detail

// y_t = sqrt(abar) * y0 + sqrt(1 - abar) * eps
inline std::vector<double> forward_diffuse(std::span<const double> y0, double alpha_bar,
                                           std::span<const double> eps) {
    detail::require_same_size(y0.size(), eps.size(), "forward_diffuse");
    detail::require_level(alpha_bar);
    const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    std::vector<double> out(y0.size());
    for (size_t i = 0; i < y0.size(); ++i) out[i] = a * y0[i] + b * eps[i];
    return out;
}

// y0_hat = (y_t - sqrt(1 - abar) * eps_hat) / sqrt(abar)
inline std::vector<double> recover_y0(std::span<const double> y_t, std::span<const double> eps_hat,
                                      double alpha_bar) {
    detail::require_same_size(y_t.size(), eps_hat.size(), "recover_y0");
    detail::require_level(alpha_bar);
    const double inv_a = 1.0 / std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    std::vector<double> out(y_t.size());
    for (size_t i = 0; i < y_t.size(); ++i) out[i] = inv_a * (y_t[i] - b * eps_hat[i]);
    return out;
}

// Ancestral rule: y_{t-1} = (y_t - beta_t/sqrt(1-abar_t) eps_hat)/sqrt(alpha_t) + sigma_t z.
// Callers pass z = 0 at t = 1.
inline std::vector<double> reverse_step_original(std::span<const double> y_t,
                                                 std::span<const double> eps_hat,
                                                 std::span<const double> z,
                                                 const NoiseSchedule& s, int t) {
    s.require_step(t);
    detail::require_same_size(y_t.size(), eps_hat.size(), "reverse_step_original");
    detail::require_same_size(y_t.size(), z.size(), "reverse_step_original");
    const double inv_a = 1.0 / std::sqrt(s.alpha_at(t));
    const double coef = s.beta_at(t) / std::sqrt(1.0 - s.alpha_bar_at(t));
    const double sz = s.sigma_at(t);
    std::vector<double> out(y_t.size());
    for (size_t i = 0; i < y_t.size(); ++i)
        out[i] = inv_a * (y_t[i] - coef * eps_hat[i]) + sz * z[i];
    return out;
}

// Denoise-then-renoise rule: estimate y0, jump back to level abar_{t-1}.
// Combined form: y_{t-1} = (y_t - sqrt(1-abar_t) eps_hat)/sqrt(alpha_t)
//                          + sqrt(1-abar_{t-1}) z
inline std::vector<double> reverse_step_modified(std::span<const double> y_t,
                                                 std::span<const double> eps_hat,
                                                 std::span<const double> z,
                                                 const NoiseSchedule& s, int t) {
    s.require_step(t);
    detail::require_same_size(y_t.size(), eps_hat.size(), "reverse_step_modified");
    detail::require_same_size(y_t.size(), z.size(), "reverse_step_modified");
    const double inv_a = 1.0 / std::sqrt(s.alpha_at(t));
    const double coef = std::sqrt(1.0 - s.alpha_bar_at(t));
    const double nz = std::sqrt(1.0 - s.alpha_bar_at(t - 1));
    std::vector<double> out(y_t.size());
    for (size_t i = 0; i < y_t.size(); ++i)
        out[i] = inv_a * (y_t[i] - coef * eps_hat[i]) + nz * z[i];
    return out;
}

// sqrt(abar) ~ Uniform over (l_t, l_{t-1}]; half-open at the lower end.
inline double sample_noise_level(const NoiseSchedule& s, int t, Rng& rng) {
    s.require_step(t);
    const double lower = s.l_at(t), upper = s.l_at(t - 1);
    return lower + (upper - lower) * rng.uniform_open_low();
}

// (1/(2 sigma_t^2)) || mu_tilde - mu_theta ||^2 with mu_tilde evaluated from
// the noise implied by (y0, y_t, abar_t). Diagnostic only; the training loss
// never goes through here.
inline double step_kl_diagnostic(std::span<const double> y0, std::span<const double> y_t,
                                 std::span<const double> mu_theta, const NoiseSchedule& s, int t) {
    s.require_step(t);
    detail::require_same_size(y0.size(), y_t.size(), "step_kl_diagnostic");
    detail::require_same_size(y0.size(), mu_theta.size(), "step_kl_diagnostic");
    const double abar = s.alpha_bar_at(t);
    const double root_abar = std::sqrt(abar), root_1m = std::sqrt(1.0 - abar);
    const double inv_a = 1.0 / std::sqrt(s.alpha_at(t));
    const double coef = s.beta_at(t) / root_1m;
    const double sigma2 = s.sigma_at(t) * s.sigma_at(t);
    double acc = 0.0;
    for (size_t i = 0; i < y0.size(); ++i) {
        if (!std::isfinite(y0[i]) || !std::isfinite(y_t[i]) || !std::isfinite(mu_theta[i]))
            throw NumericError("non-finite input to step_kl_diagnostic");
        const double eps = (y_t[i] - root_abar * y0[i]) / root_1m;
        const double mu_tilde = inv_a * (y_t[i] - coef * eps);
        const double d = mu_tilde - mu_theta[i];
        acc += d * d;
    }
    return acc / (2.0 * sigma2);
}

// --- schedule dump -----------------------------------------------------

inline std::string schedule_table(const NoiseSchedule& s) {
    std::string out;
    char line[192];
    std::snprintf(line, sizeof line, "%4s %12s %12s %14s %12s %14s\n", "t", "beta", "alpha",
                  "alpha_bar", "sigma", "l");
    out += line;
    std::snprintf(line, sizeof line, "%4d %12s %12s %14s %12s %14.10g\n", 0, "-", "-", "-", "-",
                  s.l_at(0));
    out += line;
    for (int t = 1; t <= s.T; ++t) {
        std::snprintf(line, sizeof line, "%4d %12.6g %12.6g %14.8g %12.6g %14.10g\n", t,
                      s.beta_at(t), s.alpha_at(t), s.alpha_bar_at(t), s.sigma_at(t), s.l_at(t));
        out += line;
    }
    return out;
}

inline nlohmann::json schedule_json(const NoiseSchedule& s) {
    return nlohmann::json{{"T", s.T},           {"base", s.base},
                          {"lo", s.lo},         {"hi", s.hi},
                          {"beta", s.beta},     {"alpha", s.alpha},
                          {"alpha_bar", s.alpha_bar},
                          {"sigma", s.sigma},   {"l", s.l}};
}

}  // namespace inkdiff
