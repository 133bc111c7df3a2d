#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "quadrature.hpp"

namespace flathalo {

struct EmdenFowlerOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-14;
    double series_radius = 1e-4;  ///< in units of the natural length (c y0^{n-1})^{-1/2}
    double max_radius = 1e6;      ///< same units
    double max_step = 0.02;       ///< fraction of max(natural length, r)
    std::size_t max_steps = 2'000'000;
};

/// Solution of (1/r²)(r² y')' = -c y_+^n, y(0) = y0, y'(0) = 0 up to its first zero.
struct EmdenFowlerSolution {
    double n = 0, c = 0, y0 = 0;
    std::vector<double> r, y, dy;
    double radius = 0;          ///< first zero
    double slope_at_radius = 0; ///< y'(radius) < 0
    double int_n = 0;           ///< ∫_0^R 4π r² y^n dr
    double int_n1 = 0;          ///< ∫_0^R 4π r² y^{n+1} dr

    /// profile, continued beyond the zero by the vacuum solution R² y'(R) (1/R - 1/r)
    double value(double x) const {
        if (x >= radius) return slope_at_radius * radius * radius * (1 / radius - 1 / x);
        if (x <= r.front()) return y0 - c * std::pow(y0, n) * x * x / 6;
        std::size_t i = locate(x);
        double h = r[i + 1] - r[i], t = (x - r[i]) / h;
        double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
        double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
        return h00 * y[i] + h10 * h * dy[i] + h01 * y[i + 1] + h11 * h * dy[i + 1];
    }

    double derivative(double x) const {
        if (x >= radius) return slope_at_radius * radius * radius / (x * x);
        if (x <= r.front()) return -c * std::pow(y0, n) * x / 3;
        std::size_t i = locate(x);
        double h = r[i + 1] - r[i], t = (x - r[i]) / h;
        double d00 = 6 * t * (t - 1) / h, d10 = (1 - t) * (1 - 3 * t), d01 = -6 * t * (t - 1) / h, d11 = t * (3 * t - 2);
        return d00 * y[i] + d10 * dy[i] + d01 * y[i + 1] + d11 * dy[i + 1];
    }

private:
    std::size_t locate(double x) const {
        auto it = std::upper_bound(r.begin(), r.end(), x);
        std::size_t i = std::size_t(it - r.begin());
        return std::min(i == 0 ? 0 : i - 1, r.size() - 2);
    }
};

namespace detail {

using EFState = std::array<double, 4>;

struct EFSystem {
    double n, c;
    EFState operator()(double r, const EFState& s) const {
        double yp = s[0] > 0 ? std::pow(s[0], n) : 0.0;
        double shell = 4 * pi * r * r;
        return {s[1], -c * yp - 2 * s[1] / r, shell * yp, shell * yp * std::max(s[0], 0.0)};
    }
};

/// one Dormand-Prince 5(4) step; returns the 5th-order state and the error estimate
inline EFState dopri_step(const EFSystem& f, double r, const EFState& s, double h, EFState& err) {
    static constexpr double a21 = 1.0 / 5, a31 = 3.0 / 40, a32 = 9.0 / 40, a41 = 44.0 / 45, a42 = -56.0 / 15,
                            a43 = 32.0 / 9, a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729, a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656, b1 = 35.0 / 384, b3 = 500.0 / 1113,
                            b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84, e1 = 71.0 / 57600,
                            e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                            e7 = -1.0 / 40;
    auto comb = [&](std::initializer_list<std::pair<double, const EFState*>> terms) {
        EFState out = s;
        for (auto& [c, k] : terms)
            for (int i = 0; i < 4; ++i) out[i] += h * c * (*k)[i];
        return out;
    };
    EFState k1 = f(r, s);
    EFState k2 = f(r + h / 5, comb({{a21, &k1}}));
    EFState k3 = f(r + 3 * h / 10, comb({{a31, &k1}, {a32, &k2}}));
    EFState k4 = f(r + 4 * h / 5, comb({{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    EFState k5 = f(r + 8 * h / 9, comb({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    EFState k6 = f(r + h, comb({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
    EFState out = comb({{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    EFState k7 = f(r + h, out);
    for (int i = 0; i < 4; ++i)
        err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    return out;
}

}  // namespace detail

inline EmdenFowlerSolution emden_fowler_solve(double n, double c, double y0, const EmdenFowlerOptions& opt = {}) {
    if (!(n > 0)) throw DomainError("emden_fowler_solve: n must be positive");
    if (!(c > 0)) throw DomainError("emden_fowler_solve: c must be positive");
    if (!(y0 > 0)) throw DomainError("emden_fowler_solve: y0 must be positive");
    double ell = 1 / std::sqrt(c * std::pow(y0, n - 1));
    detail::EFSystem sys{n, c};
    EmdenFowlerSolution sol;
    sol.n = n;
    sol.c = c;
    sol.y0 = y0;

    // series start
    double r0 = opt.series_radius * ell;
    double A = c * std::pow(y0, n);             // y = y0 - A r²/6 + B r⁴/120
    double B = c * c * n * std::pow(y0, 2 * n - 1);
    detail::EFState s{y0 - A * r0 * r0 / 6 + B * std::pow(r0, 4) / 120, -A * r0 / 3 + B * std::pow(r0, 3) / 30, 0, 0};
    double yn0 = std::pow(y0, n);
    s[2] = 4 * pi * (yn0 * std::pow(r0, 3) / 3 - n * std::pow(y0, n - 1) * A / 6 * std::pow(r0, 5) / 5);
    s[3] = 4 * pi * (yn0 * y0 * std::pow(r0, 3) / 3 - (n + 1) * yn0 * A / 6 * std::pow(r0, 5) / 5);
    double r = r0;
    sol.r.push_back(r);
    sol.y.push_back(s[0]);
    sol.dy.push_back(s[1]);

    auto error_norm = [&](const detail::EFState& a, const detail::EFState& b, const detail::EFState& e) {
        double m = 0;
        for (int i = 0; i < 4; ++i) {
            double sc = opt.abs_tol * (i < 2 ? y0 : 1.0) + opt.rel_tol * std::max(std::fabs(a[i]), std::fabs(b[i]));
            if (i == 1) sc = opt.abs_tol * y0 / ell + opt.rel_tol * std::max(std::fabs(a[i]), std::fabs(b[i]));
            m = std::max(m, std::fabs(e[i]) / sc);
        }
        return m;
    };

    double h = 0.01 * ell;
    double rmax = opt.max_radius * ell;
    for (std::size_t step = 0; step < opt.max_steps; ++step) {
        h = std::min(h, opt.max_step * std::max(ell, r));
        detail::EFState err;
        detail::EFState next = detail::dopri_step(sys, r, s, h, err);
        double en = error_norm(s, next, err);
        if (en > 1) {
            h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
            continue;
        }
        if (next[0] <= 0) {
            // bisect the step length so that the last step ends on the zero
            double lo = 0, hi = h;
            for (int it = 0; it < 200 && hi - lo > 1e-14 * (r + hi); ++it) {
                double mid = 0.5 * (lo + hi);
                detail::EFState e2;
                detail::EFState trial = detail::dopri_step(sys, r, s, mid, e2);
                if (trial[0] > 0)
                    lo = mid;
                else
                    hi = mid;
            }
            detail::EFState e2;
            detail::EFState at = detail::dopri_step(sys, r, s, hi, e2);
            sol.radius = r + hi;
            sol.slope_at_radius = at[1];
            sol.int_n = at[2];
            sol.int_n1 = at[3];
            sol.r.push_back(sol.radius);
            sol.y.push_back(0.0);
            sol.dy.push_back(at[1]);
            return sol;
        }
        r += h;
        s = next;
        sol.r.push_back(r);
        sol.y.push_back(s[0]);
        sol.dy.push_back(s[1]);
        if (r > rmax)
            throw UnboundedSolutionError("Emden-Fowler solution with n=" + std::to_string(n) +
                                         " has no zero within the search radius");
        h *= std::min(5.0, 0.9 * std::pow(std::max(en, 1e-10), -0.2));
    }
    throw UnboundedSolutionError("Emden-Fowler integration exhausted its step budget");
}

}  // namespace flathalo
