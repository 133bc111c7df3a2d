#pragma once

#include <cmath>
#include <span>
#include <string>

#include "errors.hpp"
#include "quadrature.hpp"

namespace flathalo {

/// polytropic indices of the halo (k) and of the disk (k_flat)
struct Exponents {
    double k = 1.0;
    double k_flat = 0.5;

    double n() const { return k + 1.5; }
    double n_flat() const { return k_flat + 1; }

    void validate() const {
        if (!(k > 0 && k < 3.5))
            throw DomainError("halo index k=" + std::to_string(k) + " outside the valid range (0, 7/2)");
        if (!(k_flat > 0 && k_flat < 2))
            throw DomainError("disk index k_flat=" + std::to_string(k_flat) + " outside the valid range (0, 2)");
    }

    /// range in which both cutoffs are negative and both supports compact
    bool compact_support_expected() const { return k < 2.5 && k_flat < 1; }
};

/// cutoff energies and Lagrange factors
struct Multipliers {
    double E0 = 0, E0_flat = 0;
    double lambda = 0, lambda_flat = 0;
};

struct ConstraintVector {
    double M = 0, N = 0, M_flat = 0, N_flat = 0;

    bool halo_trivial() const { return M == 0 && N == 0; }
    bool disk_trivial() const { return M_flat == 0 && N_flat == 0; }

    void validate() const {
        auto pair = [](double a, double b, const char* name) {
            if (!(a >= 0 && b >= 0)) throw DomainError(std::string(name) + " constraints must be nonnegative");
            if ((a == 0) != (b == 0))
                throw DomainError(std::string(name) + " constraint pair must be both zero or both positive");
        };
        pair(M, N, "halo");
        pair(M_flat, N_flat, "disk");
    }
};

enum class Flavor { Halo3D, Flat2D };

/// Coefficients of the velocity integrals of ((a - |v|²/2)/λ)_+^k:
/// density = c_ρ λ^{-k} a^n, kinetic = c_kin λ^{-k} a^{n+1}, casimir = c_cas λ^{-(k+1)} a^{n+1}.
struct MomentCoefficients {
    double density, kinetic, casimir;
    double n;  ///< density exponent k + d/2
};

inline double beta_function(double a, double b) { return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)); }

inline MomentCoefficients moment_coefficients(Flavor flavor, double k) {
    if (!(k > 0)) throw DomainError("polytropic index must be positive");
    if (flavor == Flavor::Halo3D) {
        double s = std::pow(2.0, 2.5) * pi;
        return {s * beta_function(1.5, k + 1), s * beta_function(2.5, k + 1), s * beta_function(1.5, k + 2), k + 1.5};
    }
    return {2 * pi / (k + 1), 2 * pi / ((k + 1) * (k + 2)), 2 * pi / (k + 2), k + 1};
}

struct Moments {
    double density = 0, kinetic = 0, casimir = 0;
};

inline Moments velocity_moments(Flavor flavor, double k, double gap, double lambda) {
    if (!(lambda > 0)) throw DomainError("velocity_moments: lambda must be positive");
    if (!(gap > 0)) return {};
    auto c = moment_coefficients(flavor, k);
    double an = std::pow(gap, c.n), lk = std::pow(lambda, -k);
    return {c.density * lk * an, c.kinetic * lk * an * gap, c.casimir * lk * an * gap / lambda};
}

/// Same integrals by direct quadrature over |v| = sqrt(2a) sin θ, with panels
/// graded geometrically toward θ = π/2 where the integrand is not smooth.
inline Moments velocity_moments_quadrature(Flavor flavor, double k, double gap, double lambda, int panels = 16) {
    if (!(gap > 0)) return {};
    double dens = 0, kin = 0, cas = 0;
    const GaussRule& g = gauss_rule(16);
    auto panel = [&](double a, double b) {
        for (std::size_t q = 0; q < g.nodes.size(); ++q) {
            double th = 0.5 * (a + b) + 0.5 * (b - a) * g.nodes[q], w = 0.5 * (b - a) * g.weights[q];
            double s = std::sin(th), c = std::cos(th);
            double v = std::sqrt(2 * gap) * s;
            double dv = std::sqrt(2 * gap) * c;
            double shell = flavor == Flavor::Halo3D ? 4 * pi * v * v : 2 * pi * v;
            double f = std::pow(gap * c * c / lambda, k);
            dens += w * dv * shell * f;
            kin += w * dv * shell * f * 0.5 * v * v;
            cas += w * dv * shell * std::pow(f, 1 + 1 / k);
        }
    };
    for (int p = 0; p < panels; ++p) panel(0.25 * pi * p / panels, 0.25 * pi * (p + 1) / panels);
    double d = 0.25 * pi;
    for (int j = 0; j < 60; ++j, d *= 0.5) panel(0.5 * pi - d, 0.5 * pi - 0.5 * d);
    return {dens, kin, cas};
}

/// result of restoring the mass and Casimir constraints for a frozen potential
struct MultiplierFit {
    double E0 = 0, lambda = 0;
    std::size_t support_nodes = 0;
};

/// Finds the cutoff E0 and factor λ for which the density c_ρ λ^{-k}(E0-U)_+^n on
/// the given quadrature nodes has mass M and Casimir norm ||f||_{1+1/k} = N.
/// The ratio Σw a^{n+1} / (Σw a^n)^{1+1/k} decreases strictly in E0, so the
/// cutoff is found by bisection and λ then follows from the mass.
inline MultiplierFit fit_multipliers(Flavor flavor, double k, std::span<const double> U, std::span<const double> w,
                                     double M, double N) {
    if (!(M > 0 && N > 0)) throw DomainError("fit_multipliers: constraints must be positive");
    auto c = moment_coefficients(flavor, k);
    double p = 1 + 1 / k;
    double umin = INFINITY, umax = -INFINITY;
    for (double u : U) {
        umin = std::min(umin, u);
        umax = std::max(umax, u);
    }
    double target = std::log(std::pow(N / M, p) * std::pow(c.density, p) / c.casimir);
    auto sums = [&](double E0, double& g, double& h) {
        g = h = 0;
        for (std::size_t i = 0; i < U.size(); ++i) {
            double a = E0 - U[i];
            if (a > 0) {
                double an = std::pow(a, c.n);
                g += w[i] * an;
                h += w[i] * an * a;
            }
        }
    };
    auto log_phi = [&](double E0) {
        double g, h;
        sums(E0, g, h);
        return g > 0 ? std::log(h) - p * std::log(g) : INFINITY;
    };
    double scale = std::max({std::fabs(umin), std::fabs(umax), 1e-300});
    double span = scale * 1e-6;
    double lo = umin, hi = umin + span;
    int expand = 0;
    while (log_phi(hi) > target) {
        lo = hi;
        span *= 2;
        hi = umin + span;
        if (++expand > 3000) throw MultiplierError("no cutoff energy reproduces the requested constraints");
    }
    for (int it = 0; it < 400 && hi - lo > 4e-16 * std::max(std::fabs(hi), std::fabs(lo)); ++it) {
        double mid = 0.5 * (lo + hi);
        if (log_phi(mid) > target)
            lo = mid;
        else
            hi = mid;
    }
    MultiplierFit fit;
    fit.E0 = 0.5 * (lo + hi);
    double g, h;
    sums(fit.E0, g, h);
    if (!(g > 0)) throw MultiplierError("cutoff energy leaves no occupied node");
    fit.lambda = std::pow(c.density * g / M, 1 / k);
    for (double u : U) fit.support_nodes += fit.E0 - u > 0;
    return fit;
}

/// density-level quantities recovered from a density value and the multipliers
struct LocalMoments {
    double gap = 0, kinetic = 0, casimir = 0;
};

inline LocalMoments moments_from_density(Flavor flavor, double k, double density, double lambda) {
    if (!(density > 0)) return {};
    auto c = moment_coefficients(flavor, k);
    double gap = std::pow(density * std::pow(lambda, k) / c.density, 1 / c.n);
    return {gap, density * gap * c.kinetic / c.density, density * gap * c.casimir / (c.density * lambda)};
}

}  // namespace flathalo
