#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "coupled.hpp"
#include "decoupled.hpp"
#include "polytropes.hpp"
#include "potentials.hpp"

namespace flathalo {

/// Densities with the Lagrange factors of their polytropic velocity profiles.
/// A factor of 0 marks a test density without kinetic information.
struct EnergyInputs {
    std::optional<HaloDensity> halo;
    double k = 1, lambda = 0;
    std::optional<DiskDensity> disk;
    double k_flat = 0.5, lambda_flat = 0;
    int l_max = -1;
};

struct EnergyReport {
    double ekin_halo = 0, ekin_disk = 0;
    double ekin_halo_quadrature = 0, ekin_disk_quadrature = 0;
    double epot_halo = 0, epot_disk = 0;
    double mixed = 0, mixed_a = 0, mixed_b = 0;
    double mass_halo = 0, casimir_halo = 0, mass_disk = 0, casimir_disk = 0;
    double total = 0;

    double mixed_discrepancy() const {
        double m = std::max(std::fabs(mixed_a), std::fabs(mixed_b));
        return m > 0 ? std::fabs(mixed_a - mixed_b) / m : 0.0;
    }
    double kinetic_discrepancy() const {
        auto rel = [](double a, double b) { return a != 0 ? std::fabs(a - b) / std::fabs(a) : std::fabs(b); };
        return std::max(rel(ekin_halo, ekin_halo_quadrature), rel(ekin_disk, ekin_disk_quadrature));
    }
    double ekin() const { return ekin_halo + ekin_disk; }
    double h_halo() const { return ekin_halo + epot_halo; }
    double h_disk() const { return ekin_disk + epot_disk; }
    /// empirical constant of |E_pot| ≤ C E_kin^{1/2}
    double lower_bound_constant() const {
        double e = ekin();
        return e > 0 ? (std::fabs(epot_halo) + std::fabs(epot_disk) + std::fabs(mixed)) / std::sqrt(e) : INFINITY;
    }
};

namespace detail {

struct ComponentSums {
    double mass = 0, ekin = 0, ekin_quad = 0, casimir = 0;
};

template <class Weights>
ComponentSums component_sums(Flavor f, double k, std::span<const double> dens, const Weights& w, double lambda) {
    ComponentSums s;
    double cas = 0;
    for (std::size_t i = 0; i < dens.size(); ++i) {
        s.mass += w[i] * dens[i];
        if (lambda > 0 && dens[i] > 0) {
            auto lm = moments_from_density(f, k, dens[i], lambda);
            s.ekin += w[i] * lm.kinetic;
            cas += w[i] * lm.casimir;
            s.ekin_quad += w[i] * velocity_moments_quadrature(f, k, lm.gap, lambda, 4).kinetic;
        }
    }
    s.casimir = lambda > 0 ? std::pow(cas, k / (k + 1)) : 0.0;
    return s;
}

}  // namespace detail

inline EnergyReport energy_report(const EnergyInputs& in) {
    EnergyReport r;
    if (!in.halo && !in.disk) return r;
    std::shared_ptr<const MeridionalGrid> hg = in.halo ? in.halo->grid : detail::dummy_halo_grid(*in.disk->grid);
    std::shared_ptr<const RadialGrid> pg = in.disk ? in.disk->grid : plane_grid_of(*in.halo->grid);
    Gravity g(hg, pg, in.l_max);
    if (in.halo) {
        auto s = detail::component_sums(Flavor::Halo3D, in.k, in.halo->rho, hg->weights(), in.lambda);
        r.mass_halo = s.mass;
        r.ekin_halo = s.ekin;
        r.ekin_halo_quadrature = s.ekin_quad;
        r.casimir_halo = s.casimir;
        r.epot_halo = -g.pot_inner(*in.halo, *in.halo);
    }
    if (in.disk) {
        auto s = detail::component_sums(Flavor::Flat2D, in.k_flat, in.disk->sigma, pg->weights(), in.lambda_flat);
        r.mass_disk = s.mass;
        r.ekin_disk = s.ekin;
        r.ekin_disk_quadrature = s.ekin_quad;
        r.casimir_disk = s.casimir;
        r.epot_disk = -g.pot_inner(*in.disk, *in.disk);
    }
    if (in.halo && in.disk) {
        auto m = g.mixed_energy_both_ways(*in.halo, *in.disk);
        r.mixed_a = m.value_a;
        r.mixed_b = m.value_b;
        r.mixed = 0.5 * (m.value_a + m.value_b);
    }
    r.total = r.ekin_halo + r.ekin_disk + r.epot_halo + r.epot_disk + r.mixed;
    return r;
}

inline EnergyInputs energy_inputs(const CoupledSteadyState& s) {
    EnergyInputs in;
    in.k = s.exponents.k;
    in.k_flat = s.exponents.k_flat;
    in.l_max = s.config.l_max;
    if (!s.constraints.halo_trivial()) {
        in.halo = s.halo;
        in.lambda = s.multipliers.lambda;
    }
    if (!s.constraints.disk_trivial()) {
        in.disk = s.disk;
        in.lambda_flat = s.multipliers.lambda_flat;
    }
    return in;
}

inline EnergyInputs energy_inputs(const SteadyStateFlat& s) {
    EnergyInputs in;
    in.k_flat = s.k_flat;
    in.disk = s.density();
    in.lambda_flat = s.lambda;
    return in;
}

/// the spherical state sampled on a fine radial grid
inline EnergyInputs energy_inputs(const SteadyState3D& s, std::size_t n_radial = 1024) {
    EnergyInputs in;
    in.k = s.k;
    in.lambda = s.lambda;
    auto grid = std::make_shared<const MeridionalGrid>(
        RadialGrid::adapted({s.radius}, 3 * s.radius, n_radial, Measure::Spherical), 2);
    in.halo = s.on_grid(grid);
    return in;
}

inline EnergyReport energy_report(const CoupledSteadyState& s) { return energy_report(energy_inputs(s)); }
inline EnergyReport energy_report(const SteadyStateFlat& s) { return energy_report(energy_inputs(s)); }
inline EnergyReport energy_report(const SteadyState3D& s) { return energy_report(energy_inputs(s)); }

/// f*(x,v) = a f(bx, cv) and f̃*(x̃,ṽ) = d f̃(bx̃, eṽ)
struct PhaseScaling {
    double a = 1, b = 1, c = 1, d = 1, e = 1;
};

enum class ScalingFamily { CasimirOnly, Invariant };

inline PhaseScaling scaling_family(ScalingFamily fam, double c) {
    if (fam == ScalingFamily::CasimirOnly) return {c * c * c, 1, c, 1, 1};
    double c4 = std::pow(c, -4);
    return {std::pow(c, -7), c4, c, c4, c};
}

/// applies the map at density level; the velocity profiles stay polytropic
inline EnergyInputs rescale(const EnergyInputs& in, const PhaseScaling& p) {
    EnergyInputs out = in;
    if (in.halo) {
        auto grid = std::make_shared<const MeridionalGrid>(in.halo->grid->radial().scaled(1 / p.b), in.halo->grid->n_mu());
        HaloDensity h{grid, in.halo->rho};
        double f = p.a / (p.c * p.c * p.c);
        for (double& x : h.rho) x *= f;
        out.halo = h;
        out.lambda = in.lambda * std::pow(p.c, -2) * std::pow(p.a, -1 / in.k);
    }
    if (in.disk) {
        auto grid = std::make_shared<const RadialGrid>(in.disk->grid->scaled(1 / p.b));
        DiskDensity d{grid, in.disk->sigma};
        double f = p.d / (p.e * p.e);
        for (double& x : d.sigma) x *= f;
        out.disk = d;
        out.lambda_flat = in.lambda_flat * std::pow(p.e, -2) * std::pow(p.d, -1 / in.k_flat);
    }
    return out;
}

struct ScalingProbe {
    double H_original = 0, H_predicted = 0, H_recomputed = 0;
    /// (||f||₁, ||f||_{1+1/k}, ||f̃||₁, ||f̃||_{1+1/k̃}) predicted from the exponents and recomputed
    std::array<double, 4> norms_predicted{}, norms_recomputed{};
    double relative_error() const { return std::fabs(H_recomputed - H_predicted) / std::fabs(H_predicted); }
};

inline ScalingProbe scaling_probe(const EnergyInputs& in, double c, ScalingFamily fam) {
    if (!(c > 0)) throw DomainError("scaling_probe: c must be positive");
    auto p = scaling_family(fam, c);
    auto base = energy_report(in);
    auto scaled = rescale(in, p);
    auto rep = energy_report(scaled);
    ScalingProbe out;
    out.H_original = base.total;
    out.H_predicted = fam == ScalingFamily::Invariant
                          ? base.total
                          : base.ekin_halo / (c * c) + base.epot_halo + base.h_disk() + base.mixed;
    out.H_recomputed = rep.total;
    double ph = 1 + 1 / in.k, pd = 1 + 1 / in.k_flat;
    out.norms_predicted = {base.mass_halo * p.a * std::pow(p.b * p.c, -3),
                           base.casimir_halo * p.a * std::pow(p.b * p.c, -3 / ph),
                           base.mass_disk * p.d * std::pow(p.b * p.e, -2),
                           base.casimir_disk * p.d * std::pow(p.b * p.e, -2 / pd)};
    out.norms_recomputed = {rep.mass_halo, rep.casimir_halo, rep.mass_disk, rep.casimir_disk};
    return out;
}

inline ScalingProbe scaling_probe(const CoupledSteadyState& s, double c, ScalingFamily fam) {
    return scaling_probe(energy_inputs(s), c, fam);
}

struct SubadditivityProbe {
    double h1 = 0, h2 = 0, h12 = 0, margin = 0;
    double tolerance = 0;  ///< combined energy uncertainty of the three solves
};

namespace detail {
inline std::pair<double, double> energy_with_tolerance(const Exponents& ex, const ConstraintVector& c,
                                                       const SolverConfig& cfg) {
    if (c.halo_trivial() && c.disk_trivial()) return {0, 0};
    auto s = solve_coupled(ex, c, cfg);
    auto r = energy_report(s);
    double rel = std::max({s.final_change, r.mixed_discrepancy(), r.kinetic_discrepancy()});
    return {r.total, std::fabs(r.total) * rel};
}
}  // namespace detail

inline SubadditivityProbe subadditivity_probe(const Exponents& ex, const ConstraintVector& c1,
                                              const ConstraintVector& c2, const SolverConfig& cfg = {}) {
    ConstraintVector sum{c1.M + c2.M, c1.N + c2.N, c1.M_flat + c2.M_flat, c1.N_flat + c2.N_flat};
    auto [h1, t1] = detail::energy_with_tolerance(ex, c1, cfg);
    auto [h2, t2] = detail::energy_with_tolerance(ex, c2, cfg);
    double h12 = h1, t12 = t1;
    if (!(c2.halo_trivial() && c2.disk_trivial())) std::tie(h12, t12) = detail::energy_with_tolerance(ex, sum, cfg);
    SubadditivityProbe p;
    p.h1 = h1;
    p.h2 = h2;
    p.h12 = h12;
    p.margin = h1 + h2 - h12;
    p.tolerance = t1 + t2 + t12;
    return p;
}

/// log-log slopes in c of ||ρ||_{1+1/n} and of N^{(k+1)/(n+1)} E_kin^{3/(2k+5)} under f(x, cv)
struct LemmaCovariance {
    double slope_density = 0, slope_bound = 0;
};

inline LemmaCovariance lemma_covariance(const EnergyInputs& in, std::vector<double> cs = {0.5, 1, 2}) {
    if (!in.halo || !(in.lambda > 0)) throw DomainError("lemma_covariance needs a halo with kinetic information");
    double n = in.k + 1.5;
    std::vector<double> lc, ld, lb;
    for (double c : cs) {
        auto s = rescale(in, {1, 1, c, 1, 1});
        s.disk.reset();
        auto rep = energy_report(s);
        lc.push_back(std::log(c));
        ld.push_back(std::log(lp_norm(std::span<const double>(s.halo->rho), 1 + 1 / n, *s.halo->grid)));
        lb.push_back((in.k + 1) / (n + 1) * std::log(rep.casimir_halo) + 3 / (2 * in.k + 5) * std::log(rep.ekin_halo));
    }
    auto fit = [&](const std::vector<double>& y) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            mx += lc[i];
            my += y[i];
        }
        mx /= y.size();
        my /= y.size();
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            sxy += (lc[i] - mx) * (y[i] - my);
            sxx += (lc[i] - mx) * (lc[i] - mx);
        }
        return sxy / sxx;
    };
    return {fit(ld), fit(lb)};
}

}  // namespace flathalo
