#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "coupled.hpp"
#include "decoupled.hpp"
#include "emden_fowler.hpp"
#include "energetics.hpp"
#include "polytropes.hpp"
#include "potentials.hpp"
#include "quadrature.hpp"
#include "stability.hpp"

namespace flathalo {

/// one numeric claim with its tolerance; `value` is compared against `tolerance`
struct Check {
    std::string suite, name;
    double value = 0, tolerance = 0;
    std::string relation = "<";  ///< "<" means value < tolerance, ">" means value > tolerance
    bool pass = false;
};

inline Check check_below(std::string suite, std::string name, double value, double tol) {
    return {std::move(suite), std::move(name), value, tol, "<", std::isfinite(value) && value < tol};
}

inline Check check_above(std::string suite, std::string name, double value, double threshold) {
    return {std::move(suite), std::move(name), value, threshold, ">", std::isfinite(value) && value > threshold};
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"quadrature", "potentials", "polytropes",
                                                "coupled", "energetics", "stability"};
    return names;
}

namespace detail {

inline double rel_err(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

/// least-squares slopes of log y against log M and log N
inline std::array<double, 2> fit_loglog(const std::vector<std::array<double, 3>>& rows) {
    double s[3][3] = {}, t[3] = {};
    for (const auto& row : rows) {
        double x[3] = {1, std::log(row[0]), std::log(row[1])}, y = std::log(row[2]);
        for (int i = 0; i < 3; ++i) {
            t[i] += x[i] * y;
            for (int j = 0; j < 3; ++j) s[i][j] += x[i] * x[j];
        }
    }
    for (int c = 0; c < 3; ++c)
        for (int r = c + 1; r < 3; ++r) {
            double f = s[r][c] / s[c][c];
            for (int j = c; j < 3; ++j) s[r][j] -= f * s[c][j];
            t[r] -= f * t[c];
        }
    double b[3];
    for (int i = 2; i >= 0; --i) {
        double v = t[i];
        for (int j = i + 1; j < 3; ++j) v -= s[i][j] * b[j];
        b[i] = v / s[i][i];
    }
    return {b[1], b[2]};
}

}  // namespace detail

/// reference coupled state shared by the coupled, energetics and stability suites
class VerifyContext {
public:
    explicit VerifyContext(SolverConfig cfg = {}, std::uint64_t seed = 2024) : cfg_(cfg), seed_(seed) {}

    const Exponents& exponents() const { return ex_; }
    const ConstraintVector& constraints() const { return cons_; }
    const SolverConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }

    std::shared_ptr<const CoupledSteadyState> reference() {
        if (!ref_) ref_ = std::make_shared<const CoupledSteadyState>(solve_coupled(ex_, cons_, cfg_));
        return ref_;
    }

private:
    Exponents ex_{1.0, 0.5};
    ConstraintVector cons_{1, 1, 0.3, 0.3};
    SolverConfig cfg_;
    std::uint64_t seed_;
    std::shared_ptr<const CoupledSteadyState> ref_;
};

inline std::vector<Check> verify_quadrature(VerifyContext&) {
    const std::string s = "quadrature";
    std::vector<Check> out;
    const auto& g = gauss_rule(16);
    double worst = 0;
    for (int p = 0; p < 32; p += 2) {
        double sum = 0;
        for (std::size_t i = 0; i < g.nodes.size(); ++i) sum += g.weights[i] * std::pow(g.nodes[i], p);
        worst = std::max(worst, std::fabs(sum - 2.0 / (p + 1)));
    }
    out.push_back(check_below(s, "gauss16 exact for even monomials to degree 30", worst, 1e-13));
    out.push_back(check_below(s, "K(0) = pi/2", std::fabs(elliptic_k(0) - pi / 2), 1e-15));
    out.push_back(check_below(s, "K(1/2) reference value", std::fabs(elliptic_k(0.5) - 1.8540746773013719), 1e-14));
    auto flat = RadialGrid::adapted({0.7}, 2.0, 64, Measure::Flat);
    std::vector<double> lin(flat.size());
    for (std::size_t i = 0; i < lin.size(); ++i) lin[i] = 3 - flat.node(i);
    double exact = 2 * pi * (3 * 2.0 * 2.0 / 2 - 8.0 / 3);
    out.push_back(check_below(s, "flat weights exact for linear integrand", detail::rel_err(integrate(flat, lin), exact), 1e-13));
    auto sph = MeridionalGrid(RadialGrid::uniform(1.5, 64, Measure::Spherical), 8);
    std::vector<double> one(sph.size(), 1.0);
    out.push_back(check_below(s, "meridional volume of a ball", detail::rel_err(integrate(sph, one), 4 * pi * 1.5 * 1.5 * 1.5 / 3), 1e-13));
    return out;
}

inline std::vector<Check> verify_potentials(VerifyContext&) {
    const std::string s = "potentials";
    std::vector<Check> out;
    auto g = std::make_shared<const MeridionalGrid>(RadialGrid::uniform(1.0, 200, Measure::Spherical), 16);
    auto plane = plane_grid_of(*g);
    Gravity grav(g, plane);
    HaloDensity ball{g, std::vector<double>(g->size(), 3 / (4 * pi))};
    DiskDensity disk{plane, std::vector<double>(plane->size(), 0.3)};
    auto field = grav.halo_potential(ball);
    double worst = 0;
    for (std::size_t k = 0; k < g->size(); ++k) {
        double r = g->r(k);
        worst = std::max(worst, std::fabs(field.values[k] + (3 - r * r) / 2));
    }
    out.push_back(check_below(s, "uniform ball interior potential", worst, 1e-4));
    out.push_back(check_below(s, "uniform ball self energy", detail::rel_err(grav.pot_inner(ball, ball), 0.6), 5e-3));
    auto mixed = grav.mixed_energy_both_ways(ball, disk);
    out.push_back(check_below(s, "mixed energy two ways on uniform bodies", mixed.discrepancy(), 1e-4));
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    double slack = INFINITY;
    for (int t = 0; t < 20; ++t) {
        double a = 0.3 + 0.7 * u(rng), p = 0.5 + 2 * u(rng), b = 0.3 + 0.7 * u(rng), shift = 0.3 * u(rng);
        HaloDensity h{g, std::vector<double>(g->size())};
        DiskDensity d{plane, std::vector<double>(plane->size())};
        for (std::size_t k = 0; k < g->size(); ++k) h.rho[k] = std::pow(std::max(0.0, 1 - std::pow(g->r(k) / a, 2)), p);
        for (std::size_t j = 0; j < plane->size(); ++j)
            d.sigma[j] = std::max(0.0, 1 - std::pow((plane->node(j) - shift) / b, 2));
        slack = std::min(slack, std::sqrt(grav.pot_inner(h, h) * grav.pot_inner(d, d)) - std::fabs(grav.pot_inner(h, d)));
    }
    out.push_back(check_above(s, "Cauchy-Schwarz slack over 20 random pairs", slack, -1e-10));
    return out;
}

inline std::vector<Check> verify_polytropes(VerifyContext&) {
    const std::string s = "polytropes";
    std::vector<Check> out;
    auto ef = emden_fowler_solve(1, 1, 1);
    double worst = 0;
    for (double r = 0.01; r < pi; r += 0.01) worst = std::max(worst, std::fabs(ef.value(r) - std::sin(r) / r));
    out.push_back(check_below(s, "Lane-Emden n=1 against sin(r)/r", worst, 1e-8));
    out.push_back(check_below(s, "Lane-Emden n=1 first zero", std::fabs(ef.radius - pi), 1e-8));
    double mom = 0;
    for (double k : {0.5, 1.0, 2.5})
        mom = std::max(mom, detail::rel_err(velocity_moments_quadrature(Flavor::Halo3D, k, 0.7, 1.3).density,
                                            velocity_moments(Flavor::Halo3D, k, 0.7, 1.3).density));
    out.push_back(check_below(s, "velocity moments closed form against quadrature", mom, 1e-10));

    std::vector<std::array<double, 3>> rows3, rowsf;
    for (double M : {0.5, 1.0, 2.0})
        for (double N : {0.5, 1.0, 2.0}) {
            rows3.push_back({M, N, solve_decoupled_3d(1, M, N).radius});
            rowsf.push_back({M, N, solve_decoupled_flat(0.5, M, N).radius});
        }
    auto s3 = detail::fit_loglog(rows3), sf = detail::fit_loglog(rowsf);
    out.push_back(check_below(s, "3D radius slope in M (k=1)", detail::rel_err(s3[0], 1.0 / 3), 1e-2));
    out.push_back(check_below(s, "3D radius slope in N (k=1)", detail::rel_err(s3[1], -4.0 / 3), 1e-2));
    out.push_back(check_below(s, "flat radius slope in M (k=1/2)", detail::rel_err(sf[0], 0.5), 2e-2));
    out.push_back(check_below(s, "flat radius slope in N (k=1/2)", detail::rel_err(sf[1], -1.5), 2e-2));

    auto virial = [](const EnergyReport& r) {
        double epot = r.epot_halo + r.epot_disk;
        return std::fabs(2 * r.ekin() + epot) / std::fabs(epot);
    };
    out.push_back(check_below(s, "virial of decoupled 3D state", virial(energy_report(solve_decoupled_3d(1, 1, 1))), 1e-3));
    out.push_back(check_below(s, "virial of decoupled flat state", virial(energy_report(solve_decoupled_flat(0.5, 1, 1))), 1e-3));
    return out;
}

inline std::vector<Check> verify_coupled(VerifyContext& ctx) {
    const std::string s = "coupled";
    std::vector<Check> out;
    auto ref = ctx.reference();
    auto el = euler_lagrange_residual(*ref);
    out.push_back(check_below(s, "halo Euler-Lagrange residual", el.halo, 1e-4));
    out.push_back(check_below(s, "disk Euler-Lagrange residual", el.disk, 1e-4));
    out.push_back(check_below(s, "multiplier formulas against solver", multiplier_consistency(*ref).max_deviation(), 1e-2));
    out.push_back(check_below(s, "halo cutoff energy negative", ref->multipliers.E0, 0));
    out.push_back(check_below(s, "disk cutoff energy negative", ref->multipliers.E0_flat, 0));
    auto sup = support_check(*ref);
    out.push_back(check_below(s, "boundary potential over monopole bound", sup.boundary_potential / sup.monopole_bound, 1.05));
    out.push_back(check_above(s, "densities vanish outside support radii", sup.vanishes_outside ? 1 : 0, 0.5));
    double sat = std::max({detail::rel_err(ref->halo.mass(), ctx.constraints().M),
                           detail::rel_err(ref->disk.mass(), ctx.constraints().M_flat)});
    out.push_back(check_below(s, "mass constraints saturated", sat, 1e-6));

    ConstraintVector tiny = ctx.constraints();
    tiny.M_flat *= 1e-6;
    tiny.N_flat *= 1e-6;
    auto lim = solve_coupled(ctx.exponents(), tiny, ctx.config());
    auto h3 = solve_decoupled_3d(ctx.exponents().k, tiny.M, tiny.N);
    auto sampled = h3.on_grid(lim.halo.grid);
    double dmax = 0, peak = 0;
    for (std::size_t i = 0; i < sampled.rho.size(); ++i) {
        dmax = std::max(dmax, std::fabs(sampled.rho[i] - lim.halo.rho[i]));
        peak = std::max(peak, sampled.rho[i]);
    }
    out.push_back(check_below(s, "decoupling limit against decoupled 3D halo", dmax / peak, 5e-3));
    return out;
}

inline std::vector<Check> verify_energetics(VerifyContext& ctx) {
    const std::string s = "energetics";
    std::vector<Check> out;
    auto ref = ctx.reference();
    auto rep = energy_report(*ref);
    out.push_back(check_below(s, "kinetic energy two ways", rep.kinetic_discrepancy(), 1e-6));
    out.push_back(check_below(s, "mixed energy two ways on coupled state", rep.mixed_discrepancy(), 1e-4));
    out.push_back(check_below(s, "total energy negative", rep.total, 0));
    out.push_back(check_below(s, "mixed energy negative", rep.mixed, 0));
    out.push_back(check_below(s, "invariant scaling family at c=2", scaling_probe(*ref, 2, ScalingFamily::Invariant).relative_error(), 1e-4));
    out.push_back(check_below(s, "casimir-only scaling family at c=2", scaling_probe(*ref, 2, ScalingFamily::CasimirOnly).relative_error(), 1e-4));
    auto lc = lemma_covariance(energy_inputs(*ref));
    out.push_back(check_below(s, "lemma covariance slopes agree", std::fabs(lc.slope_density - lc.slope_bound) / std::fabs(lc.slope_bound), 1e-2));
    const auto& c = ctx.constraints();
    ConstraintVector half{c.M / 2, c.N / 2, c.M_flat / 2, c.N_flat / 2};
    auto sub = subadditivity_probe(ctx.exponents(), half, half, ctx.config());
    out.push_back(check_above(s, "subadditivity margin over 3x tolerance (equal split)", sub.margin / (3 * sub.tolerance), 1));
    return out;
}

inline std::vector<Check> verify_stability(VerifyContext& ctx) {
    const std::string s = "stability";
    std::vector<Check> out;
    auto ref = ctx.reference();
    auto battery = perturbation_battery(*ref, 12, ctx.seed(), 1000);
    double worst_residual = 0, worst_d = INFINITY;
    for (const auto& p : battery) {
        auto c = expansion_check(perturb(ref, p));
        worst_residual = std::max(worst_residual, std::fabs(c.residual.value) / std::max(c.residual.error, 1e-300));
        worst_d = std::min(worst_d, c.d.value / c.d.error);
    }
    out.push_back(check_below(s, "expansion residual in standard errors (12 perturbations)", worst_residual, 3));
    out.push_back(check_above(s, "d positive in standard errors (12 perturbations)", worst_d, 3));
    Perturbation boost;
    boost.kind = PerturbationKind::InPlaneBoost;
    boost.magnitude = 0.5;
    boost.move_disk = false;
    boost.pairs = 20000;
    boost.seed = ctx.seed();
    auto d = distance_d(perturb(ref, boost));
    double expect = 0.5 * 0.5 * ref->constraints.M / 2;
    out.push_back(check_below(s, "boost distance against eps^2 M/2 in standard errors", std::fabs(d.value - expect) / d.error, 3));
    auto jac = jacobian_check(make_map(battery[2], *ref), 10000, ctx.seed());
    out.push_back(check_below(s, "shear map Jacobian determinant", jac.max_det_error, 1e-10));
    return out;
}

inline std::vector<Check> run_suite(const std::string& name, VerifyContext& ctx) {
    if (name == "quadrature") return verify_quadrature(ctx);
    if (name == "potentials") return verify_potentials(ctx);
    if (name == "polytropes") return verify_polytropes(ctx);
    if (name == "coupled") return verify_coupled(ctx);
    if (name == "energetics") return verify_energetics(ctx);
    if (name == "stability") return verify_stability(ctx);
    throw DomainError("unknown suite '" + name + "'");
}

}  // namespace flathalo
