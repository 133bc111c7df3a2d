#pragma once

#include <chrono>
#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "decoupled.hpp"
#include "errors.hpp"
#include "polytropes.hpp"
#include "potentials.hpp"

namespace flathalo {

struct GridSpec {
    std::size_t n_radial = 256;
    std::size_t n_mu = 32;
    double domain_factor = 3;  ///< grid extent over the largest support radius
};

struct SolverConfig {
    double damping = 0.5;
    std::size_t max_outer_sweeps = 3000;
    double density_tolerance = 1e-10;
    double multiplier_tolerance = 1e-10;
    double regrid_threshold = 0.02;
    GridSpec grid;
    int l_max = -1;  ///< Legendre cutoff of the halo expansion, -1 means n_mu

    void validate() const {
        if (!(damping > 0 && damping <= 1)) throw DomainError("damping must lie in (0, 1]");
        if (!(density_tolerance > 0 && multiplier_tolerance > 0)) throw DomainError("tolerances must be positive");
        if (max_outer_sweeps == 0) throw DomainError("max_outer_sweeps must be positive");
        if (grid.n_radial < 16 || grid.n_mu < 2) throw DomainError("grid too coarse");
        if (!(grid.domain_factor > 1)) throw DomainError("domain_factor must exceed 1");
    }
};

struct CoupledSteadyState {
    Exponents exponents;
    ConstraintVector constraints;
    SolverConfig config;
    Multipliers multipliers;
    HaloDensity halo;
    DiskDensity disk;
    std::vector<double> u_halo;  ///< effective potential at the meridional nodes
    std::vector<double> u_disk;  ///< effective potential on the plane
    double halo_radius = 0, disk_radius = 0;
    std::size_t sweeps = 0, regrids = 0;
    double final_change = 0;
    double seconds = 0;

    Gravity gravity() const { return Gravity(halo.grid, disk.grid, config.l_max); }
};

namespace detail {

/// outermost support radius along any ray of the meridional grid
inline double halo_edge(const MeridionalGrid& g, std::span<const double> U, double E0) {
    const auto& r = g.radial().nodes();
    double edge = 0;
    for (std::size_t a = 0; a < g.n_mu(); ++a) {
        std::size_t last = 0;
        bool any = false;
        for (std::size_t i = 0; i < g.n_r(); ++i)
            if (E0 - U[g.index(i, a)] > 0) {
                last = i;
                any = true;
            }
        if (!any) continue;
        if (last + 1 >= g.n_r()) return g.r_max();
        double x = E0 - U[g.index(last, a)], y = E0 - U[g.index(last + 1, a)];
        edge = std::max(edge, r[last] + (r[last + 1] - r[last]) * x / (x - y));
    }
    return edge;
}

inline std::vector<double> regrid_halo(const MeridionalGrid& from, std::span<const double> rho,
                                       const MeridionalGrid& to) {
    std::vector<double> out(to.size()), ray(from.n_r());
    for (std::size_t a = 0; a < to.n_mu(); ++a) {
        for (std::size_t i = 0; i < from.n_r(); ++i) ray[i] = rho[from.index(i, a)];
        for (std::size_t i = 0; i < to.n_r(); ++i)
            out[to.index(i, a)] = std::max(0.0, from.radial().interpolate(ray, to.radial().node(i)));
    }
    return out;
}

struct CoupledGrids {
    std::shared_ptr<const MeridionalGrid> halo;
    std::shared_ptr<const RadialGrid> disk;
};

inline CoupledGrids make_grids(double halo_support, double disk_support, const SolverConfig& cfg) {
    std::vector<double> supports;
    if (halo_support > 0) supports.push_back(halo_support);
    if (disk_support > 0) supports.push_back(disk_support);
    double extent = cfg.grid.domain_factor * std::max(halo_support, disk_support);
    auto radial = RadialGrid::adapted(supports, extent, cfg.grid.n_radial, Measure::Spherical);
    auto halo = std::make_shared<const MeridionalGrid>(radial, cfg.grid.n_mu);
    return {halo, plane_grid_of(*halo)};
}

inline double relative_change(std::span<const double> next, std::span<const double> prev) {
    double d = 0, m = 0;
    for (std::size_t i = 0; i < next.size(); ++i) {
        d = std::max(d, std::fabs(next[i] - prev[i]));
        m = std::max(m, next[i]);
    }
    return m > 0 ? d / m : 0.0;
}

}  // namespace detail

/// Self-consistent halo and disk in their common potential with all four
/// constraints enforced each sweep.
inline CoupledSteadyState solve_coupled(const Exponents& ex, const ConstraintVector& cons,
                                        const SolverConfig& cfg = {}) {
    ex.validate();
    cons.validate();
    cfg.validate();
    if (cons.halo_trivial() && cons.disk_trivial()) throw DomainError("all constraints are zero");
    auto t0 = std::chrono::steady_clock::now();
    bool with_halo = !cons.halo_trivial(), with_disk = !cons.disk_trivial();
    auto ch = moment_coefficients(Flavor::Halo3D, ex.k);
    auto cd = moment_coefficients(Flavor::Flat2D, ex.k_flat);

    // decoupled states as the starting point
    double rh = 0, rd = 0;
    std::unique_ptr<SteadyState3D> h3;
    std::unique_ptr<SteadyStateFlat> d2;
    if (with_halo) {
        h3 = std::make_unique<SteadyState3D>(solve_decoupled_3d(ex.k, cons.M, cons.N));
        rh = h3->radius;
    }
    if (with_disk) {
        FlatSolverOptions fo;
        fo.n_radial = cfg.grid.n_radial;
        d2 = std::make_unique<SteadyStateFlat>(solve_decoupled_flat(ex.k_flat, cons.M_flat, cons.N_flat, fo));
        rd = d2->radius;
    }
    auto grids = detail::make_grids(rh, rd, cfg);
    std::vector<double> rho(grids.halo->size(), 0.0), sigma(grids.disk->size(), 0.0);
    if (with_halo) rho = h3->on_grid(grids.halo).rho;
    if (with_disk) sigma = detail::regrid_values(*d2->grid, d2->sigma, *grids.disk);

    auto gravity = std::make_unique<Gravity>(grids.halo, grids.disk, cfg.l_max);
    double support_h = rh, support_d = rd;
    std::size_t regrids = 0;
    double change = INFINITY, prev_E0 = NAN, prev_E0f = NAN;
    for (std::size_t sweep = 1; sweep <= cfg.max_outer_sweeps; ++sweep) {
        std::vector<double> uh = gravity->halo_on_halo(rho), ud = gravity->halo_on_plane(rho);
        if (with_disk) {
            auto dh = gravity->disk_on_halo(sigma), dd = gravity->disk_on_plane(sigma);
            for (std::size_t i = 0; i < uh.size(); ++i) uh[i] += dh[i];
            for (std::size_t i = 0; i < ud.size(); ++i) ud[i] += dd[i];
        }
        Multipliers mult;
        std::vector<double> rho_next(rho.size(), 0.0), sigma_next(sigma.size(), 0.0);
        double edge_h = 0, edge_d = 0;
        if (with_halo) {
            auto fit = fit_multipliers(Flavor::Halo3D, ex.k, uh, grids.halo->weights(), cons.M, cons.N);
            if (fit.support_nodes < 3) throw InfeasibleError("halo", "halo support collapsed onto fewer than three nodes");
            mult.E0 = fit.E0;
            mult.lambda = fit.lambda;
            double lk = std::pow(fit.lambda, -ex.k);
            for (std::size_t i = 0; i < rho.size(); ++i) {
                double a = fit.E0 - uh[i];
                rho_next[i] = a > 0 ? ch.density * lk * std::pow(a, ch.n) : 0.0;
            }
            edge_h = detail::halo_edge(*grids.halo, uh, fit.E0);
        }
        if (with_disk) {
            auto fit = fit_multipliers(Flavor::Flat2D, ex.k_flat, ud, grids.disk->weights(), cons.M_flat, cons.N_flat);
            if (fit.support_nodes < 3) throw InfeasibleError("disk", "disk support collapsed onto fewer than three nodes");
            mult.E0_flat = fit.E0;
            mult.lambda_flat = fit.lambda;
            double lk = std::pow(fit.lambda, -ex.k_flat);
            for (std::size_t i = 0; i < sigma.size(); ++i) {
                double a = fit.E0 - ud[i];
                sigma_next[i] = a > 0 ? cd.density * lk * std::pow(a, cd.n) : 0.0;
            }
            edge_d = detail::edge_radius(*grids.disk, ud, fit.E0);
        }
        change = std::max(detail::relative_change(rho_next, rho), detail::relative_change(sigma_next, sigma));
        double mchange = 0;
        if (sweep > 1) {
            if (with_halo) mchange = std::max(mchange, std::fabs(mult.E0 - prev_E0) / std::fabs(mult.E0));
            if (with_disk) mchange = std::max(mchange, std::fabs(mult.E0_flat - prev_E0f) / std::fabs(mult.E0_flat));
        } else {
            mchange = INFINITY;
        }
        prev_E0 = mult.E0;
        prev_E0f = mult.E0_flat;
        double drift = 0;
        if (with_halo) drift = std::max(drift, std::fabs(edge_h / support_h - 1));
        if (with_disk) drift = std::max(drift, std::fabs(edge_d / support_d - 1));
        bool escaped = edge_h >= grids.halo->r_max() || edge_d >= grids.disk->r_max();

        if (change < cfg.density_tolerance && mchange < cfg.multiplier_tolerance && drift < cfg.regrid_threshold &&
            !escaped) {
            CoupledSteadyState s;
            s.exponents = ex;
            s.constraints = cons;
            s.config = cfg;
            s.multipliers = mult;
            s.halo = {grids.halo, std::move(rho_next)};
            s.disk = {grids.disk, std::move(sigma_next)};
            s.u_halo = gravity->halo_on_halo(s.halo.rho);
            s.u_disk = gravity->halo_on_plane(s.halo.rho);
            auto dh = gravity->disk_on_halo(s.disk.sigma), dd = gravity->disk_on_plane(s.disk.sigma);
            for (std::size_t i = 0; i < dh.size(); ++i) s.u_halo[i] += dh[i];
            for (std::size_t i = 0; i < dd.size(); ++i) s.u_disk[i] += dd[i];
            s.halo_radius = edge_h;
            s.disk_radius = edge_d;
            s.sweeps = sweep;
            s.regrids = regrids;
            s.final_change = change;
            s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return s;
        }
        if (drift > cfg.regrid_threshold || escaped) {
            if (edge_h >= grids.halo->r_max()) edge_h = 1.5 * grids.halo->r_max();
            if (edge_d >= grids.disk->r_max()) edge_d = 1.5 * grids.disk->r_max();
            auto fresh = detail::make_grids(edge_h, edge_d, cfg);
            rho = detail::regrid_halo(*grids.halo, rho_next, *fresh.halo);
            sigma = detail::regrid_values(*grids.disk, sigma_next, *fresh.disk);
            grids = fresh;
            support_h = edge_h;
            support_d = edge_d;
            gravity = std::make_unique<Gravity>(grids.halo, grids.disk, cfg.l_max);
            ++regrids;
            continue;
        }
        for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += cfg.damping * (rho_next[i] - rho[i]);
        for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] += cfg.damping * (sigma_next[i] - sigma[i]);
    }
    std::ostringstream diag;
    diag << "sweeps=" << cfg.max_outer_sweeps << " regrids=" << regrids << " last relative change=" << change;
    throw ConvergenceError("coupled fixed-point iteration did not converge", diag.str());
}

/// relative deviations of the multipliers recomputed from the energy formulas
struct MultiplierConsistency {
    Multipliers from_formulas;
    double E0 = 0, E0_flat = 0, lambda = 0, lambda_flat = 0;  ///< relative deviations
    double max_deviation() const { return std::max({E0, E0_flat, lambda, lambda_flat}); }
};

inline MultiplierConsistency multiplier_consistency(const CoupledSteadyState& s) {
    const auto& ex = s.exponents;
    auto g = s.gravity();
    MultiplierConsistency mc;
    auto rel = [](double a, double b) { return b != 0 ? std::fabs(a - b) / std::fabs(b) : std::fabs(a); };
    double mixed = 0;
    bool halo = !s.constraints.halo_trivial(), disk = !s.constraints.disk_trivial();
    if (halo && disk) mixed = -2 * g.pot_inner(s.halo, s.disk);
    if (halo) {
        double mass = 0, ekin = 0, cas = 0;
        const auto& w = s.halo.grid->weights();
        for (std::size_t i = 0; i < w.size(); ++i) {
            auto lm = moments_from_density(Flavor::Halo3D, ex.k, s.halo.rho[i], s.multipliers.lambda);
            mass += w[i] * s.halo.rho[i];
            ekin += w[i] * lm.kinetic;
            cas += w[i] * lm.casimir;
        }
        double epot = -g.pot_inner(s.halo, s.halo);
        mc.from_formulas.E0 = ((2 * ex.k + 5) / 3 * ekin + 2 * epot + mixed) / mass;
        mc.from_formulas.lambda = 2 * (ex.k + 1) * ekin / (3 * cas);
        mc.E0 = rel(mc.from_formulas.E0, s.multipliers.E0);
        mc.lambda = rel(mc.from_formulas.lambda, s.multipliers.lambda);
    }
    if (disk) {
        double mass = 0, ekin = 0, cas = 0;
        const auto& w = s.disk.grid->weights();
        for (std::size_t i = 0; i < w.size(); ++i) {
            auto lm = moments_from_density(Flavor::Flat2D, ex.k_flat, s.disk.sigma[i], s.multipliers.lambda_flat);
            mass += w[i] * s.disk.sigma[i];
            ekin += w[i] * lm.kinetic;
            cas += w[i] * lm.casimir;
        }
        double epot = -g.pot_inner(s.disk, s.disk);
        mc.from_formulas.E0_flat = ((ex.k_flat + 2) * ekin + 2 * epot + mixed) / mass;
        mc.from_formulas.lambda_flat = (ex.k_flat + 1) * ekin / cas;
        mc.E0_flat = rel(mc.from_formulas.E0_flat, s.multipliers.E0_flat);
        mc.lambda_flat = rel(mc.from_formulas.lambda_flat, s.multipliers.lambda_flat);
    }
    return mc;
}

struct SupportReport {
    bool E0_negative = false, E0_flat_negative = false;
    double halo_radius = 0, disk_radius = 0, grid_extent = 0;
    bool radii_inside_grid = false;
    double boundary_potential = 0;  ///< max |U_e| on the outer grid shell
    double monopole_bound = 0;      ///< (M + M̃)/r_boundary
    bool vanishes_outside = false;
};

inline SupportReport support_check(const CoupledSteadyState& s) {
    SupportReport r;
    r.E0_negative = s.constraints.halo_trivial() || s.multipliers.E0 < 0;
    r.E0_flat_negative = s.constraints.disk_trivial() || s.multipliers.E0_flat < 0;
    r.halo_radius = s.halo_radius;
    r.disk_radius = s.disk_radius;
    r.grid_extent = s.halo.grid->r_max();
    r.radii_inside_grid = s.halo_radius < r.grid_extent && s.disk_radius < r.grid_extent;
    const auto& g = *s.halo.grid;
    std::size_t last = g.n_r() - 1;
    for (std::size_t a = 0; a < g.n_mu(); ++a) r.boundary_potential = std::max(r.boundary_potential, std::fabs(s.u_halo[g.index(last, a)]));
    r.boundary_potential = std::max(r.boundary_potential, std::fabs(s.u_disk.back()));
    r.monopole_bound = (s.constraints.M + s.constraints.M_flat) / g.r_max();
    r.vanishes_outside = true;
    for (std::size_t k = 0; k < g.size(); ++k)
        if (s.halo.rho[k] > 0 && g.r(k) > s.halo_radius * (1 + 1e-12)) r.vanishes_outside = false;
    for (std::size_t i = 0; i < s.disk.grid->size(); ++i)
        if (s.disk.sigma[i] > 0 && s.disk.grid->node(i) > s.disk_radius * (1 + 1e-12)) r.vanishes_outside = false;
    return r;
}

/// sup-relative Euler-Lagrange residuals of halo and disk in the stored potential
struct ELResidual {
    double halo = 0, disk = 0;
};

inline ELResidual euler_lagrange_residual(const CoupledSteadyState& s) {
    ELResidual out;
    auto g = s.gravity();
    auto uh = g.effective_potential(s.halo, s.disk);
    auto ch = moment_coefficients(Flavor::Halo3D, s.exponents.k);
    auto cd = moment_coefficients(Flavor::Flat2D, s.exponents.k_flat);
    if (!s.constraints.halo_trivial()) {
        double m = 0, d = 0, lk = std::pow(s.multipliers.lambda, -s.exponents.k);
        for (std::size_t i = 0; i < s.halo.rho.size(); ++i) {
            double a = s.multipliers.E0 - uh.values[i];
            double pred = a > 0 ? ch.density * lk * std::pow(a, ch.n) : 0.0;
            d = std::max(d, std::fabs(pred - s.halo.rho[i]));
            m = std::max(m, s.halo.rho[i]);
        }
        out.halo = d / m;
    }
    if (!s.constraints.disk_trivial()) {
        double m = 0, d = 0, lk = std::pow(s.multipliers.lambda_flat, -s.exponents.k_flat);
        for (std::size_t i = 0; i < s.disk.sigma.size(); ++i) {
            double a = s.multipliers.E0_flat - uh.plane_trace[i];
            double pred = a > 0 ? cd.density * lk * std::pow(a, cd.n) : 0.0;
            d = std::max(d, std::fabs(pred - s.disk.sigma[i]));
            m = std::max(m, s.disk.sigma[i]);
        }
        out.disk = d / m;
    }
    return out;
}

}  // namespace flathalo
