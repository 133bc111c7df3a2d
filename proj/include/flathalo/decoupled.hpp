#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <tuple>
#include <vector>

#include "emden_fowler.hpp"
#include "errors.hpp"
#include "polytropes.hpp"
#include "potentials.hpp"
#include "quadrature.hpp"

namespace flathalo {

/// Spherical polytrope obtained from one Emden-Fowler profile by the
/// phase-space map f ↦ α²β f(αx, βv).
struct SteadyState3D {
    double k = 0, M = 0, N = 0;
    double E0 = 0, lambda = 0, radius = 0;
    double alpha = 1, beta = 1;      ///< map from the base profile (λ=1, y(0)=1)
    double unit_radius = 0, unit_E0 = 0, unit_lambda = 0;
    double mass = 0, casimir_norm = 0, ekin = 0, epot = 0;
    std::shared_ptr<const EmdenFowlerSolution> base;
    double base_E0 = 0;

    double gap(double r) const { return std::max(0.0, base->value(alpha * r)) / (beta * beta); }
    double density(double r) const {
        double a = gap(r);
        return a > 0 ? moment_coefficients(Flavor::Halo3D, k).density * std::pow(lambda, -k) * std::pow(a, k + 1.5)
                     : 0.0;
    }
    double potential(double r) const { return (base_E0 - base->value(alpha * r)) / (beta * beta); }

    HaloDensity on_grid(std::shared_ptr<const MeridionalGrid> grid) const {
        HaloDensity d{grid, std::vector<double>(grid->size())};
        for (std::size_t i = 0; i < grid->n_r(); ++i) {
            double rho = density(grid->radial().node(i));
            for (std::size_t a = 0; a < grid->n_mu(); ++a) d.rho[grid->index(i, a)] = rho;
        }
        return d;
    }
};

namespace detail {

struct BaseProfile {
    std::shared_ptr<const EmdenFowlerSolution> ef;
    double M, N, E0, ekin, epot;
};

inline BaseProfile base_profile_3d(double k) {
    static std::mutex mutex;
    static std::map<double, BaseProfile> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    auto c = moment_coefficients(Flavor::Halo3D, k);
    auto ef = std::make_shared<const EmdenFowlerSolution>(emden_fowler_solve(k + 1.5, 4 * pi * c.density, 1.0));
    BaseProfile b;
    b.ef = ef;
    b.M = c.density * ef->int_n;
    b.N = std::pow(c.casimir * ef->int_n1, k / (k + 1));
    b.E0 = -b.M / ef->radius;
    b.ekin = c.kinetic * ef->int_n1;
    b.epot = 0.5 * (b.E0 * b.M - c.density * ef->int_n1);
    cache.emplace(k, b);
    return b;
}

/// (α, β) of the map that turns constraints (1,1) into (M,N)
inline std::pair<double, double> unit_map_3d(double k, double M, double N) {
    return {std::pow(M, (1 - 2 * k) / 3) * std::pow(N, (2 * k + 2) / 3),
            std::pow(M, (k - 2) / 3) * std::pow(N, -(k + 1) / 3)};
}

}  // namespace detail

inline SteadyState3D solve_decoupled_3d(double k, double M, double N) {
    if (!(k > 0)) throw DomainError("halo index must be positive");
    if (k >= 3.5) throw UnboundedSolutionError("no finite-mass polytrope for k >= 7/2");
    if (!(M > 0 && N > 0)) throw DomainError("solve_decoupled_3d: M and N must be positive");
    auto b = detail::base_profile_3d(k);
    double p = 1 + 1 / k, det = 3 / (k + 1);
    double lm = std::log(1 / b.M), ln = std::log(1 / b.N);
    double A = ((1 - 3 / p) * lm + 2 * ln) / det;
    double B = (-ln - (2 - 3 / p) * lm) / det;
    double au = std::exp(A), bu = std::exp(B);
    auto [ap, bp] = detail::unit_map_3d(k, M, N);

    SteadyState3D s;
    s.k = k;
    s.M = M;
    s.N = N;
    s.base = b.ef;
    s.base_E0 = b.E0;
    s.unit_radius = b.ef->radius / au;
    s.unit_E0 = b.E0 / (bu * bu);
    s.unit_lambda = std::pow(bu, -2) * std::pow(au * au * bu, -1 / k);
    s.alpha = au * ap;
    s.beta = bu * bp;
    s.radius = b.ef->radius / s.alpha;
    s.E0 = b.E0 / (s.beta * s.beta);
    s.lambda = std::pow(s.beta, -2) * std::pow(s.alpha * s.alpha * s.beta, -1 / k);
    s.mass = b.M / (s.alpha * s.beta * s.beta);
    s.casimir_norm = b.N * std::pow(s.alpha, 2 - 3 / p) * std::pow(s.beta, 1 - 3 / p);
    double e = 1 / (s.alpha * std::pow(s.beta, 4));
    s.ekin = b.ekin * e;
    s.epot = b.epot * e;
    return s;
}

struct FlatSolverOptions {
    std::size_t n_radial = 256;
    double damping = 0.5;
    std::size_t max_sweeps = 5000;
    double tolerance = 1e-10;       ///< sup-norm relative change of σ between sweeps
    double regrid_threshold = 0.02; ///< relative drift of the support edge that triggers a new grid
    double domain_factor = 3;       ///< grid extent in units of the support radius
};

/// razor-thin polytrope on its own radial grid
struct SteadyStateFlat {
    double k_flat = 0, M = 0, N = 0;
    std::shared_ptr<const RadialGrid> grid;
    std::vector<double> sigma, potential;
    double E0 = 0, lambda = 0, radius = 0;
    double unit_radius = 0;
    std::size_t sweeps = 0;
    double final_change = 0;

    DiskDensity density() const { return {grid, sigma}; }
};

namespace detail {

/// support edge from linear interpolation of the gap between nodes
inline double edge_radius(const RadialGrid& g, std::span<const double> U, double E0) {
    std::size_t last = 0;
    bool any = false;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (E0 - U[i] > 0) {
            last = i;
            any = true;
        }
    if (!any) return 0;
    if (last + 1 >= g.size()) return g.r_max();
    double a = E0 - U[last], b = E0 - U[last + 1];
    return g.node(last) + (g.node(last + 1) - g.node(last)) * a / (a - b);
}

inline std::vector<double> regrid_values(const RadialGrid& from, std::span<const double> v, const RadialGrid& to) {
    std::vector<double> out(to.size());
    for (std::size_t i = 0; i < to.size(); ++i) out[i] = std::max(0.0, from.interpolate(v, to.node(i)));
    return out;
}

inline std::shared_ptr<const MeridionalGrid> dummy_halo_grid(const RadialGrid& plane) {
    return std::make_shared<const MeridionalGrid>(plane.with_measure(Measure::Spherical), 1);
}

}  // namespace detail

/// Damped fixed-point iteration for a disk of given constraints, starting from σ0.
inline SteadyStateFlat iterate_flat(double k, double M, double N, std::shared_ptr<const RadialGrid> grid,
                                    std::vector<double> sigma, double support, const FlatSolverOptions& opt) {
    auto gravity = std::make_unique<Gravity>(detail::dummy_halo_grid(*grid), grid);
    auto coef = moment_coefficients(Flavor::Flat2D, k);
    double grid_support = support;
    double change = INFINITY;
    for (std::size_t sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        auto U = gravity->disk_on_plane(sigma);
        auto fit = fit_multipliers(Flavor::Flat2D, k, U, grid->weights(), M, N);
        if (fit.support_nodes < 3) throw InfeasibleError("disk", "support collapsed onto fewer than three nodes");
        std::vector<double> next(grid->size());
        double lk = std::pow(fit.lambda, -k), smax = 0, dmax = 0;
        for (std::size_t i = 0; i < next.size(); ++i) {
            double a = fit.E0 - U[i];
            next[i] = a > 0 ? coef.density * lk * std::pow(a, coef.n) : 0.0;
            smax = std::max(smax, next[i]);
            dmax = std::max(dmax, std::fabs(next[i] - sigma[i]));
        }
        change = dmax / smax;
        double edge = detail::edge_radius(*grid, U, fit.E0);
        double drift = std::fabs(edge / grid_support - 1);
        if (change < opt.tolerance && drift < opt.regrid_threshold) {
            SteadyStateFlat s;
            s.k_flat = k;
            s.M = M;
            s.N = N;
            s.grid = grid;
            s.sigma = std::move(next);
            s.potential = gravity->disk_on_plane(s.sigma);
            s.E0 = fit.E0;
            s.lambda = fit.lambda;
            s.radius = edge;
            s.sweeps = sweep;
            s.final_change = change;
            return s;
        }
        if (drift > opt.regrid_threshold || edge >= grid->r_max()) {
            if (edge >= grid->r_max()) edge = 1.5 * grid->r_max();
            auto fresh = std::make_shared<const RadialGrid>(
                RadialGrid::adapted({edge}, opt.domain_factor * edge, opt.n_radial, Measure::Flat));
            sigma = detail::regrid_values(*grid, next, *fresh);
            grid = fresh;
            grid_support = edge;
            gravity = std::make_unique<Gravity>(detail::dummy_halo_grid(*grid), grid);
            continue;
        }
        for (std::size_t i = 0; i < next.size(); ++i) sigma[i] = (1 - opt.damping) * sigma[i] + opt.damping * next[i];
    }
    std::ostringstream diag;
    diag << "sweeps=" << opt.max_sweeps << " last relative change=" << change;
    throw ConvergenceError("flat fixed-point iteration did not converge", diag.str());
}

/// maps a state with constraints (1,1) to (M,N) by f ↦ μ f(μx, νv)
inline SteadyStateFlat rescale_flat(const SteadyStateFlat& unit, double M, double N) {
    double k = unit.k_flat;
    double mu = std::pow(M, -k) * std::pow(N, k + 1);
    double nu = std::pow(M, (k - 1) / 2) * std::pow(N, -(k + 1) / 2);
    // a state at other constraints is first brought back to (1,1)
    if (unit.M != 1 || unit.N != 1) {
        double mu0 = std::pow(unit.M, -k) * std::pow(unit.N, k + 1);
        double nu0 = std::pow(unit.M, (k - 1) / 2) * std::pow(unit.N, -(k + 1) / 2);
        mu /= mu0;
        nu /= nu0;
    }
    SteadyStateFlat s = unit;
    s.M = M;
    s.N = N;
    s.grid = std::make_shared<const RadialGrid>(unit.grid->scaled(1 / mu));
    double sf = mu / (nu * nu), uf = 1 / (nu * nu);
    for (double& x : s.sigma) x *= sf;
    for (double& x : s.potential) x *= uf;
    s.E0 = unit.E0 * uf;
    s.lambda = unit.lambda * std::pow(mu, -1 / k) * uf;
    s.radius = unit.radius / mu;
    return s;
}

namespace detail {

inline std::shared_ptr<const SteadyStateFlat> unit_flat(double k, const FlatSolverOptions& opt) {
    using Key = std::tuple<double, std::size_t, double, double, double, double>;
    static std::mutex mutex;
    static std::map<Key, std::shared_ptr<const SteadyStateFlat>> cache;
    Key key{k, opt.n_radial, opt.damping, opt.tolerance, opt.regrid_threshold, opt.domain_factor};
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    // uniform disk of unit mass and radius 1
    auto grid = std::make_shared<const RadialGrid>(
        RadialGrid::adapted({1.0}, opt.domain_factor, opt.n_radial, Measure::Flat));
    std::vector<double> sigma(grid->size());
    for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = grid->node(i) <= 1.0 ? 1 / pi : 0.0;
    auto s = std::make_shared<SteadyStateFlat>(iterate_flat(k, 1, 1, grid, sigma, 1.0, opt));
    s->unit_radius = s->radius;
    cache.emplace(key, s);
    return s;
}

}  // namespace detail

inline SteadyStateFlat solve_decoupled_flat(double k_flat, double M, double N, const FlatSolverOptions& opt = {}) {
    if (!(k_flat > 0 && k_flat < 2)) throw DomainError("disk index outside the valid range (0, 2)");
    if (!(M > 0 && N > 0)) throw DomainError("solve_decoupled_flat: M and N must be positive");
    return rescale_flat(*detail::unit_flat(k_flat, opt), M, N);
}

/// runs the fixed-point iteration again from a converged state
inline SteadyStateFlat refine_flat(const SteadyStateFlat& s, const FlatSolverOptions& opt = {}) {
    auto out = iterate_flat(s.k_flat, s.M, s.N, s.grid, s.sigma, s.radius, opt);
    out.unit_radius = s.unit_radius;
    return out;
}

}  // namespace flathalo
