#include <gtest/gtest.h>

#include <cmath>

#include "flathalo/coupled.hpp"
#include "flathalo/energetics.hpp"
#include "flathalo/parallel.hpp"

using namespace flathalo;

namespace {

const CoupledSteadyState& reference() {
    static const CoupledSteadyState s = solve_coupled({1.0, 0.5}, {1, 1, 0.3, 0.3}, {});
    return s;
}

double sup_relative(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, std::fabs(a[i] - b[i]));
        m = std::max(m, std::fabs(b[i]));
    }
    return d / m;
}

}  // namespace

TEST(CoupledSolver, EulerLagrangeResidual) {
    auto el = euler_lagrange_residual(reference());
    EXPECT_LT(el.halo, 1e-4);
    EXPECT_LT(el.disk, 1e-4);
}

TEST(CoupledSolver, MultiplierFormulasReproduceSolver) {
    auto mc = multiplier_consistency(reference());
    EXPECT_LT(mc.E0, 1e-2);
    EXPECT_LT(mc.E0_flat, 1e-2);
    EXPECT_LT(mc.lambda, 1e-2);
    EXPECT_LT(mc.lambda_flat, 1e-2);
}

TEST(CoupledSolver, CutoffEnergiesNegativeAndSupportsCompact) {
    const auto& s = reference();
    EXPECT_LT(s.multipliers.E0, 0);
    EXPECT_LT(s.multipliers.E0_flat, 0);
    EXPECT_GT(s.multipliers.lambda, 0);
    EXPECT_GT(s.multipliers.lambda_flat, 0);
    auto sup = support_check(s);
    EXPECT_TRUE(sup.E0_negative);
    EXPECT_TRUE(sup.E0_flat_negative);
    EXPECT_TRUE(sup.radii_inside_grid);
    EXPECT_TRUE(sup.vanishes_outside);
    EXPECT_LE(sup.boundary_potential, 1.05 * sup.monopole_bound);
}

TEST(CoupledSolver, ConstraintsSaturated) {
    const auto& s = reference();
    auto e = energy_report(s);
    EXPECT_NEAR(e.mass_halo, 1, 1e-6);
    EXPECT_NEAR(e.casimir_halo, 1, 1e-6);
    EXPECT_NEAR(e.mass_disk, 0.3, 0.3e-6);
    EXPECT_NEAR(e.casimir_disk, 0.3, 0.3e-6);
}

TEST(CoupledSolver, FarFieldIsMonopole) {
    const auto& s = reference();
    auto g = s.gravity();
    double r = 10 * std::max(s.halo_radius, s.disk_radius);
    double Mt = s.constraints.M + s.constraints.M_flat;
    for (auto [R, z] : {std::pair{r, 0.0}, std::pair{0.0, r}, std::pair{r / std::sqrt(2.0), r / std::sqrt(2.0)}}) {
        double u = g.halo_potential_at(s.halo, R, z) + g.disk_potential_at(s.disk, R, z);
        EXPECT_NEAR(u / (-Mt / r), 1, 1e-2) << R << "," << z;
    }
}

TEST(CoupledSolver, ReflectionSymmetricPotential) {
    const auto& s = reference();
    auto g = s.gravity();
    for (double z : {0.01, 0.05, 0.2}) {
        EXPECT_EQ(g.halo_potential_at(s.halo, 0.07, z), g.halo_potential_at(s.halo, 0.07, -z));
        EXPECT_EQ(g.disk_potential_at(s.disk, 0.07, z), g.disk_potential_at(s.disk, 0.07, -z));
    }
}

TEST(CoupledSolver, DiskFlattensTheHalo) {
    // at fixed r the halo is denser near the plane than along the axis
    const auto& s = reference();
    const auto& g = *s.halo.grid;
    std::size_t i = g.n_r() / 8;
    while (g.radial().node(i) < 0.5 * s.halo_radius) ++i;
    std::size_t axis = 0, plane = 0;
    for (std::size_t a = 1; a < g.n_mu(); ++a) {
        if (g.mu(a) > g.mu(axis)) axis = a;
        if (g.mu(a) < g.mu(plane)) plane = a;
    }
    EXPECT_GT(s.halo.rho[g.index(i, plane)], s.halo.rho[g.index(i, axis)]);
}

TEST(CoupledSolver, DecouplingLimit) {
    auto s = solve_coupled({1.0, 0.5}, {1, 1, 0.3e-6, 0.3e-6}, {});
    auto ref = solve_decoupled_3d(1, 1, 1);
    EXPECT_LT(sup_relative(s.halo.rho, ref.on_grid(s.halo.grid).rho), 5e-3);
    EXPECT_NEAR(s.multipliers.E0 / ref.E0, 1, 5e-3);
}

TEST(CoupledSolver, TrivialPairs) {
    auto halo_only = solve_coupled({1.0, 0.5}, {1, 1, 0, 0}, {});
    for (double x : halo_only.disk.sigma) EXPECT_EQ(x, 0);
    auto h3 = solve_decoupled_3d(1, 1, 1);
    EXPECT_LT(sup_relative(halo_only.halo.rho, h3.on_grid(halo_only.halo.grid).rho), 5e-3);

    auto disk_only = solve_coupled({1.0, 0.5}, {0, 0, 1, 1}, {});
    for (double x : disk_only.halo.rho) EXPECT_EQ(x, 0);
    auto flat = solve_decoupled_flat(0.5, 1, 1);
    EXPECT_NEAR(disk_only.multipliers.E0_flat / flat.E0, 1, 5e-3);
    EXPECT_NEAR(disk_only.disk_radius / flat.radius, 1, 5e-3);
}

TEST(CoupledSolver, GridRefinement) {
    const auto& s = reference();
    SolverConfig fine;
    fine.grid.n_radial = 384;
    fine.grid.n_mu = 48;
    auto f = solve_coupled(s.exponents, s.constraints, fine);
    EXPECT_NEAR(f.multipliers.E0 / s.multipliers.E0, 1, 2e-3);
    EXPECT_NEAR(f.multipliers.E0_flat / s.multipliers.E0_flat, 1, 2e-3);
    EXPECT_NEAR(f.multipliers.lambda / s.multipliers.lambda, 1, 2e-3);
    EXPECT_NEAR(f.multipliers.lambda_flat / s.multipliers.lambda_flat, 1, 2e-3);
    EXPECT_NEAR(f.halo_radius / s.halo_radius, 1, 2e-3);
    EXPECT_NEAR(f.disk_radius / s.disk_radius, 1, 2e-3);
}

TEST(CoupledSolver, DeterministicAcrossRunsAndThreads) {
    const auto& s = reference();
    set_num_threads(3);
    auto again = solve_coupled(s.exponents, s.constraints, s.config);
    set_num_threads(1);
    EXPECT_EQ(again.halo.rho, s.halo.rho);
    EXPECT_EQ(again.disk.sigma, s.disk.sigma);
    EXPECT_EQ(again.multipliers.E0, s.multipliers.E0);
    EXPECT_EQ(again.multipliers.lambda_flat, s.multipliers.lambda_flat);
    EXPECT_EQ(again.sweeps, s.sweeps);
}

TEST(CoupledSolver, InputValidation) {
    EXPECT_THROW(solve_coupled({4.0, 0.5}, {1, 1, 0.3, 0.3}, {}), DomainError);
    EXPECT_THROW(solve_coupled({1.0, 2.5}, {1, 1, 0.3, 0.3}, {}), DomainError);
    EXPECT_THROW(solve_coupled({1.0, 0.5}, {-1, 1, 0.3, 0.3}, {}), DomainError);
    EXPECT_THROW(solve_coupled({1.0, 0.5}, {1, 0, 0.3, 0.3}, {}), DomainError);
    SolverConfig bad;
    bad.damping = 0;
    EXPECT_THROW(solve_coupled({1.0, 0.5}, {1, 1, 0.3, 0.3}, bad), DomainError);
    try {
        solve_coupled({4.0, 0.5}, {1, 1, 0.3, 0.3}, {});
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("(0, 7/2)"), std::string::npos);
    }
}

TEST(CoupledSolver, SweepBudgetExhaustionReportsDiagnostics) {
    SolverConfig cfg;
    cfg.max_outer_sweeps = 2;
    try {
        solve_coupled({1.0, 0.5}, {1, 1, 0.3, 0.3}, cfg);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_NE(e.diagnostics().find("sweeps=2"), std::string::npos);
    }
}
