#include <gtest/gtest.h>

#include <cmath>

#include "flathalo/energetics.hpp"

using namespace flathalo;

namespace {

const CoupledSteadyState& reference() {
    static const CoupledSteadyState s = solve_coupled({1.0, 0.5}, {1, 1, 0.3, 0.3}, {});
    return s;
}

}  // namespace

TEST(EnergyReport, UniformBallPotentialEnergy) {
    double M = 1.7, R = 0.8;
    auto g = std::make_shared<const MeridionalGrid>(RadialGrid::uniform(R, 256, Measure::Spherical), 8);
    EnergyInputs in;
    in.halo = HaloDensity{g, std::vector<double>(g->size(), 3 * M / (4 * pi * R * R * R))};
    auto r = energy_report(in);
    EXPECT_NEAR(r.epot_halo / (-0.6 * M * M / R), 1, 5e-3);
    EXPECT_EQ(r.ekin_halo, 0);
    EXPECT_EQ(r.mixed, 0);
    EXPECT_EQ(r.epot_disk, 0);
    EXPECT_NEAR(r.total, r.epot_halo, 1e-15);
}

TEST(EnergyReport, DiskOnlyInputs) {
    auto flat = solve_decoupled_flat(0.5, 1, 1);
    auto r = energy_report(flat);
    EXPECT_EQ(r.mass_halo, 0);
    EXPECT_EQ(r.ekin_halo, 0);
    EXPECT_EQ(r.mixed, 0);
    EXPECT_GT(r.ekin_disk, 0);
    EXPECT_LT(r.epot_disk, 0);
    EXPECT_NEAR(r.mass_disk, 1, 1e-10);
    EXPECT_NEAR(r.casimir_disk, 1, 1e-8);
}

TEST(EnergyReport, SphericalStateAgainstClosedForm) {
    auto s = solve_decoupled_3d(1, 1, 1);
    auto r = energy_report(s);
    EXPECT_LT(r.total, 0);
    EXPECT_NEAR(r.ekin_halo / s.ekin, 1, 1e-4);
    EXPECT_NEAR(r.epot_halo / s.epot, 1, 1e-4);
    EXPECT_NEAR(2 * s.ekin + s.epot, 0, 1e-8 * std::fabs(s.epot));
}

TEST(EnergyReport, CoupledStateConsistency) {
    auto r = energy_report(reference());
    EXPECT_LT(r.kinetic_discrepancy(), 1e-6);
    EXPECT_LT(r.mixed_discrepancy(), 1e-4);
    EXPECT_LT(r.mixed, 0);
    EXPECT_LT(r.total, 0);
    EXPECT_NEAR(r.total, r.ekin_halo + r.ekin_disk + r.epot_halo + r.epot_disk + r.mixed, 1e-12 * std::fabs(r.total));
    EXPECT_NEAR(r.mixed, 0.5 * (r.mixed_a + r.mixed_b), 1e-14);
}

TEST(EnergyReport, LowerBoundConstantFinite) {
    auto r = energy_report(reference());
    double C = r.lower_bound_constant();
    EXPECT_TRUE(std::isfinite(C));
    EXPECT_GT(C, 0);
    EnergyInputs no_kinetic;
    no_kinetic.disk = reference().disk;
    EXPECT_TRUE(std::isinf(energy_report(no_kinetic).lower_bound_constant()));
}

TEST(Scaling, IdentityAtUnitFactor) {
    for (auto fam : {ScalingFamily::Invariant, ScalingFamily::CasimirOnly}) {
        auto p = scaling_probe(reference(), 1, fam);
        EXPECT_NEAR(p.H_recomputed, p.H_original, 1e-14 * std::fabs(p.H_original));
    }
}

TEST(Scaling, FamiliesAtFactorTwo) {
    auto inv = scaling_probe(reference(), 2, ScalingFamily::Invariant);
    EXPECT_LT(inv.relative_error(), 1e-4);
    EXPECT_NEAR(inv.H_recomputed, inv.H_original, 1e-4 * std::fabs(inv.H_original));
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(inv.norms_recomputed[i] / inv.norms_predicted[i], 1, 1e-10) << i;
    // mass ~ a (bc)^{-3} = c^2 and Casimir norm ~ a (bc)^{-3/2} = c^{-5/2} at k = 1
    EXPECT_NEAR(inv.norms_recomputed[0], 4, 4e-6);
    EXPECT_NEAR(inv.norms_recomputed[1], std::pow(2, -2.5), 1e-6);

    auto cas = scaling_probe(reference(), 2, ScalingFamily::CasimirOnly);
    EXPECT_LT(cas.relative_error(), 1e-4);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(cas.norms_recomputed[i] / cas.norms_predicted[i], 1, 1e-10) << i;
    EXPECT_NEAR(cas.norms_recomputed[0], 1, 1e-6);
    EXPECT_NEAR(cas.norms_recomputed[1], std::pow(2, 1.5), 1e-6);
    EXPECT_LT(cas.H_recomputed, cas.H_original);
}

TEST(Scaling, RejectsNonpositiveFactor) {
    EXPECT_THROW(scaling_probe(reference(), 0, ScalingFamily::Invariant), DomainError);
}

TEST(Lemma, DensityNormAndBoundScaleAlike) {
    auto lc = lemma_covariance(energy_inputs(reference()));
    EXPECT_NEAR(lc.slope_density, -3, 3e-2);
    EXPECT_NEAR(lc.slope_bound, -3, 3e-2);
    EnergyInputs no_kinetic;
    no_kinetic.disk = reference().disk;
    EXPECT_THROW(lemma_covariance(no_kinetic), DomainError);
}

TEST(Subadditivity, EqualSplit) {
    auto p = subadditivity_probe({1.0, 0.5}, {0.5, 0.5, 0.15, 0.15}, {0.5, 0.5, 0.15, 0.15});
    EXPECT_GT(p.margin, 3 * p.tolerance);
    EXPECT_LT(p.h12, p.h1 + p.h2);
}

TEST(Subadditivity, PureHaloAddition) {
    auto p = subadditivity_probe({1.0, 0.5}, {0.5, 0.5, 0.3, 0.3}, {0.5, 0.5, 0, 0});
    EXPECT_GT(p.margin, 3 * p.tolerance);
}

TEST(Subadditivity, EmptySecondPart) {
    auto p = subadditivity_probe({1.0, 0.5}, {1, 1, 0.3, 0.3}, {0, 0, 0, 0});
    EXPECT_EQ(p.h2, 0);
    EXPECT_EQ(p.h12, p.h1);
    EXPECT_EQ(p.margin, 0);
}
