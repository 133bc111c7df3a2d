// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flathalo/coupled.hpp"
#include "flathalo/decoupled.hpp"
#include "flathalo/emden_fowler.hpp"
#include "flathalo/energetics.hpp"
#include "flathalo/stability.hpp"

using namespace flathalo;

namespace {

using clock_type = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double rel(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

// slopes of log y against log M and log N by least squares over a full factorial grid
std::array<double, 2> loglog_slopes(const std::vector<std::array<double, 3>>& rows) {
    double n = double(rows.size()), sx = 0, sy = 0, sz = 0;
    for (const auto& r : rows) {
        sx += std::log(r[0]);
        sy += std::log(r[1]);
        sz += std::log(r[2]);
    }
    double mx = sx / n, my = sy / n, mz = sz / n, xx = 0, yy = 0, xy = 0, xz = 0, yz = 0;
    for (const auto& r : rows) {
        double x = std::log(r[0]) - mx, y = std::log(r[1]) - my, z = std::log(r[2]) - mz;
        xx += x * x;
        yy += y * y;
        xy += x * y;
        xz += x * z;
        yz += y * z;
    }
    double det = xx * yy - xy * xy;
    return {(xz * yy - yz * xy) / det, (yz * xx - xz * xy) / det};
}

double reference_seconds = 0;

std::shared_ptr<const CoupledSteadyState> reference_state() {
    static auto s = [] {
        auto t0 = clock_type::now();
        auto out = std::make_shared<const CoupledSteadyState>(solve_coupled({1.0, 0.5}, {1, 1, 0.3, 0.3}, {}));
        reference_seconds = std::chrono::duration<double>(clock_type::now() - t0).count();
        return out;
    }();
    return s;
}

Outcome lane_emden() {
    auto t0 = clock_type::now();
    auto ef = emden_fowler_solve(1, 1, 1);
    double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
    double err = 0;
    for (std::size_t i = 0; i < ef.r.size(); ++i)
        if (ef.r[i] > 0) err = std::max(err, std::fabs(ef.y[i] - std::sin(ef.r[i]) / ef.r[i]));
    for (int i = 1; i < 10000; ++i) {
        double r = pi * i / 10000;
        err = std::max(err, std::fabs(ef.value(r) - std::sin(r) / r));
    }
    double zero = std::fabs(ef.radius - pi);
    return {err < 1e-8 && zero < 1e-8 && secs < 1,
            fmt("max|y - sin r/r| = %.2e, |R - pi| = %.2e, %.3f s", err, zero, secs)};
}

// radius of the spherical polytrope with mass M and Casimir norm N, by shooting on the raw
// Emden-Fowler equation in the unknowns (log lambda, log y0)
double spherical_radius(double k, double M, double N) {
    double n = k + 1.5;
    double c_rho = std::pow(2, 2.5) * pi * std::exp(std::lgamma(1.5) + std::lgamma(k + 1) - std::lgamma(k + 2.5));
    double c_cas = std::pow(2, 2.5) * pi * std::exp(std::lgamma(1.5) + std::lgamma(k + 2) - std::lgamma(k + 3.5));
    double target[2] = {std::log(M), std::log(std::pow(N, (k + 1) / k))};
    auto residual = [&](double ll, double ly, double& radius) {
        double lambda = std::exp(ll), y0 = std::exp(ly);
        auto ef = emden_fowler_solve(n, 4 * pi * c_rho * std::pow(lambda, -k), y0);
        radius = ef.radius;
        double mass = c_rho * std::pow(lambda, -k) * ef.int_n;
        double cas = c_cas * std::pow(lambda, -k - 1) * ef.int_n1;
        return std::array<double, 2>{std::log(mass) - target[0], std::log(cas) - target[1]};
    };
    double x[2] = {0, 0}, radius = 0;
    for (int it = 0; it < 50; ++it) {
        auto f = residual(x[0], x[1], radius);
        if (std::hypot(f[0], f[1]) < 1e-13) break;
        double h = 1e-6, r2;
        auto fa = residual(x[0] + h, x[1], r2), fb = residual(x[0], x[1] + h, r2);
        double J[2][2] = {{(fa[0] - f[0]) / h, (fb[0] - f[0]) / h}, {(fa[1] - f[1]) / h, (fb[1] - f[1]) / h}};
        double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
        x[0] -= (J[1][1] * f[0] - J[0][1] * f[1]) / det;
        x[1] -= (J[0][0] * f[1] - J[1][0] * f[0]) / det;
    }
    residual(x[0], x[1], radius);
    return radius;
}

Outcome radius_law_3d() {
    auto t0 = clock_type::now();
    std::vector<std::array<double, 3>> rows;
    for (double M : {0.5, 1.0, 2.0})
        for (double N : {0.5, 1.0, 2.0}) rows.push_back({M, N, spherical_radius(1, M, N)});
    auto s = loglog_slopes(rows);
    double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
    double e1 = rel(s[0], 1.0 / 3), e2 = rel(s[1], -4.0 / 3);
    return {e1 < 0.01 && e2 < 0.01 && secs < 60,
            fmt("slopes %.6f (1/3), %.6f (-4/3), rel err %.1e %.1e, %.1f s", s[0], s[1], e1, e2, secs)};
}

Outcome radius_law_flat() {
    auto t0 = clock_type::now();
    FlatSolverOptions opt;
    std::vector<std::array<double, 3>> rows;
    for (double M : {0.5, 1.0, 2.0})
        for (double N : {0.5, 1.0, 2.0}) {
            // every state is iterated from the same unit disk, with no rescaling
            auto grid = std::make_shared<const RadialGrid>(RadialGrid::adapted({1.0}, 3.0, opt.n_radial, Measure::Flat));
            std::vector<double> sigma(grid->size());
            for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = grid->node(i) <= 1 ? M / pi : 0;
            rows.push_back({M, N, iterate_flat(0.5, M, N, grid, sigma, 1.0, opt).radius});
        }
    auto s = loglog_slopes(rows);
    double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
    double e1 = rel(s[0], 0.5), e2 = rel(s[1], -1.5);
    return {e1 < 0.02 && e2 < 0.02 && secs < 300,
            fmt("slopes %.6f (1/2), %.6f (-3/2), rel err %.1e %.1e, %.1f s", s[0], s[1], e1, e2, secs)};
}

Outcome virial() {
    double worst = 0;
    auto ratio = [](const EnergyReport& r) {
        double epot = r.epot_halo + r.epot_disk;
        return std::fabs(2 * r.ekin() + epot) / std::fabs(epot);
    };
    for (double k : {0.5, 1.0, 2.0}) worst = std::max(worst, ratio(energy_report(solve_decoupled_3d(k, 1, 1))));
    for (double k : {0.5, 1.0, 1.5}) worst = std::max(worst, ratio(energy_report(solve_decoupled_flat(k, 1, 1))));
    return {worst < 1e-3, fmt("max |2Ekin+Epot|/|Epot| = %.2e over 3D k in {0.5,1,2} and flat k in {0.5,1,1.5}", worst)};
}

Outcome mixed_fubini() {
    double worst = 0;
    for (double rb : {1.0, 0.6}) {
        auto g = std::make_shared<const MeridionalGrid>(RadialGrid::uniform(1.0, 200, Measure::Spherical), 16);
        auto plane = plane_grid_of(*g);
        Gravity grav(g, plane);
        HaloDensity ball{g, std::vector<double>(g->size(), 0.0)};
        for (std::size_t i = 0; i < g->size(); ++i) ball.rho[i] = g->r(i) <= rb + 1e-12 ? 1.0 : 0.0;
        DiskDensity disk{plane, std::vector<double>(plane->size(), 0.3)};
        worst = std::max(worst, grav.mixed_energy_both_ways(ball, disk).discrepancy());
    }
    double coupled = energy_report(*reference_state()).mixed_discrepancy();
    return {worst < 1e-4 && coupled < 1e-4,
            fmt("uniform bodies %.2e, coupled state %.2e", worst, coupled)};
}

Outcome cauchy_schwarz() {
    auto radial = RadialGrid::adapted({0.5, 1.3}, 4, 160, Measure::Spherical);
    auto g = std::make_shared<const MeridionalGrid>(radial, 12);
    auto plane = plane_grid_of(*g);
    Gravity grav(g, plane);
    std::mt19937_64 rng(20240);
    std::uniform_real_distribution<double> u(0, 1);
    double worst = INFINITY;
    for (int t = 0; t < 100; ++t) {
        double a = 0.3 + u(rng), p = 0.5 + 2 * u(rng), flat = 3 * u(rng);
        double b = 0.3 + u(rng), q = 0.5 + 2 * u(rng), shift = 0.6 * u(rng);
        HaloDensity h{g, std::vector<double>(g->size())};
        DiskDensity d{plane, std::vector<double>(plane->size())};
        for (std::size_t k = 0; k < g->size(); ++k) {
            double r = g->r(k), mu = g->mu(k % g->n_mu());
            h.rho[k] = std::pow(std::max(0.0, 1 - r * r / (a * a)), p) * (1 + flat * (1 - mu * mu));
        }
        for (std::size_t j = 0; j < plane->size(); ++j) {
            double r = plane->node(j) - shift;
            d.sigma[j] = std::pow(std::max(0.0, 1 - r * r / (b * b)), q);
        }
        double slack = std::sqrt(grav.pot_inner(h, h) * grav.pot_inner(d, d)) - std::fabs(grav.pot_inner(h, d));
        worst = std::min(worst, slack);
    }
    return {worst >= -1e-10, fmt("min slack %.3e over 100 pairs", worst)};
}

Outcome euler_lagrange() {
    auto s = reference_state();
    double secs = reference_seconds;
    auto el = euler_lagrange_residual(*s);
    auto e = energy_report(*s);
    double k = s->exponents.k, kf = s->exponents.k_flat;
    double cas_h = std::pow(e.casimir_halo, (k + 1) / k), cas_d = std::pow(e.casimir_disk, (kf + 1) / kf);
    double E0 = ((2 * k + 5) / 3 * e.ekin_halo + 2 * e.epot_halo + e.mixed) / e.mass_halo;
    double lam = 2 * (k + 1) * e.ekin_halo / (3 * cas_h);
    double E0f = ((kf + 2) * e.ekin_disk + 2 * e.epot_disk + e.mixed) / e.mass_disk;
    double lamf = (kf + 1) * e.ekin_disk / cas_d;
    const auto& m = s->multipliers;
    double dev = std::max({rel(E0, m.E0), rel(lam, m.lambda), rel(E0f, m.E0_flat), rel(lamf, m.lambda_flat)});
    bool signs = m.E0 < 0 && m.E0_flat < 0;
    return {el.halo < 1e-4 && el.disk < 1e-4 && dev < 0.01 && signs && secs < 600,
            fmt("EL halo %.2e disk %.2e, multiplier formulas %.2e, E0 %.4f E0~ %.4f, %.1f s", el.halo, el.disk, dev, m.E0,
                m.E0_flat, secs)};
}

Outcome decoupling_limit() {
    auto s = solve_coupled({1.0, 0.5}, {1, 1, 0.3e-6, 0.3e-6}, {});
    auto ref = solve_decoupled_3d(1, 1, 1);
    double dmax = 0, peak = 0;
    for (std::size_t i = 0; i < s.halo.rho.size(); ++i) {
        const auto& g = *s.halo.grid;
        double exact = ref.density(g.r(i));
        dmax = std::max(dmax, std::fabs(exact - s.halo.rho[i]));
        peak = std::max(peak, exact);
    }
    return {dmax / peak < 5e-3, fmt("sup-relative deviation %.2e", dmax / peak)};
}

// f ↦ a f(bx, cv) on the halo and d f̃(bx̃, eṽ) on the disk, at density level
EnergyInputs scale(const EnergyInputs& in, double a, double b, double c, double d, double e) {
    EnergyInputs out = in;
    auto hg = std::make_shared<const MeridionalGrid>(in.halo->grid->radial().scaled(1 / b), in.halo->grid->n_mu());
    out.halo = HaloDensity{hg, in.halo->rho};
    for (double& x : out.halo->rho) x *= a / (c * c * c);
    out.lambda = in.lambda / (c * c) * std::pow(a, -1 / in.k);
    auto dg = std::make_shared<const RadialGrid>(in.disk->grid->scaled(1 / b));
    out.disk = DiskDensity{dg, in.disk->sigma};
    for (double& x : out.disk->sigma) x *= d / (e * e);
    out.lambda_flat = in.lambda_flat / (e * e) * std::pow(d, -1 / in.k_flat);
    return out;
}

Outcome scaling() {
    auto in = energy_inputs(*reference_state());
    auto base = energy_report(in);
    double c = 2;
    double inv = energy_report(scale(in, std::pow(c, -7), std::pow(c, -4), c, std::pow(c, -4), c)).total;
    double e1 = rel(inv, base.total);
    double cas = energy_report(scale(in, c * c * c, 1, c, 1, 1)).total;
    double pred = base.ekin_halo / (c * c) + base.ekin_disk + base.epot_halo + base.epot_disk + base.mixed;
    double e2 = rel(cas, pred);
    return {e1 < 1e-4 && e2 < 1e-4, fmt("invariant family %.2e, casimir-only family %.2e at c=2", e1, e2)};
}

Outcome subadditivity() {
    Exponents ex{1.0, 0.5};
    auto equal = subadditivity_probe(ex, {0.5, 0.5, 0.15, 0.15}, {0.5, 0.5, 0.15, 0.15});
    auto halo = subadditivity_probe(ex, {0.5, 0.5, 0.3, 0.3}, {0.5, 0.5, 0, 0});
    bool ok = equal.margin > 3 * equal.tolerance && halo.margin > 3 * halo.tolerance;
    return {ok, fmt("equal split margin %.4f (tol %.1e), pure-halo addition margin %.4f (tol %.1e)", equal.margin,
                    equal.tolerance, halo.margin, halo.tolerance)};
}

Outcome stability() {
    auto s = reference_state();
    auto battery = perturbation_battery(*s, 50, 2024, 2000);
    double worst_res = 0, worst_d = INFINITY;
    for (const auto& p : battery) {
        auto c = expansion_check(perturb(s, p));
        worst_res = std::max(worst_res, std::fabs(c.residual.value) / std::max(c.residual.error, 1e-300));
        worst_d = std::min(worst_d, c.d.value / c.d.error);
    }
    Perturbation boost;
    boost.kind = PerturbationKind::InPlaneBoost;
    boost.magnitude = 0.5;
    boost.move_disk = false;
    boost.pairs = 20000;
    auto d = distance_d(perturb(s, boost));
    double expect = 0.5 * 0.5 * s->constraints.M / 2;
    double boost_sig = std::fabs(d.value - expect) / d.error;
    return {worst_res <= 3 && worst_d > 3 && boost_sig <= 3,
            fmt("max |residual|/sigma %.2f, min d/sigma %.1f, boost d %.5f vs %.5f (%.2f sigma)", worst_res, worst_d,
                d.value, expect, boost_sig)};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    std::vector<Criterion> criteria{
        {"Lane-Emden oracle", lane_emden},
        {"3D radius law", radius_law_3d},
        {"flat radius law", radius_law_flat},
        {"virial identity", virial},
        {"mixed-energy Fubini identity", mixed_fubini},
        {"Cauchy-Schwarz", cauchy_schwarz},
        {"coupled Euler-Lagrange residual", euler_lagrange},
        {"decoupling limit", decoupling_limit},
        {"scaling identities", scaling},
        {"sub-additivity", subadditivity},
        {"stability expansion", stability},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
