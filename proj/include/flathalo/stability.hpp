#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "coupled.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "polytropes.hpp"
#include "potentials.hpp"

namespace flathalo {

enum class PerturbationKind { PlaneTranslation, InPlaneBoost, VelocityShear };

inline const char* perturbation_name(PerturbationKind k) {
    switch (k) {
        case PerturbationKind::PlaneTranslation: return "plane-translation";
        case PerturbationKind::InPlaneBoost: return "in-plane-boost";
        case PerturbationKind::VelocityShear: return "velocity-shear";
    }
    return "?";
}

/// Volume-preserving phase-space map applied to the halo and/or the disk.
/// Translations and boosts act along the in-plane direction at `angle`;
/// shears are v ↦ v + ε∇χ(x) with χ = L²(1 - |x|²/L²)³₊.
struct Perturbation {
    PerturbationKind kind = PerturbationKind::PlaneTranslation;
    double magnitude = 0;
    double angle = 0;
    bool move_halo = true, move_disk = true;
    double shear_scale = 0;  ///< L; 0 selects the largest support radius
    std::uint64_t seed = 1;
    std::size_t pairs = 2000;  ///< antithetic sample pairs per component
};

using Vec3 = std::array<double, 3>;

/// the map itself, split into its halo and disk parts
struct PhaseMap {
    Vec3 halo_shift{}, disk_shift{}, halo_boost{}, disk_boost{};
    double halo_shear = 0, disk_shear = 0, shear_scale = 1;

    static Vec3 chi_gradient(const Vec3& x, double L) {
        double t = 1 - (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (L * L);
        if (t <= 0) return {0, 0, 0};
        double f = -6 * t * t;
        return {f * x[0], f * x[1], f * x[2]};
    }

    void apply(bool halo, const Vec3& x, const Vec3& v, Vec3& xo, Vec3& vo) const {
        const Vec3& s = halo ? halo_shift : disk_shift;
        const Vec3& u = halo ? halo_boost : disk_boost;
        double eps = halo ? halo_shear : disk_shear;
        Vec3 g = eps != 0 ? chi_gradient(x, shear_scale) : Vec3{0, 0, 0};
        if (!halo) g[2] = 0;
        for (int i = 0; i < 3; ++i) {
            xo[i] = x[i] + s[i];
            vo[i] = v[i] + u[i] + eps * g[i];
        }
    }

    void invert(bool halo, const Vec3& x, const Vec3& v, Vec3& xo, Vec3& vo) const {
        const Vec3& s = halo ? halo_shift : disk_shift;
        const Vec3& u = halo ? halo_boost : disk_boost;
        double eps = halo ? halo_shear : disk_shear;
        for (int i = 0; i < 3; ++i) xo[i] = x[i] - s[i];
        Vec3 g = eps != 0 ? chi_gradient(xo, shear_scale) : Vec3{0, 0, 0};
        if (!halo) g[2] = 0;
        for (int i = 0; i < 3; ++i) vo[i] = v[i] - u[i] - eps * g[i];
    }
};

inline PhaseMap make_map(const Perturbation& p, const CoupledSteadyState& base) {
    PhaseMap m;
    Vec3 e{std::cos(p.angle), std::sin(p.angle), 0};
    Vec3 s{p.magnitude * e[0], p.magnitude * e[1], 0};
    m.shear_scale = p.shear_scale > 0 ? p.shear_scale : std::max(base.halo_radius, base.disk_radius);
    switch (p.kind) {
        case PerturbationKind::PlaneTranslation:
            if (p.move_halo) m.halo_shift = s;
            if (p.move_disk) m.disk_shift = s;
            break;
        case PerturbationKind::InPlaneBoost:
            if (p.move_halo) m.halo_boost = s;
            if (p.move_disk) m.disk_boost = s;
            break;
        case PerturbationKind::VelocityShear:
            if (p.move_halo) m.halo_shear = p.magnitude;
            if (p.move_disk) m.disk_shear = p.magnitude;
            break;
    }
    return m;
}

struct Estimate {
    double value = 0, error = 0;  ///< mean and one Monte Carlo standard error
};

/// per-sample contributions to ΔH, d and the quadratic pot-norm terms
struct SampleTerms {
    double dH = 0, d = 0, quad = 0;
    double residual = 0;  ///< dH - d + quad with the common terms cancelled
};

struct PerturbedState {
    std::shared_ptr<const CoupledSteadyState> base;
    Perturbation perturbation;
    PhaseMap map;
    std::vector<SampleTerms> halo_pairs, disk_pairs;  ///< pair averages, per unit component mass
    double halo_mass = 0, disk_mass = 0;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t i, std::uint64_t stream) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(i), std::uint32_t(i >> 32),
                      std::uint32_t(stream)};
    std::array<std::uint64_t, 1> out;
    seq.generate(reinterpret_cast<std::uint32_t*>(out.data()), reinterpret_cast<std::uint32_t*>(out.data() + 1));
    return out[0];
}

inline double sample_beta(std::mt19937_64& rng, double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    double x = ga(rng), y = gb(rng);
    return x / (x + y);
}

/// index drawn from the cumulative table with a stratified uniform
inline std::size_t pick(const std::vector<double>& cdf, double u) {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u * cdf.back());
    return std::min(std::size_t(it - cdf.begin()), cdf.size() - 1);
}

struct PotentialProbe {
    const Gravity& g;
    const HaloMultipole::Expansion& halo_expansion;
    const DiskDensity& disk;
    bool with_disk;
    double r_max;

    double halo(const Vec3& p) const {
        return g.multipole().potential_at(halo_expansion, std::hypot(p[0], p[1]), std::fabs(p[2]));
    }
    double flat(const Vec3& p) const {
        if (!with_disk) return 0;
        return g.disk_potential_at(disk, std::hypot(p[0], p[1]), p[2]);
    }
    void check(const Vec3& p) const {
        if (std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) > r_max)
            throw SupportEscapeError("perturbed support leaves the evaluation domain");
    }
};

inline Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline double half_sq(const Vec3& v) { return 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

inline bool is_zero(const Vec3& v) { return v[0] == 0 && v[1] == 0 && v[2] == 0; }

}  // namespace detail

/// Represents f = f₀∘Φ⁻¹ through samples of f₀ pushed forward by Φ.
inline PerturbedState perturb(std::shared_ptr<const CoupledSteadyState> base, const Perturbation& p) {
    if (p.pairs < 2) throw DomainError("perturb: need at least two sample pairs");
    PerturbedState ps;
    ps.base = base;
    ps.perturbation = p;
    ps.map = make_map(p, *base);
    const auto& s = *base;
    bool with_halo = !s.constraints.halo_trivial(), with_disk = !s.constraints.disk_trivial();
    auto g = s.gravity();
    auto expansion = g.multipole().expand(s.halo.rho);
    auto u_disk_on_halo = with_disk ? g.disk_on_halo(s.disk.sigma) : std::vector<double>(s.halo.rho.size(), 0.0);
    auto u_disk_on_plane = with_disk ? g.disk_on_plane(s.disk.sigma) : std::vector<double>(s.disk.sigma.size(), 0.0);
    detail::PotentialProbe probe{g, expansion, s.disk, with_disk, s.halo.grid->r_max()};
    const PhaseMap& m = ps.map;
    const Vec3 a = m.disk_shift, b = m.halo_shift;

    if (with_halo) {
        const auto& hg = *s.halo.grid;
        ps.halo_mass = s.constraints.M;
        std::vector<double> cdf(hg.size());
        double acc = 0;
        for (std::size_t k = 0; k < hg.size(); ++k) cdf[k] = acc += hg.weight(k) * s.halo.rho[k];
        ps.halo_pairs.resize(p.pairs);
        bool cross = !detail::is_zero(a) && with_disk;
        parallel_for(p.pairs, [&](std::size_t i) {
            std::mt19937_64 rng(detail::mix_seed(p.seed, i, 1));
            std::uniform_real_distribution<double> uni(0, 1);
            std::size_t k = detail::pick(cdf, (i + uni(rng)) / p.pairs);
            double gap = moments_from_density(Flavor::Halo3D, s.exponents.k, s.halo.rho[k], s.multipliers.lambda).gap;
            double phi = 2 * pi * uni(rng), zs = uni(rng) < 0.5 ? -1.0 : 1.0;
            double speed = std::sqrt(2 * gap * detail::sample_beta(rng, 1.5, s.exponents.k + 1));
            double cz = 2 * uni(rng) - 1, az = 2 * pi * uni(rng), sz = std::sqrt(1 - cz * cz);
            Vec3 v{speed * sz * std::cos(az), speed * sz * std::sin(az), speed * cz};
            SampleTerms t;
            for (int side = 0; side < 2; ++side) {
                double ph = phi + side * pi;
                Vec3 x{hg.R(k) * std::cos(ph), hg.R(k) * std::sin(ph), zs * hg.z(k)};
                Vec3 xo, vo;
                m.apply(true, x, v, xo, vo);
                probe.check(xo);
                double dK = detail::half_sq(vo) - detail::half_sq(v);
                double uh0 = probe.halo(x), ud0 = u_disk_on_halo[k];
                double uh1 = uh0, ud1 = ud0;
                if (!detail::is_zero(b)) {
                    uh1 = probe.halo(xo);
                    ud1 = probe.flat(xo);
                }
                double dh = uh1 - uh0, dd = ud1 - ud0, cross_term = 0;
                if (cross) cross_term = (probe.flat(detail::sub(xo, a)) - probe.flat(detail::sub(x, a))) - dd;
                t.dH += 0.5 * dK;
                t.d += 0.5 * (dK + dh + dd);
                t.quad += 0.5 * (dh - cross_term);
                t.residual -= 0.5 * (dd + cross_term);
            }
            ps.halo_pairs[i] = t;
        });
    }
    if (with_disk) {
        const auto& dg = *s.disk.grid;
        ps.disk_mass = s.constraints.M_flat;
        std::vector<double> cdf(dg.size());
        double acc = 0;
        for (std::size_t j = 0; j < dg.size(); ++j) cdf[j] = acc += dg.weight(j) * s.disk.sigma[j];
        ps.disk_pairs.resize(p.pairs);
        Vec3 ab = detail::sub(a, b);
        parallel_for(p.pairs, [&](std::size_t i) {
            std::mt19937_64 rng(detail::mix_seed(p.seed, i, 2));
            std::uniform_real_distribution<double> uni(0, 1);
            std::size_t j = detail::pick(cdf, (i + uni(rng)) / p.pairs);
            double gap =
                moments_from_density(Flavor::Flat2D, s.exponents.k_flat, s.disk.sigma[j], s.multipliers.lambda_flat).gap;
            double phi = 2 * pi * uni(rng);
            double speed = std::sqrt(2 * gap * detail::sample_beta(rng, 1.0, s.exponents.k_flat + 1));
            double az = 2 * pi * uni(rng);
            Vec3 v{speed * std::cos(az), speed * std::sin(az), 0};
            SampleTerms t;
            for (int side = 0; side < 2; ++side) {
                double ph = phi + side * pi;
                Vec3 y{dg.node(j) * std::cos(ph), dg.node(j) * std::sin(ph), 0};
                Vec3 yo, vo;
                m.apply(false, y, v, yo, vo);
                probe.check(yo);
                double dK = detail::half_sq(vo) - detail::half_sq(v);
                double uh0 = with_halo ? probe.halo(y) : 0.0, ud0 = u_disk_on_plane[j];
                double uh1 = uh0, ud1 = ud0, uhab = uh0;
                if (!detail::is_zero(a)) {
                    uh1 = with_halo ? probe.halo(yo) : 0.0;
                    ud1 = probe.flat(yo);
                }
                if (with_halo && !detail::is_zero(ab)) uhab = probe.halo(detail::add(y, ab));
                double dab = uhab - uh0, dh = uh1 - uh0, dd = ud1 - ud0;
                t.dH += 0.5 * (dK + dab);
                t.d += 0.5 * (dK + dh + dd);
                t.quad += 0.5 * dd;
                t.residual += 0.5 * (dab - dh);
            }
            ps.disk_pairs[i] = t;
        });
    }
    return ps;
}

inline PerturbedState perturb(const CoupledSteadyState& base, const Perturbation& p) {
    return perturb(std::make_shared<const CoupledSteadyState>(base), p);
}

namespace detail {

template <class F>
Estimate combine(const PerturbedState& ps, F field) {
    Estimate e;
    double var = 0;
    auto add = [&](const std::vector<SampleTerms>& set, double mass) {
        if (set.empty()) return;
        double mean = 0, sq = 0;
        for (const auto& t : set) mean += field(t);
        mean /= set.size();
        for (const auto& t : set) sq += (field(t) - mean) * (field(t) - mean);
        double n = double(set.size());
        e.value += mass * mean;
        var += mass * mass * sq / (n * (n - 1));
    };
    add(ps.halo_pairs, ps.halo_mass);
    add(ps.disk_pairs, ps.disk_mass);
    e.error = std::sqrt(var);
    return e;
}

}  // namespace detail

/// d = ∬E(f - f₀) + ∬Ẽ(f̃ - f̃₀) with E the frozen particle energy of the base state
inline Estimate distance_d(const PerturbedState& ps) {
    return detail::combine(ps, [](const SampleTerms& t) { return t.d; });
}

struct ExpansionCheck {
    Estimate delta_H;   ///< H(f, f̃) - H(f₀, f̃₀)
    Estimate d;
    Estimate quadratic; ///< ||δf||²_pot + ||δf̃||²_pot + 2⟨δf, δf̃⟩_pot
    Estimate residual;  ///< ΔH - d + quadratic
};

inline ExpansionCheck expansion_check(const PerturbedState& ps) {
    ExpansionCheck c;
    c.delta_H = detail::combine(ps, [](const SampleTerms& t) { return t.dH; });
    c.d = distance_d(ps);
    c.quadratic = detail::combine(ps, [](const SampleTerms& t) { return t.quad; });
    c.residual = detail::combine(ps, [](const SampleTerms& t) { return t.residual; });
    return c;
}

/// max |det DΦ - 1| and max round-trip error |Φ⁻¹(Φ(z)) - z| at random points
struct JacobianReport {
    double max_det_error = 0, max_roundtrip_error = 0;
};

namespace detail {
inline double det6(std::array<std::array<double, 6>, 6> A) {
    double det = 1;
    for (int c = 0; c < 6; ++c) {
        int p = c;
        for (int r = c + 1; r < 6; ++r)
            if (std::fabs(A[r][c]) > std::fabs(A[p][c])) p = r;
        if (A[p][c] == 0) return 0;
        if (p != c) {
            std::swap(A[p], A[c]);
            det = -det;
        }
        det *= A[c][c];
        for (int r = c + 1; r < 6; ++r) {
            double f = A[r][c] / A[c][c];
            for (int k = c; k < 6; ++k) A[r][k] -= f * A[c][k];
        }
    }
    return det;
}
}  // namespace detail

inline JacobianReport jacobian_check(const PhaseMap& m, std::size_t points = 10000, std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(-1, 1);
    JacobianReport rep;
    double L = m.shear_scale;
    for (std::size_t n = 0; n < points; ++n) {
        bool halo = n % 2 == 0;
        Vec3 x{ux(rng) * L, ux(rng) * L, halo ? ux(rng) * L : 0.0}, v{ux(rng), ux(rng), halo ? ux(rng) : 0.0};
        std::array<std::array<double, 6>, 6> J{};
        double h = 1e-4 * L;
        for (int c = 0; c < 6; ++c) {
            Vec3 xp = x, vp = v, xm = x, vm = v;
            (c < 3 ? xp[c] : vp[c - 3]) += h;
            (c < 3 ? xm[c] : vm[c - 3]) -= h;
            Vec3 a1, b1, a2, b2;
            m.apply(halo, xp, vp, a1, b1);
            m.apply(halo, xm, vm, a2, b2);
            for (int r = 0; r < 3; ++r) {
                J[r][c] = (a1[r] - a2[r]) / (2 * h);
                J[r + 3][c] = (b1[r] - b2[r]) / (2 * h);
            }
        }
        if (!halo) {
            // the disk map acts on (x₁, x₂, v₁, v₂); complete with the identity
            J[2] = {0, 0, 1, 0, 0, 0};
            J[5] = {0, 0, 0, 0, 0, 1};
        }
        rep.max_det_error = std::max(rep.max_det_error, std::fabs(detail::det6(J) - 1));
        Vec3 xo, vo, xb, vb;
        m.apply(halo, x, v, xo, vo);
        m.invert(halo, xo, vo, xb, vb);
        for (int i = 0; i < 3; ++i)
            rep.max_roundtrip_error =
                std::max({rep.max_roundtrip_error, std::fabs(xb[i] - x[i]), std::fabs(vb[i] - v[i])});
    }
    return rep;
}

/// seeded mix of translations, boosts and shears used as a standard battery
inline std::vector<Perturbation> perturbation_battery(const CoupledSteadyState& s, std::size_t count = 50,
                                                      std::uint64_t seed = 2024, std::size_t pairs = 2000) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    double length = std::max(s.halo_radius, s.disk_radius);
    double speed = std::sqrt(2 * std::fabs(s.multipliers.E0));
    std::vector<Perturbation> out;
    for (std::size_t i = 0; i < count; ++i) {
        Perturbation p;
        p.kind = static_cast<PerturbationKind>(i % 3);
        int which = int((i / 3) % 3);
        p.move_halo = which != 1;
        p.move_disk = which != 2;
        p.angle = 2 * pi * u(rng);
        double r = 0.05 + 0.15 * u(rng);
        p.magnitude = r * length;
        p.pairs = pairs;
        // velocity maps leave positions fixed and are cheap to sample densely
        if (p.kind == PerturbationKind::InPlaneBoost) {
            p.magnitude = (0.1 + r) * speed;
            p.pairs = 10 * pairs;
        }
        if (p.kind == PerturbationKind::VelocityShear) {
            p.magnitude = (0.1 + r) * speed / (1.72 * length);
            p.pairs = 10 * pairs;
        }
        p.seed = seed + 1000 * (i + 1);
        out.push_back(p);
    }
    return out;
}

}  // namespace flathalo
