#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace flathalo {

/// ∫_0^{2π} dφ / |x - x'| for two rings (R,z) and (R',z')
inline double azimuthal_kernel(double R, double z, double Rp, double zp) {
    double dz = z - zp, sum = R + Rp, diff = R - Rp;
    double dplus = sum * sum + dz * dz, dminus = diff * diff + dz * dz;
    if (dminus == 0) throw SingularityError("azimuthal_kernel: coincident rings");
    return 4 * elliptic_k_complement(dminus / dplus) / std::sqrt(dplus);
}

/// volume density on the meridional half plane
struct HaloDensity {
    std::shared_ptr<const MeridionalGrid> grid;
    std::vector<double> rho;

    double mass() const { return integrate(*grid, rho); }
    double support_radius() const {
        double s = 0;
        for (std::size_t k = 0; k < rho.size(); ++k)
            if (rho[k] > 0) s = std::max(s, grid->r(k));
        return s;
    }
};

/// surface density of the razor-thin disk
struct DiskDensity {
    std::shared_ptr<const RadialGrid> grid;
    std::vector<double> sigma;

    double mass() const { return integrate(*grid, sigma); }
    double support_radius() const {
        double s = 0;
        for (std::size_t i = 0; i < sigma.size(); ++i)
            if (sigma[i] > 0) s = grid->node(i);
        return s;
    }
};

/// potential on the meridional nodes together with its trace on the plane grid
struct PotentialField {
    std::shared_ptr<const MeridionalGrid> grid;
    std::vector<double> values;
    std::shared_ptr<const RadialGrid> plane_grid;
    std::vector<double> plane_trace;
};

struct MixedEnergy {
    double value_a = 0;  ///< ∫ U_σ ρ dx over the meridional grid
    double value_b = 0;  ///< ∫ U_ρ(x̃,0) σ dx̃ over the plane grid
    double discrepancy() const {
        double scale = std::max(std::fabs(value_a), std::fabs(value_b));
        return scale > 0 ? std::fabs(value_a - value_b) / scale : 0.0;
    }
};

namespace detail {

/// Integrals of kernel(R,z; s,0) s φ(s) ds over the plane cell [a,b] for the two
/// hat functions with nodes a and b. Cells close to the target are split at
/// the nearest point and graded geometrically toward it.
inline std::array<double, 2> disk_cell_weights(double R, double z, double a, double b) {
    const GaussRule& g8 = gauss_rule(8);
    const GaussRule& g10 = gauss_rule(10);
    double h = b - a;
    std::array<double, 2> w{0, 0};
    auto piece = [&](double lo, double hi, const GaussRule& g) {
        double c = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        for (std::size_t q = 0; q < g.nodes.size(); ++q) {
            double s = c + half * g.nodes[q];
            double f = g.weights[q] * half * azimuthal_kernel(R, z, s, 0) * s;
            w[0] += f * (b - s) / h;
            w[1] += f * (s - a) / h;
        }
    };
    double dR = R < a ? a - R : (R > b ? R - b : 0.0);
    double dist = std::hypot(dR, z);
    if (dist > 2 * h) {
        piece(a, b, g8);
        return w;
    }
    double c = std::clamp(R, a, b);
    double floor = std::max(0.25 * dist, 1e-10 * (h + c));
    constexpr double ratio = 0.25;
    for (int side = 0; side < 2; ++side) {
        double len = side == 0 ? c - a : b - c;
        if (len <= 0) continue;
        double outer = len;
        while (outer * ratio > floor) {
            double inner = outer * ratio;
            if (side == 0)
                piece(c - outer, c - inner, g10);
            else
                piece(c + inner, c + outer, g10);
            outer = inner;
        }
        if (side == 0)
            piece(c - outer, c, g10);
        else
            piece(c, c + outer, g10);
    }
    return w;
}

/// row of coefficients C_j with U_σ(R,z) = -Σ_j C_j σ_j
inline void disk_row(const RadialGrid& disk, double R, double z, double* row) {
    std::size_t n = disk.size();
    for (std::size_t j = 0; j < n; ++j) row[j] = 0;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        auto w = disk_cell_weights(R, z, disk.node(j), disk.node(j + 1));
        row[j] += w[0];
        row[j + 1] += w[1];
    }
}

/// ∫_lo^hi t^p dt
inline double power_integral(double lo, double hi, double p) {
    if (lo == 0) return std::pow(hi, p + 1) / (p + 1);
    double l = std::log(hi / lo);
    if (p == -1) return l;
    return std::pow(lo, p + 1) * std::expm1((p + 1) * l) / (p + 1);
}

/// c² ∫_{tlo}^{thi} ρ(ct) t^p dt for ρ linear with value rho_lo at c·tlo
inline double segment_moment(double c, double tlo, double thi, double p, double rho_lo, double slope) {
    double tp = power_integral(tlo, thi, p);
    double tp1 = power_integral(tlo, thi, p + 1);
    return c * c * (rho_lo * tp + slope * c * (tp1 - tlo * tp));
}

inline std::vector<double> legendre_table(int l_max, double x) {
    std::vector<double> P(l_max + 1);
    P[0] = 1;
    if (l_max >= 1) P[1] = x;
    for (int l = 2; l <= l_max; ++l) P[l] = ((2 * l - 1) * x * P[l - 1] - (l - 1) * P[l - 2]) / l;
    return P;
}

}  // namespace detail

/// Potential of an axisymmetric, z-even volume density by an even-degree
/// Legendre expansion with exact radial integration of piecewise-linear
/// coefficient profiles.
class HaloMultipole {
public:
    struct Expansion {
        int l_max = 0;
        std::vector<double> rho_l;   ///< [l/2][i]
        std::vector<double> inner;   ///< r_i^{-(l+1)} ∫_0^{r_i} ρ_l s^{l+2} ds
        std::vector<double> outer;   ///< r_i^{l} ∫_{r_i}^{∞} ρ_l s^{1-l} ds
    };

    HaloMultipole(std::shared_ptr<const MeridionalGrid> grid, int l_max = -1) : grid_(std::move(grid)) {
        l_max_ = l_max >= 0 ? l_max : int(grid_->n_mu());
        if (l_max_ % 2) --l_max_;
        std::size_t nl = l_max_ / 2 + 1, nm = grid_->n_mu();
        P_.resize(nl * nm);
        for (std::size_t a = 0; a < nm; ++a) {
            auto P = detail::legendre_table(l_max_, grid_->mu(a));
            for (std::size_t j = 0; j < nl; ++j) P_[j * nm + a] = P[2 * j];
        }
    }

    int l_max() const { return l_max_; }
    const MeridionalGrid& grid() const { return *grid_; }

    Expansion expand(std::span<const double> rho) const {
        detail::check_length(rho.size(), grid_->size());
        const auto& r = grid_->radial().nodes();
        std::size_t nr = r.size(), nm = grid_->n_mu(), nl = l_max_ / 2 + 1;
        Expansion e;
        e.l_max = l_max_;
        e.rho_l.assign(nl * nr, 0.0);
        e.inner.assign(nl * nr, 0.0);
        e.outer.assign(nl * nr, 0.0);
        const auto& wmu = grid_->mu_weights();
        for (std::size_t j = 0; j < nl; ++j) {
            int l = int(2 * j);
            double* rl = &e.rho_l[j * nr];
            for (std::size_t i = 0; i < nr; ++i) {
                double s = 0;
                for (std::size_t a = 0; a < nm; ++a) s += wmu[a] * P_[j * nm + a] * rho[i * nm + a];
                rl[i] = (2 * l + 1) * s;
            }
            double* in = &e.inner[j * nr];
            double* out = &e.outer[j * nr];
            in[0] = 0;
            for (std::size_t i = 0; i + 1 < nr; ++i) {
                double a = r[i], b = r[i + 1], slope = (rl[i + 1] - rl[i]) / (b - a);
                double q = a / b;
                in[i + 1] = std::pow(q, l + 1) * in[i] + detail::segment_moment(b, q, 1, l + 2, rl[i], slope);
            }
            out[nr - 1] = 0;
            for (std::size_t i = nr - 1; i-- > 0;) {
                double a = r[i], b = r[i + 1], slope = (rl[i + 1] - rl[i]) / (b - a);
                if (a == 0) {
                    out[i] = l == 0 ? out[i + 1] + detail::segment_moment(b, 0, 1, 1, rl[i], slope * 1) : 0.0;
                    continue;
                }
                out[i] = std::pow(a / b, l) * out[i + 1] + detail::segment_moment(a, 1, b / a, 1 - l, rl[i], slope);
            }
        }
        return e;
    }

    /// U_l at radius r
    double coefficient(const Expansion& e, std::size_t j, double r) const {
        const auto& nodes = grid_->radial().nodes();
        std::size_t nr = nodes.size();
        int l = int(2 * j);
        double pref = -4 * pi / (2 * l + 1);
        const double* rl = &e.rho_l[j * nr];
        const double* in = &e.inner[j * nr];
        const double* out = &e.outer[j * nr];
        double rmax = nodes.back();
        if (r >= rmax) return pref * std::pow(rmax / r, l + 1) * in[nr - 1];
        if (r == 0) return l == 0 ? pref * out[0] : 0.0;
        std::size_t i = grid_->radial().cell(r);
        double a = nodes[i], b = nodes[i + 1], slope = (rl[i + 1] - rl[i]) / (b - a);
        if (r == a) return pref * (in[i] + out[i]);
        double rho_r = rl[i] + slope * (r - a);
        double inner = std::pow(a / r, l + 1) * in[i] + detail::segment_moment(r, a / r, 1, l + 2, rl[i], slope);
        double outer = std::pow(r / b, l) * out[i + 1] + detail::segment_moment(r, 1, b / r, 1 - l, rho_r, slope);
        return pref * (inner + outer);
    }

    std::vector<double> potential_on_grid(const Expansion& e) const {
        const auto& r = grid_->radial().nodes();
        std::size_t nr = r.size(), nm = grid_->n_mu(), nl = l_max_ / 2 + 1;
        std::vector<double> U(nr * nm, 0.0);
        std::vector<double> Ul(nl);
        for (std::size_t i = 0; i < nr; ++i) {
            for (std::size_t j = 0; j < nl; ++j) {
                int l = int(2 * j);
                Ul[j] = i == 0 && l > 0 ? 0.0 : -4 * pi / (2 * l + 1) * (e.inner[j * nr + i] + e.outer[j * nr + i]);
            }
            for (std::size_t a = 0; a < nm; ++a) {
                double s = 0;
                for (std::size_t j = 0; j < nl; ++j) s += Ul[j] * P_[j * nm + a];
                U[i * nm + a] = s;
            }
        }
        return U;
    }

    double potential_at(const Expansion& e, double R, double z) const {
        double r = std::hypot(R, z);
        double mu = r > 0 ? std::fabs(z) / r : 0.0;
        auto P = detail::legendre_table(l_max_, mu);
        double s = 0;
        for (std::size_t j = 0; j <= std::size_t(l_max_ / 2); ++j) s += coefficient(e, j, r) * P[2 * j];
        return s;
    }

private:
    std::shared_ptr<const MeridionalGrid> grid_;
    int l_max_;
    std::vector<double> P_;
};

/// Potential operators for one halo grid and one plane grid. The disk operators
/// are dense matrices of hat-function ring integrals, built on first use.
class Gravity {
public:
    Gravity(std::shared_ptr<const MeridionalGrid> halo_grid, std::shared_ptr<const RadialGrid> plane_grid,
            int l_max = -1)
        : halo_grid_(std::move(halo_grid)), plane_grid_(std::move(plane_grid)), multipole_(halo_grid_, l_max),
          cache_(std::make_shared<Cache>()) {
        if (plane_grid_->measure() != Measure::Flat) throw GridMismatchError("plane grid must carry the flat measure");
    }

    const std::shared_ptr<const MeridionalGrid>& halo_grid() const { return halo_grid_; }
    const std::shared_ptr<const RadialGrid>& plane_grid() const { return plane_grid_; }
    const HaloMultipole& multipole() const { return multipole_; }

    /// U_ρ at the meridional nodes
    std::vector<double> halo_on_halo(std::span<const double> rho) const {
        return multipole_.potential_on_grid(multipole_.expand(rho));
    }

    /// U_ρ on the plane nodes from the Legendre expansion
    std::vector<double> halo_on_plane(std::span<const double> rho) const {
        auto e = multipole_.expand(rho);
        std::vector<double> u(plane_grid_->size());
        for (std::size_t j = 0; j < u.size(); ++j) u[j] = multipole_.potential_at(e, plane_grid_->node(j), 0);
        return u;
    }

    std::vector<double> disk_on_halo(std::span<const double> sigma) const {
        detail::check_length(sigma.size(), plane_grid_->size());
        return apply(cross(), sigma, halo_grid_->size());
    }

    std::vector<double> disk_on_plane(std::span<const double> sigma) const {
        detail::check_length(sigma.size(), plane_grid_->size());
        return apply(self(), sigma, plane_grid_->size());
    }

    PotentialField halo_potential(const HaloDensity& rho) const {
        check(rho);
        return {halo_grid_, halo_on_halo(rho.rho), plane_grid_, halo_on_plane(rho.rho)};
    }

    PotentialField disk_potential(const DiskDensity& sigma) const {
        check(sigma);
        return {halo_grid_, disk_on_halo(sigma.sigma), plane_grid_, disk_on_plane(sigma.sigma)};
    }

    PotentialField effective_potential(const HaloDensity& rho, const DiskDensity& sigma) const {
        auto u = halo_potential(rho);
        auto ud = disk_potential(sigma);
        for (std::size_t k = 0; k < u.values.size(); ++k) u.values[k] += ud.values[k];
        for (std::size_t j = 0; j < u.plane_trace.size(); ++j) u.plane_trace[j] += ud.plane_trace[j];
        return u;
    }

    double pot_inner(const HaloDensity& a, const HaloDensity& b) const {
        check(a);
        check(b);
        auto ua = halo_on_halo(a.rho), ub = halo_on_halo(b.rho);
        return -0.25 * (dot(*halo_grid_, a.rho, ub) + dot(*halo_grid_, b.rho, ua));
    }

    double pot_inner(const DiskDensity& a, const DiskDensity& b) const {
        check(a);
        check(b);
        auto ua = disk_on_plane(a.sigma), ub = disk_on_plane(b.sigma);
        return -0.25 * (dot(*plane_grid_, a.sigma, ub) + dot(*plane_grid_, b.sigma, ua));
    }

    /// mixed flavour: average of the two evaluation routes, hence exactly symmetric
    double pot_inner(const HaloDensity& a, const DiskDensity& b) const {
        auto m = mixed_energy_both_ways(a, b);
        return -0.25 * (m.value_a + m.value_b);
    }

    double pot_inner(const DiskDensity& a, const HaloDensity& b) const { return pot_inner(b, a); }

    MixedEnergy mixed_energy_both_ways(const HaloDensity& rho, const DiskDensity& sigma) const {
        check(rho);
        check(sigma);
        return {dot(*halo_grid_, rho.rho, disk_on_halo(sigma.sigma)),
                dot(*plane_grid_, sigma.sigma, halo_on_plane(rho.rho))};
    }

    double halo_potential_at(const HaloDensity& rho, double R, double z) const {
        check(rho);
        return multipole_.potential_at(multipole_.expand(rho.rho), R, z);
    }

    double disk_potential_at(const DiskDensity& sigma, double R, double z) const {
        check(sigma);
        std::vector<double> row(plane_grid_->size());
        detail::disk_row(*plane_grid_, R, std::fabs(z), row.data());
        double u = 0;
        for (std::size_t j = 0; j < row.size(); ++j) u -= row[j] * sigma.sigma[j];
        return u;
    }

    void check(const HaloDensity& d) const {
        if (d.grid != halo_grid_ && !(d.grid && *d.grid == *halo_grid_))
            throw GridMismatchError("halo density lives on a different grid");
        detail::check_length(d.rho.size(), halo_grid_->size());
    }
    void check(const DiskDensity& d) const {
        if (d.grid != plane_grid_ && !(d.grid && *d.grid == *plane_grid_))
            throw GridMismatchError("disk density lives on a different grid");
        detail::check_length(d.sigma.size(), plane_grid_->size());
    }

private:
    struct Cache {
        std::once_flag cross_once, self_once;
        std::vector<double> cross, self;
    };

    static double dot(const MeridionalGrid& g, std::span<const double> f, std::span<const double> u) {
        double s = 0;
        for (std::size_t k = 0; k < f.size(); ++k) s += g.weight(k) * f[k] * u[k];
        return s;
    }
    static double dot(const RadialGrid& g, std::span<const double> f, std::span<const double> u) {
        double s = 0;
        for (std::size_t k = 0; k < f.size(); ++k) s += g.weight(k) * f[k] * u[k];
        return s;
    }

    std::vector<double> apply(const std::vector<double>& M, std::span<const double> sigma, std::size_t rows) const {
        std::size_t nd = sigma.size();
        std::vector<double> u(rows);
        for (std::size_t t = 0; t < rows; ++t) {
            const double* row = &M[t * nd];
            double s = 0;
            for (std::size_t j = 0; j < nd; ++j) s += row[j] * sigma[j];
            u[t] = -s;
        }
        return u;
    }

    const std::vector<double>& cross() const {
        std::call_once(cache_->cross_once, [&] {
            std::size_t nd = plane_grid_->size(), nh = halo_grid_->size();
            cache_->cross.assign(nh * nd, 0.0);
            parallel_for(nh, [&](std::size_t t) {
                detail::disk_row(*plane_grid_, halo_grid_->R(t), halo_grid_->z(t), &cache_->cross[t * nd]);
            });
        });
        return cache_->cross;
    }

    const std::vector<double>& self() const {
        std::call_once(cache_->self_once, [&] {
            std::size_t nd = plane_grid_->size();
            cache_->self.assign(nd * nd, 0.0);
            parallel_for(nd, [&](std::size_t t) {
                detail::disk_row(*plane_grid_, plane_grid_->node(t), 0, &cache_->self[t * nd]);
            });
        });
        return cache_->self;
    }

    std::shared_ptr<const MeridionalGrid> halo_grid_;
    std::shared_ptr<const RadialGrid> plane_grid_;
    HaloMultipole multipole_;
    std::shared_ptr<Cache> cache_;
};

/// plane grid sharing the radial nodes of a meridional grid
inline std::shared_ptr<const RadialGrid> plane_grid_of(const MeridionalGrid& g) {
    return std::make_shared<const RadialGrid>(g.radial().with_measure(Measure::Flat));
}

inline PotentialField halo_potential(const HaloDensity& rho) {
    return Gravity(rho.grid, plane_grid_of(*rho.grid)).halo_potential(rho);
}

inline PotentialField disk_potential(const DiskDensity& sigma, std::shared_ptr<const MeridionalGrid> evaluation) {
    return Gravity(std::move(evaluation), sigma.grid).disk_potential(sigma);
}

inline PotentialField effective_potential(const HaloDensity& rho, const DiskDensity& sigma) {
    return Gravity(rho.grid, sigma.grid).effective_potential(rho, sigma);
}

inline double pot_inner(const HaloDensity& a, const HaloDensity& b) {
    return Gravity(a.grid, plane_grid_of(*a.grid)).pot_inner(a, b);
}
inline double pot_inner(const DiskDensity& a, const DiskDensity& b) {
    auto m = std::make_shared<const MeridionalGrid>(a.grid->with_measure(Measure::Spherical), 1);
    return Gravity(m, a.grid).pot_inner(a, b);
}
inline double pot_inner(const HaloDensity& a, const DiskDensity& b) { return Gravity(a.grid, b.grid).pot_inner(a, b); }
inline double pot_inner(const DiskDensity& a, const HaloDensity& b) { return Gravity(b.grid, a.grid).pot_inner(a, b); }

inline MixedEnergy mixed_energy_both_ways(const HaloDensity& rho, const DiskDensity& sigma) {
    return Gravity(rho.grid, sigma.grid).mixed_energy_both_ways(rho, sigma);
}

}  // namespace flathalo
