#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace flathalo {

constexpr double pi = std::numbers::pi;

/// Gauss-Legendre nodes and weights on [-1,1]
struct GaussRule {
    std::vector<double> nodes, weights;
};

inline GaussRule make_gauss_rule(std::size_t n) {
    if (n == 0) throw DomainError("gauss rule needs at least one node");
    GaussRule rule{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1, p1 = x;
            for (std::size_t j = 2; j <= n; ++j) {
                double p2 = ((2.0 * j - 1) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1;
            dp = n * (x * p1 - p0) / (x * x - 1);
            double dx = p1 / dp;
            x -= dx;
            if (std::fabs(dx) < 1e-16) break;
        }
        // recompute the derivative at the converged node for the weight
        double p0 = 1, p1 = x;
        for (std::size_t j = 2; j <= n; ++j) {
            double p2 = ((2.0 * j - 1) * x * p1 - (j - 1.0) * p0) / j;
            p0 = p1;
            p1 = p2;
        }
        if (n == 1) p0 = 1;
        dp = n * (x * p1 - p0) / (x * x - 1);
        double w = 2 / ((1 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = rule.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0;
    return rule;
}

/// cached rule; the reference stays valid for the lifetime of the program
inline const GaussRule& gauss_rule(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, std::unique_ptr<GaussRule>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<GaussRule>(make_gauss_rule(n));
    return *slot;
}

/// integral of f over [a,b] with an n-point Gauss rule
template <typename F>
double gauss_integrate(F&& f, double a, double b, std::size_t n = 8) {
    const GaussRule& g = gauss_rule(n);
    double c = 0.5 * (a + b), h = 0.5 * (b - a), sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += g.weights[i] * f(c + h * g.nodes[i]);
    return sum * h;
}

/// complete elliptic integral of the first kind from the complementary parameter m1 = 1-m
inline double elliptic_k_complement(double m1) {
    if (!(m1 > 0) || m1 > 1) throw DomainError("elliptic_k: parameter outside [0,1)");
    double a = 1, b = std::sqrt(m1);
    while (std::fabs(a - b) > 1e-15 * a) {
        double an = 0.5 * (a + b);
        b = std::sqrt(a * b);
        a = an;
    }
    return pi / (a + b);
}

/// K(m) = int_0^{pi/2} dθ / sqrt(1 - m sin^2 θ), with m the squared modulus
inline double elliptic_k(double m) {
    if (!(m >= 0) || m >= 1) throw DomainError("elliptic_k: parameter m=" + std::to_string(m) + " outside [0,1)");
    return elliptic_k_complement(1 - m);
}

enum class Measure { Line, Flat, Spherical };

inline const char* measure_name(Measure m) {
    switch (m) {
        case Measure::Line: return "line";
        case Measure::Flat: return "flat-2d";
        default: return "spherical-3d";
    }
}

/// Radial nodes with weights that integrate piecewise-linear functions exactly
/// against dr, 2πr dr or 4πr² dr.
class RadialGrid {
public:
    RadialGrid() = default;

    RadialGrid(std::vector<double> nodes, Measure measure) : nodes_(std::move(nodes)), measure_(measure) {
        if (nodes_.size() < 2) throw DomainError("radial grid needs at least two nodes");
        if (nodes_.front() < 0) throw DomainError("radial grid nodes must be nonnegative");
        for (std::size_t i = 1; i < nodes_.size(); ++i)
            if (!(nodes_[i] > nodes_[i - 1])) throw DomainError("radial grid nodes must be strictly increasing");
        weights_.assign(nodes_.size(), 0.0);
        for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
            double a = nodes_[i], b = nodes_[i + 1], h = b - a;
            switch (measure_) {
                case Measure::Line:
                    weights_[i] += h / 2;
                    weights_[i + 1] += h / 2;
                    break;
                case Measure::Flat:
                    weights_[i] += 2 * pi * h * (2 * a + b) / 6;
                    weights_[i + 1] += 2 * pi * h * (a + 2 * b) / 6;
                    break;
                case Measure::Spherical:
                    weights_[i] += 4 * pi * h * (3 * a * a + 2 * a * b + b * b) / 12;
                    weights_[i + 1] += 4 * pi * h * (a * a + 2 * a * b + 3 * b * b) / 12;
                    break;
            }
        }
    }

    static RadialGrid uniform(double r_max, std::size_t n, Measure measure) {
        if (!(r_max > 0) || n < 2) throw DomainError("uniform grid needs r_max>0 and n>=2");
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = r_max * double(i) / double(n - 1);
        r.back() = r_max;
        return RadialGrid(std::move(r), measure);
    }

    /// Nodes clustered at the given support radii: uniform inside each support,
    /// refined across its edge and geometrically stretched beyond it.
    static RadialGrid adapted(std::vector<double> supports, double r_max, std::size_t n, Measure measure) {
        supports.erase(std::remove_if(supports.begin(), supports.end(), [](double s) { return !(s > 0); }),
                       supports.end());
        if (supports.empty() || !(r_max > 0) || n < 2) throw DomainError("adapted grid needs positive supports");
        auto density = [&](double r) {
            double nu = 0;
            for (double s : supports) {
                double t = r / s;
                double core = t <= 1.1 ? 1.0 : 0.05 / (t - 1.05);
                double edge = 1.5 * std::exp(-std::pow((t - 1) / 0.06, 2));
                nu += (core + edge) / s;
            }
            return nu;
        };
        std::vector<double> xs{0.0, r_max};
        double smin = *std::min_element(supports.begin(), supports.end());
        for (double s : supports)
            for (int i = 1; i < 4000; ++i) {
                double x = 1.3 * s * i / 4000.0;
                if (x < r_max) xs.push_back(x);
            }
        double lo = std::min(1e-3 * smin, 0.5 * r_max);
        for (int i = 0; i < 4000; ++i) xs.push_back(lo * std::pow(r_max / lo, i / 3999.0));
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        while (xs.back() > r_max) xs.pop_back();
        if (xs.back() < r_max) xs.push_back(r_max);
        std::vector<double> cum(xs.size(), 0.0);
        double prev = density(xs[0]);
        for (std::size_t i = 1; i < xs.size(); ++i) {
            double cur = density(xs[i]);
            double mid = density(0.5 * (xs[i] + xs[i - 1]));
            cum[i] = cum[i - 1] + (xs[i] - xs[i - 1]) * (prev + 4 * mid + cur) / 6;
            prev = cur;
        }
        std::vector<double> r(n);
        r[0] = 0;
        r[n - 1] = r_max;
        std::size_t j = 1;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            double target = cum.back() * double(i) / double(n - 1);
            while (cum[j] < target) ++j;
            double t = (target - cum[j - 1]) / (cum[j] - cum[j - 1]);
            r[i] = xs[j - 1] + t * (xs[j] - xs[j - 1]);
        }
        return RadialGrid(std::move(r), measure);
    }

    std::size_t size() const { return nodes_.size(); }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& weights() const { return weights_; }
    double node(std::size_t i) const { return nodes_[i]; }
    double weight(std::size_t i) const { return weights_[i]; }
    double r_max() const { return nodes_.back(); }
    Measure measure() const { return measure_; }

    RadialGrid with_measure(Measure m) const { return RadialGrid(nodes_, m); }

    RadialGrid scaled(double factor) const {
        std::vector<double> r(nodes_);
        for (double& x : r) x *= factor;
        return RadialGrid(std::move(r), measure_);
    }

    /// index i of the cell [r_i, r_{i+1}] containing r (clamped to the grid)
    std::size_t cell(double r) const {
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), r);
        std::size_t i = it == nodes_.begin() ? 0 : std::size_t(it - nodes_.begin()) - 1;
        return std::min(i, nodes_.size() - 2);
    }

    /// piecewise-linear interpolation of nodal values; zero beyond the last node
    double interpolate(std::span<const double> values, double r) const {
        if (r > nodes_.back() || r < 0) return 0;
        std::size_t i = cell(r);
        double t = (r - nodes_[i]) / (nodes_[i + 1] - nodes_[i]);
        return values[i] + t * (values[i + 1] - values[i]);
    }

    bool operator==(const RadialGrid& o) const { return measure_ == o.measure_ && nodes_ == o.nodes_; }

private:
    std::vector<double> nodes_, weights_;
    Measure measure_ = Measure::Line;
};

/// Axisymmetric grid on the half space z >= 0: radial nodes times Gauss-Legendre
/// nodes in mu = cos(theta) on (0,1). Fields are stored for z >= 0 and are even in z by
/// construction. Node (i,a) sits at R = r_i sqrt(1-mu_a^2), z = r_i mu_a, and its
/// weight covers both mirror images and the full azimuth.
class MeridionalGrid {
public:
    MeridionalGrid() = default;

    MeridionalGrid(const RadialGrid& radial, std::size_t n_mu) : radial_(radial.with_measure(Measure::Spherical)) {
        if (n_mu == 0) throw DomainError("meridional grid needs angular nodes");
        const GaussRule& g = gauss_rule(n_mu);
        mu_.resize(n_mu);
        mu_weights_.resize(n_mu);
        for (std::size_t a = 0; a < n_mu; ++a) {
            mu_[a] = 0.5 * (1 + g.nodes[a]);
            mu_weights_[a] = 0.5 * g.weights[a];
        }
        std::size_t nr = radial_.size();
        weights_.resize(nr * n_mu);
        cyl_R_.resize(nr * n_mu);
        cyl_z_.resize(nr * n_mu);
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t a = 0; a < n_mu; ++a) {
                std::size_t k = i * n_mu + a;
                weights_[k] = radial_.weight(i) * mu_weights_[a];
                cyl_R_[k] = radial_.node(i) * std::sqrt((1 - mu_[a]) * (1 + mu_[a]));
                cyl_z_[k] = radial_.node(i) * mu_[a];
            }
    }

    const RadialGrid& radial() const { return radial_; }
    std::size_t n_r() const { return radial_.size(); }
    std::size_t n_mu() const { return mu_.size(); }
    std::size_t size() const { return weights_.size(); }
    std::size_t index(std::size_t i, std::size_t a) const { return i * mu_.size() + a; }
    double r(std::size_t k) const { return radial_.node(k / mu_.size()); }
    double mu(std::size_t a) const { return mu_[a]; }
    const std::vector<double>& mu_nodes() const { return mu_; }
    const std::vector<double>& mu_weights() const { return mu_weights_; }
    double R(std::size_t k) const { return cyl_R_[k]; }
    double z(std::size_t k) const { return cyl_z_[k]; }
    double weight(std::size_t k) const { return weights_[k]; }
    const std::vector<double>& weights() const { return weights_; }
    double r_max() const { return radial_.r_max(); }

    bool operator==(const MeridionalGrid& o) const { return radial_ == o.radial_ && mu_ == o.mu_; }

private:
    RadialGrid radial_;
    std::vector<double> mu_, mu_weights_, weights_, cyl_R_, cyl_z_;
};

namespace detail {
inline void check_length(std::size_t field, std::size_t grid) {
    if (field != grid)
        throw GridMismatchError("field has " + std::to_string(field) + " values but grid has " +
                                std::to_string(grid) + " nodes");
}
}  // namespace detail

inline double integrate(const RadialGrid& grid, std::span<const double> field) {
    detail::check_length(field.size(), grid.size());
    double sum = 0;
    for (std::size_t i = 0; i < field.size(); ++i) sum += grid.weight(i) * field[i];
    return sum;
}

inline double integrate(const MeridionalGrid& grid, std::span<const double> field) {
    detail::check_length(field.size(), grid.size());
    double sum = 0;
    for (std::size_t k = 0; k < field.size(); ++k) sum += grid.weight(k) * field[k];
    return sum;
}

template <typename Grid>
double lp_norm(std::span<const double> field, double p, const Grid& grid) {
    if (!(p >= 1)) throw DomainError("lp_norm: p must be >= 1");
    detail::check_length(field.size(), grid.size());
    double sum = 0;
    for (std::size_t k = 0; k < field.size(); ++k) sum += grid.weight(k) * std::pow(std::fabs(field[k]), p);
    return std::pow(sum, 1 / p);
}

}  // namespace flathalo
