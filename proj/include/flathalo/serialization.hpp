#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "json.hpp"

#include "coupled.hpp"
#include "decoupled.hpp"
#include "energetics.hpp"
#include "errors.hpp"

namespace flathalo {

inline constexpr int schema_version = 1;
inline constexpr const char* tool_version = "0.1.0";

using json = nlohmann::ordered_json;

/// coupled states carry every kind of solution; the tag records its origin
enum class StateKind { Halo3D, Flat, Coupled };

inline const char* state_kind_name(StateKind k) {
    switch (k) {
        case StateKind::Halo3D: return "halo3d";
        case StateKind::Flat: return "flat";
        case StateKind::Coupled: return "coupled";
    }
    return "?";
}

inline StateKind parse_state_kind(const std::string& s) {
    if (s == "halo3d") return StateKind::Halo3D;
    if (s == "flat") return StateKind::Flat;
    if (s == "coupled") return StateKind::Coupled;
    throw DomainError("unknown state kind '" + s + "'");
}

/// spherical state sampled on a meridional grid with two angular nodes
inline CoupledSteadyState as_state(const SteadyState3D& h, std::size_t n_radial = 1024) {
    CoupledSteadyState s;
    s.exponents = {h.k, 0.5};
    s.constraints = {h.M, h.N, 0, 0};
    s.config.grid.n_radial = n_radial;
    s.config.grid.n_mu = 2;
    auto grid = std::make_shared<const MeridionalGrid>(
        RadialGrid::adapted({h.radius}, s.config.grid.domain_factor * h.radius, n_radial, Measure::Spherical), 2);
    s.halo = h.on_grid(grid);
    s.disk = {plane_grid_of(*grid), std::vector<double>(grid->n_r(), 0.0)};
    s.multipliers.E0 = h.E0;
    s.multipliers.lambda = h.lambda;
    auto g = s.gravity();
    s.u_halo = g.halo_on_halo(s.halo.rho);
    s.u_disk = g.halo_on_plane(s.halo.rho);
    s.halo_radius = h.radius;
    return s;
}

inline CoupledSteadyState as_state(const SteadyStateFlat& d) {
    CoupledSteadyState s;
    s.exponents = {1.0, d.k_flat};
    s.constraints = {0, 0, d.M, d.N};
    s.config.grid.n_radial = d.grid->size();
    s.config.grid.n_mu = 1;
    auto hg = detail::dummy_halo_grid(*d.grid);
    s.halo = {hg, std::vector<double>(hg->size(), 0.0)};
    s.disk = d.density();
    s.multipliers.E0_flat = d.E0;
    s.multipliers.lambda_flat = d.lambda;
    s.u_halo = s.gravity().disk_on_halo(d.sigma);
    s.u_disk = d.potential;
    s.disk_radius = d.radius;
    s.sweeps = d.sweeps;
    s.final_change = d.final_change;
    return s;
}

inline json to_json(const SolverConfig& c) {
    return {{"damping", c.damping},
            {"max_outer_sweeps", c.max_outer_sweeps},
            {"density_tolerance", c.density_tolerance},
            {"multiplier_tolerance", c.multiplier_tolerance},
            {"regrid_threshold", c.regrid_threshold},
            {"grid", {{"n_radial", c.grid.n_radial}, {"n_mu", c.grid.n_mu}, {"domain_factor", c.grid.domain_factor}}},
            {"l_max", c.l_max}};
}

inline SolverConfig solver_config_from_json(const json& j) {
    SolverConfig c;
    c.damping = j.at("damping");
    c.max_outer_sweeps = j.at("max_outer_sweeps");
    c.density_tolerance = j.at("density_tolerance");
    c.multiplier_tolerance = j.at("multiplier_tolerance");
    c.regrid_threshold = j.at("regrid_threshold");
    c.grid.n_radial = j.at("grid").at("n_radial");
    c.grid.n_mu = j.at("grid").at("n_mu");
    c.grid.domain_factor = j.at("grid").at("domain_factor");
    c.l_max = j.at("l_max");
    return c;
}

inline json to_json(const Multipliers& m) {
    return {{"E0", m.E0}, {"E0_flat", m.E0_flat}, {"lambda", m.lambda}, {"lambda_flat", m.lambda_flat}};
}

inline json to_json(const ConstraintVector& c) {
    return {{"M", c.M}, {"N", c.N}, {"M_flat", c.M_flat}, {"N_flat", c.N_flat}};
}

inline json to_json(const EnergyReport& r) {
    return {{"ekin_halo", r.ekin_halo},
            {"ekin_disk", r.ekin_disk},
            {"ekin_halo_quadrature", r.ekin_halo_quadrature},
            {"ekin_disk_quadrature", r.ekin_disk_quadrature},
            {"epot_halo", r.epot_halo},
            {"epot_disk", r.epot_disk},
            {"mixed", r.mixed},
            {"mixed_halo_side", r.mixed_a},
            {"mixed_disk_side", r.mixed_b},
            {"mixed_discrepancy", r.mixed_discrepancy()},
            {"kinetic_discrepancy", r.kinetic_discrepancy()},
            {"total", r.total},
            {"lower_bound_constant", r.lower_bound_constant()},
            {"norms", {{"mass_halo", r.mass_halo}, {"casimir_halo", r.casimir_halo},
                       {"mass_disk", r.mass_disk}, {"casimir_disk", r.casimir_disk}}}};
}

inline json state_to_json(const CoupledSteadyState& s, StateKind kind) {
    return {{"schema_version", schema_version},
            {"kind", state_kind_name(kind)},
            {"exponents", {{"k", s.exponents.k}, {"k_flat", s.exponents.k_flat}}},
            {"constraints", to_json(s.constraints)},
            // every nontrivial component is solved with its mass held fixed
            {"mass_saturation", "all_nontrivial"},
            {"config", to_json(s.config)},
            {"multipliers", to_json(s.multipliers)},
            {"radii", {{"halo", s.halo_radius}, {"disk", s.disk_radius}}},
            {"solver", {{"sweeps", s.sweeps}, {"regrids", s.regrids}, {"final_change", s.final_change}}},
            {"halo_grid", {{"radial_nodes", s.halo.grid->radial().nodes()}, {"n_mu", s.halo.grid->n_mu()}}},
            {"disk_grid", {{"nodes", s.disk.grid->nodes()}}},
            {"halo_density", s.halo.rho},
            {"disk_density", s.disk.sigma},
            {"u_halo", s.u_halo},
            {"u_disk", s.u_disk}};
}

inline std::pair<CoupledSteadyState, StateKind> state_from_json(const json& j) {
    if (j.at("schema_version").get<int>() != schema_version) throw DomainError("unsupported state schema version");
    CoupledSteadyState s;
    StateKind kind = parse_state_kind(j.at("kind"));
    s.exponents = {j.at("exponents").at("k"), j.at("exponents").at("k_flat")};
    const auto& c = j.at("constraints");
    s.constraints = {c.at("M"), c.at("N"), c.at("M_flat"), c.at("N_flat")};
    s.config = solver_config_from_json(j.at("config"));
    const auto& m = j.at("multipliers");
    s.multipliers = {m.at("E0"), m.at("E0_flat"), m.at("lambda"), m.at("lambda_flat")};
    s.halo_radius = j.at("radii").at("halo");
    s.disk_radius = j.at("radii").at("disk");
    s.sweeps = j.at("solver").at("sweeps");
    s.regrids = j.at("solver").at("regrids");
    s.final_change = j.at("solver").at("final_change");
    auto radial = RadialGrid(j.at("halo_grid").at("radial_nodes").get<std::vector<double>>(), Measure::Spherical);
    auto hg = std::make_shared<const MeridionalGrid>(radial, j.at("halo_grid").at("n_mu").get<std::size_t>());
    auto dg = std::make_shared<const RadialGrid>(j.at("disk_grid").at("nodes").get<std::vector<double>>(), Measure::Flat);
    s.halo = {hg, j.at("halo_density").get<std::vector<double>>()};
    s.disk = {dg, j.at("disk_density").get<std::vector<double>>()};
    s.u_halo = j.at("u_halo").get<std::vector<double>>();
    s.u_disk = j.at("u_disk").get<std::vector<double>>();
    detail::check_length(s.halo.rho.size(), hg->size());
    detail::check_length(s.disk.sigma.size(), dg->size());
    return {s, kind};
}

inline void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << '\n';
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    return json::parse(in);
}

namespace detail {
inline std::string fmt(double x) {
    std::ostringstream o;
    o << std::setprecision(17) << x;
    return o.str();
}
}  // namespace detail

/// columns r, mu, R, z, density, potential
inline void write_halo_csv(const std::string& path, const CoupledSteadyState& s) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "r,mu,R,z,density,potential\n";
    const auto& g = *s.halo.grid;
    for (std::size_t i = 0; i < g.n_r(); ++i)
        for (std::size_t a = 0; a < g.n_mu(); ++a) {
            std::size_t k = g.index(i, a);
            out << detail::fmt(g.r(k)) << ',' << detail::fmt(g.mu(a)) << ',' << detail::fmt(g.R(k)) << ','
                << detail::fmt(g.z(k)) << ',' << detail::fmt(s.halo.rho[k]) << ',' << detail::fmt(s.u_halo[k]) << '\n';
        }
}

/// columns R, density, potential
inline void write_disk_csv(const std::string& path, const CoupledSteadyState& s) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "R,density,potential\n";
    const auto& g = *s.disk.grid;
    for (std::size_t i = 0; i < g.size(); ++i)
        out << detail::fmt(g.node(i)) << ',' << detail::fmt(s.disk.sigma[i]) << ',' << detail::fmt(s.u_disk[i]) << '\n';
}

}  // namespace flathalo
