#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "coupled.hpp"
#include "decoupled.hpp"
#include "energetics.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "serialization.hpp"
#include "stability.hpp"
#include "verify.hpp"

namespace flathalo::cli {

/// environment variable naming the default output directory
inline constexpr const char* out_env = "FLATHALO_OUT_DIR";

enum ExitCode : int { Success = 0, NumericalFailure = 1, UsageError = 2 };

struct RunConfig {
    std::string command;
    Exponents exponents;
    ConstraintVector constraints{1, 1, 0.3, 0.3};
    SolverConfig solver;
    FlatSolverOptions flat;
    std::size_t n_radial_3d = 1024;
    std::string out_dir;
    unsigned threads = 1;
    std::string suite = "all";
    std::string scan_kind = "coupled";
    std::vector<double> M_values, N_values, Mflat_values, Nflat_values;
    std::string state_path;
    std::size_t count = 50, pairs = 2000;
    std::uint64_t seed = 2024;
};

inline json echo(const RunConfig& c) {
    json j{{"command", c.command}};
    if (c.command == "verify") {
        j["suite"] = c.suite;
        j["seed"] = c.seed;
        j["solver"] = to_json(c.solver);
        return j;
    }
    if (c.command == "solve-3d") {
        j["exponents"] = {{"k", c.exponents.k}};
        j["constraints"] = {{"M", c.constraints.M}, {"N", c.constraints.N}};
        j["n_radial"] = c.n_radial_3d;
        return j;
    }
    if (c.command == "solve-flat") {
        j["exponents"] = {{"k_flat", c.exponents.k_flat}};
        j["constraints"] = {{"M_flat", c.constraints.M_flat}, {"N_flat", c.constraints.N_flat}};
    } else {
        j["exponents"] = {{"k", c.exponents.k}, {"k_flat", c.exponents.k_flat}};
        j["constraints"] = to_json(c.constraints);
    }
    if (c.command == "solve-flat")
        j["flat_solver"] = {{"n_radial", c.flat.n_radial}, {"damping", c.flat.damping}, {"max_sweeps", c.flat.max_sweeps},
                            {"tolerance", c.flat.tolerance}, {"regrid_threshold", c.flat.regrid_threshold},
                            {"domain_factor", c.flat.domain_factor}};
    else j["solver"] = to_json(c.solver);
    if (c.command == "scan") {
        j["kind"] = c.scan_kind;
        j["M_values"] = c.M_values;
        j["N_values"] = c.N_values;
        j["M_flat_values"] = c.Mflat_values;
        j["N_flat_values"] = c.Nflat_values;
    }
    if (c.command == "stability") {
        j["state"] = c.state_path;
        j["count"] = c.count;
        j["pairs"] = c.pairs;
        j["seed"] = c.seed;
    }
    return j;
}

inline json to_json(const Check& c) {
    return {{"suite", c.suite}, {"name", c.name}, {"value", c.value}, {"relation", c.relation},
            {"tolerance", c.tolerance}, {"pass", c.pass}};
}

inline bool all_pass(const std::vector<Check>& checks) {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

namespace detail {

using clock = std::chrono::steady_clock;
using flathalo::detail::fit_loglog;
using flathalo::detail::fmt;

inline double seconds_since(clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
}

inline json base_report(const RunConfig& c) {
    return {{"schema_version", schema_version}, {"tool_version", tool_version}, {"status", "ok"}, {"inputs", echo(c)}};
}

inline void finish_report(json& r, const std::vector<Check>& checks, const RunConfig& c, double solve_s, double total_s) {
    json list = json::array();
    for (const auto& x : checks) list.push_back(to_json(x));
    r["verification"] = list;
    r["passed"] = all_pass(checks);
    r["timings"] = {{"threads", c.threads}, {"solve_seconds", solve_s}, {"total_seconds", total_s}};
}

inline json state_summary(const CoupledSteadyState& s, const EnergyReport& e) {
    return {{"multipliers", to_json(s.multipliers)},
            {"radii", {{"halo", s.halo_radius}, {"disk", s.disk_radius}}},
            {"mass_saturation", "all_nontrivial"},
            {"norms", {{"mass_halo", e.mass_halo}, {"casimir_halo", e.casimir_halo},
                       {"mass_disk", e.mass_disk}, {"casimir_disk", e.casimir_disk}}},
            {"solver", {{"sweeps", s.sweeps}, {"regrids", s.regrids}, {"final_change", s.final_change}}}};
}

inline double rel(double a, double b) { return b != 0 ? std::fabs(a - b) / std::fabs(b) : std::fabs(a); }

/// claims checked on every solved state before it is written
inline std::vector<Check> state_checks(const CoupledSteadyState& s, const EnergyReport& e, StateKind kind) {
    const std::string suite = state_kind_name(kind);
    std::vector<Check> out;
    auto el = euler_lagrange_residual(s);
    bool halo = !s.constraints.halo_trivial(), disk = !s.constraints.disk_trivial();
    // the spherical profile is exact; its grid samples carry second-order interpolation error
    double mass_tol = kind == StateKind::Halo3D ? 1e-3 : 1e-6;
    if (halo) {
        out.push_back(check_below(suite, "halo Euler-Lagrange residual", el.halo, 1e-4));
        out.push_back(check_below(suite, "halo mass constraint", rel(e.mass_halo, s.constraints.M), mass_tol));
        out.push_back(check_below(suite, "halo cutoff energy negative", s.multipliers.E0, 0));
    }
    if (disk) {
        out.push_back(check_below(suite, "disk Euler-Lagrange residual", el.disk, 1e-4));
        out.push_back(check_below(suite, "disk mass constraint", rel(e.mass_disk, s.constraints.M_flat), mass_tol));
        out.push_back(check_below(suite, "disk cutoff energy negative", s.multipliers.E0_flat, 0));
    }
    out.push_back(check_below(suite, "kinetic energy two ways", e.kinetic_discrepancy(), 1e-6));
    if (kind == StateKind::Coupled) {
        out.push_back(check_below(suite, "multiplier formulas against solver", multiplier_consistency(s).max_deviation(), 1e-2));
        if (halo && disk) out.push_back(check_below(suite, "mixed energy two ways", e.mixed_discrepancy(), 1e-4));
        auto sup = support_check(s);
        out.push_back(check_below(suite, "boundary potential over monopole bound", sup.boundary_potential / sup.monopole_bound, 1.05));
    } else {
        double epot = e.epot_halo + e.epot_disk;
        out.push_back(check_below(suite, "virial ratio |2Ekin+Epot|/|Epot|", std::fabs(2 * e.ekin() + epot) / std::fabs(epot), 1e-3));
    }
    return out;
}

inline void write_state_artifacts(const std::filesystem::path& dir, const CoupledSteadyState& s, StateKind kind) {
    write_json((dir / "state.json").string(), state_to_json(s, kind));
    write_halo_csv((dir / "density_halo.csv").string(), s);
    write_disk_csv((dir / "density_disk.csv").string(), s);
}

inline int solve_command(const RunConfig& c, const std::filesystem::path& dir, clock::time_point t0) {
    StateKind kind = c.command == "solve-3d" ? StateKind::Halo3D : c.command == "solve-flat" ? StateKind::Flat : StateKind::Coupled;
    auto ts = clock::now();
    CoupledSteadyState s;
    if (kind == StateKind::Halo3D) s = as_state(solve_decoupled_3d(c.exponents.k, c.constraints.M, c.constraints.N), c.n_radial_3d);
    else if (kind == StateKind::Flat)
        s = as_state(refine_flat(solve_decoupled_flat(c.exponents.k_flat, c.constraints.M_flat, c.constraints.N_flat, c.flat), c.flat));
    else s = solve_coupled(c.exponents, c.constraints, c.solver);
    double solve_s = seconds_since(ts);
    auto e = energy_report(s);
    auto checks = state_checks(s, e, kind);
    write_state_artifacts(dir, s, kind);
    auto r = base_report(c);
    r["summary"] = state_summary(s, e);
    r["energy"] = to_json(e);
    finish_report(r, checks, c, solve_s, seconds_since(t0));
    write_json((dir / "report.json").string(), r);
    for (const auto& x : checks)
        if (!x.pass) std::cerr << "check failed: " << x.name << " = " << x.value << " (" << x.relation << ' ' << x.tolerance << ")\n";
    std::cout << c.command << ": E0=" << s.multipliers.E0 << " E0_flat=" << s.multipliers.E0_flat << " H=" << e.total
              << " -> " << dir.string() << '\n';
    return all_pass(checks) ? Success : NumericalFailure;
}

inline int verify_command(const RunConfig& c, const std::filesystem::path& dir, clock::time_point t0) {
    VerifyContext ctx(c.solver, c.seed);
    std::vector<std::string> suites = c.suite == "all" ? suite_names() : std::vector<std::string>{c.suite};
    std::vector<Check> checks;
    json per_suite = json::object();
    for (const auto& name : suites) {
        auto ts = clock::now();
        auto part = run_suite(name, ctx);
        per_suite[name] = seconds_since(ts);
        for (const auto& x : part) {
            std::cout << (x.pass ? "PASS " : "FAIL ") << x.suite << ": " << x.name << " = " << x.value << ' '
                      << x.relation << ' ' << x.tolerance << '\n';
            checks.push_back(x);
        }
    }
    auto r = base_report(c);
    finish_report(r, checks, c, 0, seconds_since(t0));
    r["timings"]["suite_seconds"] = per_suite;
    write_json((dir / "report.json").string(), r);
    return all_pass(checks) ? Success : NumericalFailure;
}

inline int scan_command(const RunConfig& c, const std::filesystem::path& dir, clock::time_point t0) {
    auto list = [](const std::vector<double>& v, double fallback) { return v.empty() ? std::vector<double>{fallback} : v; };
    bool flat = c.scan_kind == "flat", three = c.scan_kind == "3d";
    auto Ms = list(c.M_values, flat ? 0 : c.constraints.M), Ns = list(c.N_values, flat ? 0 : c.constraints.N);
    auto Mfs = list(c.Mflat_values, three ? 0 : c.constraints.M_flat), Nfs = list(c.Nflat_values, three ? 0 : c.constraints.N_flat);
    std::ofstream csv(dir / "scan.csv");
    if (!csv) throw Error("cannot write scan.csv");
    csv << "M,N,M_flat,N_flat,halo_radius,disk_radius,E0,E0_flat,H\n";
    std::vector<std::array<double, 3>> halo_rows, disk_rows;
    json rows = json::array();
    auto ts = clock::now();
    for (double M : Ms)
        for (double N : Ns)
            for (double Mf : Mfs)
                for (double Nf : Nfs) {
                    CoupledSteadyState s;
                    if (three) s = as_state(solve_decoupled_3d(c.exponents.k, M, N), c.n_radial_3d);
                    else if (flat) s = as_state(refine_flat(solve_decoupled_flat(c.exponents.k_flat, Mf, Nf, c.flat), c.flat));
                    else s = solve_coupled(c.exponents, {M, N, Mf, Nf}, c.solver);
                    double H = energy_report(s).total;
                    csv << fmt(M) << ',' << fmt(N) << ',' << fmt(Mf) << ',' << fmt(Nf) << ',' << fmt(s.halo_radius) << ','
                        << fmt(s.disk_radius) << ',' << fmt(s.multipliers.E0) << ',' << fmt(s.multipliers.E0_flat) << ','
                        << fmt(H) << '\n';
                    rows.push_back({{"M", M}, {"N", N}, {"M_flat", Mf}, {"N_flat", Nf}, {"halo_radius", s.halo_radius},
                                    {"disk_radius", s.disk_radius}, {"E0", s.multipliers.E0},
                                    {"E0_flat", s.multipliers.E0_flat}, {"H", H}});
                    if (!flat) halo_rows.push_back({M, N, s.halo_radius});
                    if (!three) disk_rows.push_back({Mf, Nf, s.disk_radius});
                }
    double solve_s = seconds_since(ts);
    std::vector<Check> checks;
    json fits = json::object();
    auto varied = [](const std::vector<double>& a, const std::vector<double>& b) { return a.size() > 1 && b.size() > 1; };
    double k = c.exponents.k, kf = c.exponents.k_flat;
    if (three && varied(Ms, Ns)) {
        auto s = fit_loglog(halo_rows);
        fits["halo_radius"] = {{"slope_M", s[0]}, {"slope_N", s[1]}};
        checks.push_back(check_below("scan", "3D radius slope in M", rel(s[0], (2 * k - 1) / 3), 1e-2));
        checks.push_back(check_below("scan", "3D radius slope in N", rel(s[1], -(2 * k + 2) / 3), 1e-2));
    }
    if (flat && varied(Mfs, Nfs)) {
        auto s = fit_loglog(disk_rows);
        fits["disk_radius"] = {{"slope_M", s[0]}, {"slope_N", s[1]}};
        checks.push_back(check_below("scan", "flat radius slope in M", rel(s[0], kf), 2e-2));
        checks.push_back(check_below("scan", "flat radius slope in N", rel(s[1], -(kf + 1)), 2e-2));
    }
    if (!three && !flat) {
        if (varied(Ms, Ns) && Mfs.size() == 1 && Nfs.size() == 1) {
            auto s = fit_loglog(halo_rows);
            fits["halo_radius"] = {{"slope_M", s[0]}, {"slope_N", s[1]}};
        }
        if (varied(Mfs, Nfs) && Ms.size() == 1 && Ns.size() == 1) {
            auto s = fit_loglog(disk_rows);
            fits["disk_radius"] = {{"slope_M", s[0]}, {"slope_N", s[1]}};
        }
    }
    auto r = base_report(c);
    r["rows"] = rows;
    r["fits"] = fits;
    finish_report(r, checks, c, solve_s, seconds_since(t0));
    write_json((dir / "report.json").string(), r);
    std::cout << "scan: " << rows.size() << " states -> " << dir.string() << '\n';
    return all_pass(checks) ? Success : NumericalFailure;
}

inline int stability_command(const RunConfig& c, const std::filesystem::path& dir, clock::time_point t0) {
    auto ts = clock::now();
    std::shared_ptr<const CoupledSteadyState> base;
    if (!c.state_path.empty()) base = std::make_shared<const CoupledSteadyState>(state_from_json(read_json(c.state_path)).first);
    else base = std::make_shared<const CoupledSteadyState>(solve_coupled(c.exponents, c.constraints, c.solver));
    auto battery = perturbation_battery(*base, c.count, c.seed, c.pairs);
    std::ofstream csv(dir / "stability.csv");
    if (!csv) throw Error("cannot write stability.csv");
    csv << "index,kind,move_halo,move_disk,magnitude,angle,delta_H,delta_H_error,d,d_error,quadratic,quadratic_error,"
           "residual,residual_error\n";
    json rows = json::array();
    double worst_residual = 0, worst_d = INFINITY;
    for (std::size_t i = 0; i < battery.size(); ++i) {
        const auto& p = battery[i];
        auto e = expansion_check(perturb(base, p));
        worst_residual = std::max(worst_residual, std::fabs(e.residual.value) / std::max(e.residual.error, 1e-300));
        worst_d = std::min(worst_d, e.d.value / e.d.error);
        csv << i << ',' << perturbation_name(p.kind) << ',' << p.move_halo << ',' << p.move_disk << ',' << fmt(p.magnitude)
            << ',' << fmt(p.angle) << ',' << fmt(e.delta_H.value) << ',' << fmt(e.delta_H.error) << ',' << fmt(e.d.value)
            << ',' << fmt(e.d.error) << ',' << fmt(e.quadratic.value) << ',' << fmt(e.quadratic.error) << ','
            << fmt(e.residual.value) << ',' << fmt(e.residual.error) << '\n';
        rows.push_back({{"kind", perturbation_name(p.kind)}, {"move_halo", p.move_halo}, {"move_disk", p.move_disk},
                        {"magnitude", p.magnitude}, {"angle", p.angle}, {"seed", p.seed}, {"pairs", p.pairs},
                        {"delta_H", {e.delta_H.value, e.delta_H.error}}, {"d", {e.d.value, e.d.error}},
                        {"quadratic", {e.quadratic.value, e.quadratic.error}},
                        {"residual", {e.residual.value, e.residual.error}}});
    }
    std::vector<Check> checks{
        check_below("stability", "max |residual| in standard errors", worst_residual, 3),
        check_above("stability", "min d in standard errors", worst_d, 3)};
    auto r = base_report(c);
    r["perturbations"] = rows;
    finish_report(r, checks, c, seconds_since(ts), seconds_since(t0));
    write_json((dir / "report.json").string(), r);
    std::cout << "stability: " << battery.size() << " perturbations -> " << dir.string() << '\n';
    return all_pass(checks) ? Success : NumericalFailure;
}

/// range checks of every subcommand, run before any compute
inline void validate(const RunConfig& c) {
    if (c.command == "solve-3d") {
        Exponents{c.exponents.k, 0.5}.validate();
        if (!(c.constraints.M > 0 && c.constraints.N > 0)) throw DomainError("--M and --N must be positive");
        if (c.n_radial_3d < 16) throw DomainError("grid too coarse");
    } else if (c.command == "solve-flat") {
        Exponents{1.0, c.exponents.k_flat}.validate();
        if (!(c.constraints.M_flat > 0 && c.constraints.N_flat > 0)) throw DomainError("--Mflat and --Nflat must be positive");
        if (c.flat.n_radial < 16) throw DomainError("grid too coarse");
        if (!(c.flat.damping > 0 && c.flat.damping <= 1)) throw DomainError("damping must lie in (0, 1]");
    } else if (c.command == "solve-coupled" || c.command == "stability" || c.command == "scan") {
        c.exponents.validate();
        c.solver.validate();
        if (c.command != "scan" && c.state_path.empty()) {
            c.constraints.validate();
            if (c.constraints.halo_trivial() && c.constraints.disk_trivial()) throw DomainError("all constraints are zero");
        }
        if (c.command == "stability" && c.constraints.halo_trivial() && c.state_path.empty())
            throw DomainError("the perturbation battery needs a halo component");
        if (c.command == "scan") {
            auto positive = [](const std::vector<double>& v, const char* name) {
                for (double x : v)
                    if (!(x > 0)) throw DomainError(std::string(name) + " values must be positive");
            };
            positive(c.M_values, "--M-values");
            positive(c.N_values, "--N-values");
            positive(c.Mflat_values, "--Mflat-values");
            positive(c.Nflat_values, "--Nflat-values");
            if (c.scan_kind == "coupled")
                ConstraintVector{c.M_values.empty() ? c.constraints.M : 1, c.N_values.empty() ? c.constraints.N : 1,
                                 c.Mflat_values.empty() ? c.constraints.M_flat : 1,
                                 c.Nflat_values.empty() ? c.constraints.N_flat : 1}.validate();
        }
    } else if (c.command == "verify") {
        c.solver.validate();
        if (c.suite != "all") {
            const auto& names = suite_names();
            if (std::find(names.begin(), names.end(), c.suite) == names.end())
                throw DomainError("unknown suite '" + c.suite + "'");
        }
    }
}

}  // namespace detail

inline int run(int argc, char** argv) {
    RunConfig c;
    CLI::App app{"Steady states of a flat galaxy coupled to a 3D halo"};
    app.set_version_flag("--version", tool_version);
    app.set_config("--config", "", "TOML file with option values");
    app.require_subcommand(1);

    auto common = [&](CLI::App* sub) {
        sub->add_option("--out", c.out_dir, "output directory");
        sub->add_option("--threads", c.threads, "worker threads, 0 for all cores")->capture_default_str();
    };
    auto halo_flags = [&](CLI::App* sub) {
        sub->add_option("--k", c.exponents.k, "halo polytropic index")->capture_default_str();
        sub->add_option("--M", c.constraints.M, "halo mass")->capture_default_str();
        sub->add_option("--N", c.constraints.N, "halo Casimir bound")->capture_default_str();
    };
    auto disk_flags = [&](CLI::App* sub) {
        sub->add_option("--kflat", c.exponents.k_flat, "disk polytropic index")->capture_default_str();
        sub->add_option("--Mflat", c.constraints.M_flat, "disk mass")->capture_default_str();
        sub->add_option("--Nflat", c.constraints.N_flat, "disk Casimir bound")->capture_default_str();
    };
    auto solver_flags = [&](CLI::App* sub) {
        sub->add_option("--nr", c.solver.grid.n_radial, "radial nodes")->capture_default_str();
        sub->add_option("--nmu", c.solver.grid.n_mu, "polar nodes")->capture_default_str();
        sub->add_option("--domain-factor", c.solver.grid.domain_factor, "grid extent over support radius")->capture_default_str();
        sub->add_option("--damping", c.solver.damping, "Picard damping")->capture_default_str();
        sub->add_option("--max-sweeps", c.solver.max_outer_sweeps, "outer sweep budget")->capture_default_str();
        sub->add_option("--tol", c.solver.density_tolerance, "relative density change at convergence")->capture_default_str();
        sub->add_option("--multiplier-tol", c.solver.multiplier_tolerance, "relative multiplier change at convergence")
            ->capture_default_str();
        sub->add_option("--regrid-threshold", c.solver.regrid_threshold, "support drift triggering a regrid")->capture_default_str();
        sub->add_option("--lmax", c.solver.l_max, "Legendre cutoff, -1 for the polar node count")->capture_default_str();
    };

    auto* s3 = app.add_subcommand("solve-3d", "decoupled spherical halo");
    halo_flags(s3);
    s3->add_option("--nr", c.n_radial_3d, "radial nodes of the sampled state")->capture_default_str();
    common(s3);

    auto* sf = app.add_subcommand("solve-flat", "decoupled razor-thin disk");
    disk_flags(sf);
    sf->add_option("--nr", c.flat.n_radial, "radial nodes")->capture_default_str();
    sf->add_option("--damping", c.flat.damping, "Picard damping")->capture_default_str();
    sf->add_option("--max-sweeps", c.flat.max_sweeps, "sweep budget")->capture_default_str();
    sf->add_option("--tol", c.flat.tolerance, "relative density change at convergence")->capture_default_str();
    common(sf);

    auto* sc = app.add_subcommand("solve-coupled", "coupled halo and disk");
    halo_flags(sc);
    disk_flags(sc);
    solver_flags(sc);
    common(sc);

    auto* ve = app.add_subcommand("verify", "invariant suites of all modules");
    ve->add_option("--suite", c.suite, "all or one of quadrature, potentials, polytropes, coupled, energetics, stability")
        ->capture_default_str();
    ve->add_option("--seed", c.seed, "sampling seed")->capture_default_str();
    solver_flags(ve);
    common(ve);

    auto* scn = app.add_subcommand("scan", "Cartesian sweep over constraint values");
    scn->add_option("--kind", c.scan_kind, "3d, flat or coupled")
        ->check(CLI::IsMember({"3d", "flat", "coupled"}))
        ->capture_default_str();
    halo_flags(scn);
    disk_flags(scn);
    scn->add_option("--M-values", c.M_values, "halo masses")->delimiter(',');
    scn->add_option("--N-values", c.N_values, "halo Casimir bounds")->delimiter(',');
    scn->add_option("--Mflat-values", c.Mflat_values, "disk masses")->delimiter(',');
    scn->add_option("--Nflat-values", c.Nflat_values, "disk Casimir bounds")->delimiter(',');
    solver_flags(scn);
    common(scn);

    auto* st = app.add_subcommand("stability", "perturbation battery around a coupled state");
    halo_flags(st);
    disk_flags(st);
    solver_flags(st);
    st->add_option("--state", c.state_path, "state.json to perturb instead of solving");
    st->add_option("--count", c.count, "number of perturbations")->capture_default_str();
    st->add_option("--pairs", c.pairs, "antithetic sample pairs per component")->capture_default_str();
    st->add_option("--seed", c.seed, "battery seed")->capture_default_str();
    common(st);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? Success : UsageError;
    }
    c.command = app.get_subcommands().front()->get_name();
    if (c.out_dir.empty()) {
        const char* env = std::getenv(out_env);
        c.out_dir = env && *env ? env : "flathalo_out";
    }

    try {
        detail::validate(c);
        if (c.command == "stability" && c.pairs < 2) throw DomainError("--pairs must be at least 2");
        if (c.command == "stability" && c.count == 0) throw DomainError("--count must be positive");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return UsageError;
    }

    auto t0 = detail::clock::now();
    std::filesystem::path dir(c.out_dir);
    try {
        std::filesystem::create_directories(dir);
    } catch (const std::exception& e) {
        std::cerr << "error: cannot create output directory " << dir << ": " << e.what() << '\n';
        return UsageError;
    }
    set_num_threads(c.threads);
    try {
        if (c.command == "verify") return detail::verify_command(c, dir, t0);
        if (c.command == "scan") return detail::scan_command(c, dir, t0);
        if (c.command == "stability") return detail::stability_command(c, dir, t0);
        return detail::solve_command(c, dir, t0);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        auto r = detail::base_report(c);
        r["status"] = "failed";
        r["error"] = e.what();
        if (auto* ce = dynamic_cast<const ConvergenceError*>(&e)) r["diagnostics"] = ce->diagnostics();
        if (auto* ie = dynamic_cast<const InfeasibleError*>(&e)) r["component"] = ie->component();
        r["passed"] = false;
        r["timings"] = {{"threads", c.threads}, {"total_seconds", detail::seconds_since(t0)}};
        try {
            write_json((dir / "report.json").string(), r);
        } catch (const std::exception&) {
        }
        return NumericalFailure;
    }
}

}  // namespace flathalo::cli
