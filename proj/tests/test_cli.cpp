#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "flathalo/serialization.hpp"

using namespace flathalo;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("FLATHALO_CLI");
    return p ? p : FLATHALO_CLI_PATH;
}

fs::path scratch() {
    static fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("flathalo_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct Result {
    int code;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Result run(const std::string& args, const std::string& env = "") {
    auto out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
    std::string cmd = env + " \"" + cli_path() + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
    int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// the subset of JSON Schema used by the shipped schema files
void validate(const json& v, const json& schema, const json& root, const std::string& path) {
    if (schema.contains("$ref")) {
        std::string ref = schema["$ref"];
        ASSERT_EQ(ref.rfind("#/$defs/", 0), 0u) << ref;
        return validate(v, root["$defs"][ref.substr(8)], root, path);
    }
    if (schema.contains("type")) {
        auto is = [&](const std::string& t) {
            if (t == "object") return v.is_object();
            if (t == "array") return v.is_array();
            if (t == "string") return v.is_string();
            if (t == "boolean") return v.is_boolean();
            if (t == "integer") return v.is_number_integer();
            if (t == "number") return v.is_number();
            if (t == "null") return v.is_null();
            return false;
        };
        bool ok = false;
        if (schema["type"].is_array()) {
            for (const auto& t : schema["type"]) ok = ok || is(t);
        } else {
            ok = is(schema["type"]);
        }
        ASSERT_TRUE(ok) << path << " has wrong type: " << v.dump().substr(0, 80);
    }
    if (schema.contains("const")) EXPECT_EQ(v, schema["const"]) << path;
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& e : schema["enum"]) found = found || e == v;
        EXPECT_TRUE(found) << path << " = " << v.dump();
    }
    if (schema.contains("required"))
        for (const auto& key : schema["required"]) EXPECT_TRUE(v.contains(key)) << path << " lacks " << key;
    if (schema.contains("properties"))
        for (const auto& [key, sub] : schema["properties"].items())
            if (v.contains(key)) validate(v[key], sub, root, path + "." + key);
    if (schema.contains("items") && v.is_array())
        for (std::size_t i = 0; i < v.size(); ++i) validate(v[i], schema["items"], root, path + "[" + std::to_string(i) + "]");
}

void conforms(const fs::path& file, const std::string& schema_name) {
    auto schema = read_json((fs::path(FLATHALO_SOURCE_DIR) / "schema" / schema_name).string());
    validate(read_json(file.string()), schema, schema, "$");
}

json without_timings(json r) {
    r.erase("timings");
    return r;
}

const fs::path& coupled_run() {
    static fs::path dir = [] {
        auto d = scratch() / "run1";
        auto r = run("solve-coupled --k 1 --kflat 0.5 --M 1 --N 1 --Mflat 0.3 --Nflat 0.3 --out " + d.string() + "/");
        EXPECT_EQ(r.code, 0) << r.err;
        return d;
    }();
    return dir;
}

double rel(double a, double b) { return b != 0 ? std::fabs(a - b) / std::fabs(b) : std::fabs(a); }

}  // namespace

TEST(Cli, SolveCoupledWritesArtifacts) {
    const auto& d = coupled_run();
    for (const char* f : {"state.json", "density_halo.csv", "density_disk.csv", "report.json"})
        EXPECT_TRUE(fs::exists(d / f)) << f;
    conforms(d / "report.json", "report.schema.json");
    conforms(d / "state.json", "state.schema.json");
    auto r = read_json((d / "report.json").string());
    EXPECT_EQ(r["status"], "ok");
    EXPECT_TRUE(r["passed"].get<bool>());
    EXPECT_GE(r["verification"].size(), 8u);
    for (const auto& c : r["verification"]) EXPECT_TRUE(c.contains("tolerance"));
    EXPECT_LT(r["summary"]["multipliers"]["E0"].get<double>(), 0);
}

TEST(Cli, DensityCsvHeadersAndRows) {
    const auto& d = coupled_run();
    std::ifstream halo(d / "density_halo.csv"), disk(d / "density_disk.csv");
    std::string line;
    std::getline(halo, line);
    EXPECT_EQ(line, "r,mu,R,z,density,potential");
    std::size_t rows = 0;
    while (std::getline(halo, line)) ++rows;
    auto state = read_json((d / "state.json").string());
    EXPECT_EQ(rows, state["halo_density"].size());
    std::getline(disk, line);
    EXPECT_EQ(line, "R,density,potential");
    rows = 0;
    while (std::getline(disk, line)) ++rows;
    EXPECT_EQ(rows, state["disk_density"].size());
}

TEST(Cli, StateRoundTripReproducesNormsAndEnergies) {
    const auto& d = coupled_run();
    auto j = read_json((d / "state.json").string());
    auto [s, kind] = state_from_json(j);
    EXPECT_EQ(kind, StateKind::Coupled);
    auto e = energy_report(s);
    auto r = read_json((d / "report.json").string());
    const auto& en = r["energy"];
    for (const char* key : {"ekin_halo", "ekin_disk", "epot_halo", "epot_disk", "mixed", "total"})
        EXPECT_LT(rel(en[key].get<double>(), to_json(e)[key].get<double>()), 1e-12) << key;
    for (const char* key : {"mass_halo", "casimir_halo", "mass_disk", "casimir_disk"})
        EXPECT_LT(rel(en["norms"][key].get<double>(), to_json(e)["norms"][key].get<double>()), 1e-12) << key;
    EXPECT_EQ(state_to_json(s, kind), j);
}

TEST(Cli, ReportDeterministicAcrossRunsAndThreads) {
    const auto& d = coupled_run();
    auto again = scratch() / "run2";
    auto r = run("solve-coupled --k 1 --kflat 0.5 --M 1 --N 1 --Mflat 0.3 --Nflat 0.3 --threads 2 --out " + again.string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(d / "state.json"), slurp(again / "state.json"));
    EXPECT_EQ(slurp(d / "density_halo.csv"), slurp(again / "density_halo.csv"));
    EXPECT_EQ(without_timings(read_json((d / "report.json").string())),
              without_timings(read_json((again / "report.json").string())));
}

TEST(Cli, OutOfRangeIndexIsUsageError) {
    auto r = run("solve-coupled --k 4");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("(0, 7/2)"), std::string::npos) << r.err;
    EXPECT_EQ(run("solve-flat --kflat 2.5").code, 2);
    EXPECT_EQ(run("solve-3d --M -1").code, 2);
}

TEST(Cli, MalformedArgumentsAreUsageErrors) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("solve-coupled --k abc").code, 2);
    EXPECT_EQ(run("solve-coupled --no-such-flag 1").code, 2);
    EXPECT_EQ(run("verify --suite nothing").code, 2);
    EXPECT_EQ(run("scan --kind sideways").code, 2);
    EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, NonConvergenceIsNumericalFailureWithDiagnostics) {
    auto d = scratch() / "fail";
    auto r = run("solve-coupled --max-sweeps 2 --out " + d.string());
    EXPECT_EQ(r.code, 1);
    EXPECT_FALSE(r.err.empty());
    conforms(d / "report.json", "report.schema.json");
    auto rep = read_json((d / "report.json").string());
    EXPECT_EQ(rep["status"], "failed");
    EXPECT_NE(rep["diagnostics"].get<std::string>().find("sweeps=2"), std::string::npos);
}

TEST(Cli, EnvironmentSetsDefaultOutputDirectory) {
    auto d = scratch() / "from_env";
    auto r = run("solve-3d --k 1 --M 1 --N 1", "FLATHALO_OUT_DIR=\"" + d.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(d / "state.json"));
    EXPECT_TRUE(fs::exists(d / "report.json"));
}

TEST(Cli, DecoupledSolvesAndTheirRoundTrips) {
    for (std::string args : {"solve-3d --k 1.5 --M 2 --N 1", "solve-flat --kflat 0.5 --Mflat 1 --Nflat 2"}) {
        auto d = scratch() / args.substr(0, 8);
        auto r = run(args + " --out " + d.string());
        ASSERT_EQ(r.code, 0) << r.err;
        conforms(d / "report.json", "report.schema.json");
        conforms(d / "state.json", "state.schema.json");
        auto [s, kind] = state_from_json(read_json((d / "state.json").string()));
        auto total = read_json((d / "report.json").string())["energy"]["total"].get<double>();
        EXPECT_LT(rel(energy_report(s).total, total), 1e-12) << args;
        EXPECT_TRUE(read_json((d / "report.json").string())["passed"].get<bool>()) << args;
    }
}

TEST(Cli, ConfigFileSuppliesOptions) {
    auto cfg = scratch() / "run.toml";
    std::ofstream(cfg) << "[solve-3d]\nk = 1.5\nM = 2\nN = 0.5\n";
    auto d = scratch() / "cfg";
    auto r = run("--config " + cfg.string() + " solve-3d --out " + d.string());
    ASSERT_EQ(r.code, 0) << r.err;
    auto in = read_json((d / "report.json").string())["inputs"];
    EXPECT_EQ(in["exponents"]["k"].get<double>(), 1.5);
    EXPECT_EQ(in["constraints"]["N"].get<double>(), 0.5);
}

TEST(Cli, ScanEmitsRadiusTableAndFits) {
    auto d = scratch() / "scan";
    auto r = run("scan --kind 3d --k 1 --M-values 0.5,1,2 --N-values 0.5,1,2 --out " + d.string());
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream csv(d / "scan.csv");
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "M,N,M_flat,N_flat,halo_radius,disk_radius,E0,E0_flat,H");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 9);
    auto rep = read_json((d / "report.json").string());
    conforms(d / "report.json", "report.schema.json");
    EXPECT_NEAR(rep["fits"]["halo_radius"]["slope_M"].get<double>(), 1.0 / 3, 1e-3);
    EXPECT_NEAR(rep["fits"]["halo_radius"]["slope_N"].get<double>(), -4.0 / 3, 1e-3);
}

TEST(Cli, StabilityFromSavedState) {
    const auto& base = coupled_run();
    auto d = scratch() / "stab";
    auto r = run("stability --state " + (base / "state.json").string() + " --count 3 --pairs 300 --seed 5 --out " + d.string());
    ASSERT_EQ(r.code, 0) << r.err;
    conforms(d / "report.json", "report.schema.json");
    auto rep = read_json((d / "report.json").string());
    EXPECT_EQ(rep["perturbations"].size(), 3u);
    EXPECT_TRUE(fs::exists(d / "stability.csv"));
}

TEST(Cli, VerifyAllSuites) {
    auto d = scratch() / "verify";
    auto r = run("verify --suite all --out " + d.string());
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    conforms(d / "report.json", "report.schema.json");
    auto rep = read_json((d / "report.json").string());
    EXPECT_TRUE(rep["passed"].get<bool>());
    std::set<std::string> suites;
    for (const auto& c : rep["verification"]) suites.insert(c["suite"].get<std::string>());
    EXPECT_EQ(suites.size(), 6u);
    EXPECT_NE(r.out.find("PASS"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}
