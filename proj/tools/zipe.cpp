// zipe: small-signal and branch-trip studies of ZIP / ZI-E load mixes on case9.
//
//   zipe eig   --family zie --x 0.3 --line dynpi --load-scale 0.5
//   zipe sim   --family zip --x 0.5 --load-scale 0.25 --trip auto --out run/
//   zipe sweep --line statpi,dynpi --load-scale 0.2,0.5,0.8 --jobs 4 --out sweep/
//   zipe plot  --out sweep/

#include "zipe/error.hpp"
#include "zipe/harness.hpp"
#include "zipe/netdata.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace zipe;

namespace {

constexpr int kExitScenario = 1;
constexpr int kExitConfig = 2;

// Thrown for anything the user can fix on the command line.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

NetworkCase open_case(const std::string& spec)
{
    try {
        if (spec == "case9") {
            return case9();
        }
        if (spec == "case9_all_sm") {
            return load_case(case9_all_sm_json());
        }
        return load_case_file(spec);
    } catch (const Error& e) {
        throw ConfigError(std::string("case '") + spec + "': " + e.what());
    }
}

struct Common {
    std::string case_spec = "case9";
    std::string family = "zip";
    double x = 0.0;
    std::string line = "dynpi";
    double load_scale = 1.0;
    std::string out = ".";
};

ScenarioSpec scenario_of(const Common& c)
{
    try {
        ScenarioSpec s;
        s.family = parse_family(c.family);
        s.x = c.x;
        s.line_model = parse_line_model(c.line);
        s.load_scale = c.load_scale;
        s.validate();
        return s;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

void add_common(CLI::App* app, Common& c, bool single)
{
    app->add_option("--case", c.case_spec, "case JSON path, or case9 / case9_all_sm")
        ->capture_default_str();
    app->add_option("--out", c.out, "output directory")->capture_default_str();
    if (single) {
        app->add_option("--family", c.family, "zip or zie")->capture_default_str();
        app->add_option("--x", c.x, "E share of the constant-power part, 0..1")
            ->capture_default_str();
        app->add_option("--line", c.line, "statpi or dynpi")->capture_default_str();
        app->add_option("--load-scale", c.load_scale, "load multiplier")->capture_default_str();
    }
}

void ensure_dir(const std::string& d)
{
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec || !fs::is_directory(d)) {
        throw ConfigError("cannot create output directory '" + d + "'");
    }
}

int report(const ManifestEntry& e)
{
    if (!e.succeeded) {
        std::cerr << e.scenario.id() << ": " << e.error_category << ": " << e.message << '\n';
        return kExitScenario;
    }
    std::cout << e.scenario.id() << ':';
    if (e.max_real_part) {
        std::cout << " max_real_part=" << *e.max_real_part
                  << (e.stable.value_or(false) ? " stable" : " unstable");
    }
    if (e.tripped_branch) {
        std::cout << " trip=" << *e.tripped_branch;
    }
    if (e.outcome) {
        std::cout << " outcome=" << *e.outcome;
    }
    for (const auto& a : e.artifacts) {
        std::cout << ' ' << a;
    }
    std::cout << " (" << e.wall_seconds << " s)\n";
    return 0;
}

std::vector<std::string> files_with(const fs::path& dir, const std::string& prefix,
                                    const std::string& ext)
{
    std::vector<std::string> out;
    for (const auto& de : fs::directory_iterator(dir)) {
        const std::string name = de.path().filename().string();
        if (de.is_regular_file() && name.starts_with(prefix) && de.path().extension() == ext) {
            out.push_back(de.path().string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

int plot(const std::string& dir)
{
    if (!fs::is_directory(dir)) {
        throw ConfigError("no such directory '" + dir + "'");
    }
    int written = 0;
    std::vector<EigenRow> rows;
    for (const auto& f : files_with(dir, "eig_", ".csv")) {
        std::ifstream is(f);
        auto r = read_eigen_csv(is);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    if (!rows.empty()) {
        PlotStyle st;
        st.title = "Eigenvalues";
        write_file_atomic(fs::path(dir) / "eigen_map.svg", emit_eigen_map(rows, st));
        std::cout << "eigen_map.svg (" << rows.size() << " modes)\n";
        ++written;
    }
    std::vector<TraceSeries> series;
    for (const auto& f : files_with(dir, "trace_", ".csv")) {
        std::ifstream is(f);
        TraceSeries s = read_trace_csv(is);
        const std::string stem = fs::path(f).stem().string().substr(6);
        s.label = stem;
        s.family = stem.starts_with("zip") ? Family::ZIP : Family::ZIE;
        std::ifstream meta(fs::path(f).replace_extension(".json"));
        if (meta) {
            std::stringstream ss;
            ss << meta.rdbuf();
            s.truncated = ss.str().find("\"Diverged\"") != std::string::npos;
        }
        series.push_back(std::move(s));
    }
    if (!series.empty()) {
        PlotStyle st;
        st.title = std::string(kBus3InverterCurrent) + " after branch trip";
        write_file_atomic(fs::path(dir) / "traces.svg", emit_traces(series, st));
        std::cout << "traces.svg (" << series.size() << " traces)\n";
        ++written;
    }
    if (written == 0) {
        throw ConfigError("no eig_*.csv or trace_*.csv files in '" + dir + "'");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"ZIP / ZI-E load studies on the WSCC 9-bus system"};
    app.require_subcommand(1);

    Common eig_c;
    auto* eig = app.add_subcommand("eig", "small-signal analysis of one scenario");
    add_common(eig, eig_c, true);

    Common sim_c;
    RunOptions sim_o;
    double sim_tol = sim_o.solver.rtol;
    auto* sim = app.add_subcommand("sim", "branch-trip simulation of one scenario");
    add_common(sim, sim_c, true);
    sim->add_option("--trip", sim_o.trip, "<from>-<to> or auto")->capture_default_str();
    sim->add_option("--t-trip", sim_o.t_trip, "trip time (s)")->capture_default_str();
    sim->add_option("--horizon", sim_o.horizon, "simulated time (s)")->capture_default_str();
    sim->add_option("--tol", sim_tol, "relative tolerance (absolute is 1/100 of it)")
        ->capture_default_str();

    Common sw_c;
    SweepSpec sw;
    std::vector<std::string> sw_fam{"zip", "zie"};
    std::vector<std::string> sw_line{"dynpi"};
    std::vector<std::string> sw_an{"smallsignal"};
    double sw_tol = sw.solver.rtol;
    auto* sweep = app.add_subcommand("sweep", "run the scenario matrix");
    add_common(sweep, sw_c, false);
    sweep->add_option("--family", sw_fam, "families")->delimiter(',')->capture_default_str();
    sweep->add_option("--x", sw.xs, "compositions")->delimiter(',')->capture_default_str();
    sweep->add_option("--line", sw_line, "line models")->delimiter(',')->capture_default_str();
    sweep->add_option("--load-scale", sw.load_scales, "load multipliers")
        ->delimiter(',')
        ->capture_default_str();
    sweep->add_option("--analysis", sw_an, "smallsignal and/or transient")
        ->delimiter(',')
        ->capture_default_str();
    sweep->add_option("--jobs", sw.parallelism, "worker threads")->capture_default_str();
    sweep->add_option("--trip", sw.trip, "<from>-<to> or auto")->capture_default_str();
    sweep->add_option("--t-trip", sw.t_trip, "trip time (s)")->capture_default_str();
    sweep->add_option("--horizon", sw.horizon, "simulated time (s)")->capture_default_str();
    sweep->add_option("--tol", sw_tol, "relative tolerance")->capture_default_str();

    std::string plot_dir = ".";
    auto* pl = app.add_subcommand("plot", "re-emit SVG figures from CSV results");
    pl->add_option("--out", plot_dir, "directory holding eig_*.csv / trace_*.csv")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*eig) {
            const NetworkCase c = open_case(eig_c.case_spec);
            const ScenarioSpec s = scenario_of(eig_c);
            ensure_dir(eig_c.out);
            return report(run_scenario(c, s, Analysis::SmallSignal, {}, eig_c.out));
        }
        if (*sim) {
            const NetworkCase c = open_case(sim_c.case_spec);
            const ScenarioSpec s = scenario_of(sim_c);
            if (!(sim_tol > 0.0) || !(sim_o.horizon > 0.0) ||
                !(sim_o.t_trip >= 0.0 && sim_o.t_trip < sim_o.horizon)) {
                throw ConfigError("need tol > 0 and 0 <= t-trip < horizon");
            }
            if (sim_o.trip != "auto") {
                try {
                    c.branch(sim_o.trip);
                } catch (const Error& e) {
                    throw ConfigError(e.what());
                }
            }
            sim_o.solver.rtol = sim_tol;
            sim_o.solver.atol = sim_tol / 100.0;
            ensure_dir(sim_c.out);
            return report(run_scenario(c, s, Analysis::Transient, sim_o, sim_c.out));
        }
        if (*sweep) {
            const NetworkCase c = open_case(sw_c.case_spec);
            try {
                sw.families.clear();
                for (const auto& f : sw_fam) {
                    sw.families.push_back(parse_family(f));
                }
                sw.line_models.clear();
                for (const auto& l : sw_line) {
                    sw.line_models.push_back(parse_line_model(l));
                }
                sw.analyses.clear();
                for (const auto& a : sw_an) {
                    sw.analyses.push_back(parse_analysis(a));
                }
                if (!(sw_tol > 0.0)) {
                    throw ValidationError("tolerance must be positive");
                }
                sw.solver.rtol = sw_tol;
                sw.solver.atol = sw_tol / 100.0;
                sw.output_dir = sw_c.out;
                sw.validate();
                if (sw.trip != "auto") {
                    c.branch(sw.trip);
                }
            } catch (const Error& e) {
                throw ConfigError(e.what());
            }
            ensure_dir(sw_c.out);
            const Manifest m = run_sweep(sw, c);
            int rc = 0;
            for (const auto& e : m.entries) {
                rc = std::max(rc, report(e));
            }
            std::cout << m.entries.size() << " runs, " << m.failures() << " failed; manifest "
                      << (fs::path(sw_c.out) / "manifest.json").string() << '\n';
            return rc;
        }
        if (*pl) {
            return plot(plot_dir);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitScenario;
    }
    return 0;
}
