#pragma once

#include "zipe/dae.hpp"
#include "zipe/netdata.hpp"
#include "zipe/smallsignal.hpp"
#include "zipe/transient.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace zipe {

enum class Analysis { SmallSignal, Transient };

std::string to_string(Analysis a);
Analysis parse_analysis(std::string_view s);

struct SweepSpec {
    std::vector<Family> families{Family::ZIP, Family::ZIE};
    std::vector<double> xs{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<LineModel> line_models{LineModel::DynPi};
    std::vector<double> load_scales{0.2, 0.5, 0.8};
    std::vector<Analysis> analyses{Analysis::SmallSignal};
    std::filesystem::path output_dir = "out";
    int parallelism = 1;

    /// Branch to trip for transient runs; "auto" picks the heaviest-loaded line.
    std::string trip = "auto";
    double t_trip = 0.1;
    double horizon = 5.0;
    SolverSettings solver;

    void validate() const;
    /// Scenario grid in family, x, line model, load scale order.
    std::vector<ScenarioSpec> scenarios() const;
};

struct ManifestEntry {
    ScenarioSpec scenario;
    Analysis analysis = Analysis::SmallSignal;
    bool succeeded = false;
    std::string error_category;
    std::string message;
    /// Paths relative to the output directory.
    std::vector<std::string> artifacts;
    double wall_seconds = 0.0;
    std::optional<double> max_real_part;
    std::optional<bool> stable;
    std::optional<std::string> outcome;
    std::optional<std::string> tripped_branch;
};

struct Manifest {
    std::filesystem::path output_dir;
    std::vector<ManifestEntry> entries;

    std::size_t failures() const;
};

/// Options for one scenario run, shared by the sweep and the single-run commands.
struct RunOptions {
    std::string trip = "auto";
    double t_trip = 0.1;
    double horizon = 5.0;
    SolverSettings solver;
};

/// Runs one analysis for one scenario and writes its artifacts. Exceptions are
/// caught and reported through the entry.
ManifestEntry run_scenario(const NetworkCase& c, const ScenarioSpec& scenario, Analysis analysis,
                           const RunOptions& options, const std::filesystem::path& out_dir);

/// Runs the grid on `parallelism` workers and writes manifest.json.
/// Throws Error when the output directory cannot be created or written.
Manifest run_sweep(const SweepSpec& spec, const NetworkCase& c);

std::string manifest_json(const Manifest& m);

/// Maps a caught exception onto a short category label for the manifest.
std::string error_category(const std::exception& e);

/// Resolves "auto" (heaviest-loaded line at load_scale 1) or an explicit id ("4-5").
std::string resolve_trip(const NetworkCase& c, const ScenarioSpec& scenario, const std::string& trip);

std::string eigen_csv_name(const ScenarioSpec& s);
std::string trace_csv_name(const ScenarioSpec& s);
std::string trace_meta_name(const ScenarioSpec& s);

// Figures

struct EigenRow {
    Family family = Family::ZIP;
    double x = 0.0;
    LineModel line_model = LineModel::DynPi;
    double load_scale = 1.0;
    double re = 0.0;
    double im = 0.0;
    bool is_reference_mode = false;
};

struct PlotStyle {
    int width = 800;
    int height = 600;
    std::string title;
    std::optional<std::pair<double, double>> x_range;
    std::optional<std::pair<double, double>> y_range;
    double marker_radius = 3.0;
};

std::vector<EigenRow> eigen_rows(const ScenarioSpec& s, const EigenReport& rep);
std::vector<EigenRow> read_eigen_csv(std::istream& is);

/// Complex-plane scatter, red for ZIP and blue for ZI-E, darker with larger x.
/// Each mode is one element with class "marker"; the reference mode is drawn
/// as a cross. Throws DomainError for empty input.
std::string emit_eigen_map(const std::vector<EigenRow>& rows, const PlotStyle& style = {});

struct TraceSeries {
    std::string label;
    Family family = Family::ZIP;
    std::vector<double> t;
    std::vector<double> values;
    /// Integration stopped early; flagged in the legend.
    bool truncated = false;
};

/// Reads one signal from a trace CSV written by write_trace_csv.
TraceSeries read_trace_csv(std::istream& is, const std::string& signal = kBus3InverterCurrent);

/// Line plot of the series with one legend entry each. Throws DomainError for
/// empty input.
std::string emit_traces(const std::vector<TraceSeries>& series, const PlotStyle& style = {});

/// Writes text to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace zipe
