#include "zipe/harness.hpp"

#include "zipe/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace zipe {

namespace fs = std::filesystem;

std::string to_string(Analysis a) { return a == Analysis::SmallSignal ? "smallsignal" : "transient"; }

Analysis parse_analysis(std::string_view s)
{
    if (s == "smallsignal") {
        return Analysis::SmallSignal;
    }
    if (s == "transient") {
        return Analysis::Transient;
    }
    throw ParseError("unknown analysis '" + std::string(s) + "'");
}

void SweepSpec::validate() const
{
    if (families.empty() || xs.empty() || line_models.empty() || load_scales.empty() ||
        analyses.empty()) {
        throw ValidationError("sweep lists must be non-empty");
    }
    for (double x : xs) {
        if (!(x >= 0.0 && x <= 1.0)) {
            throw ValidationError("composition x must lie in [0, 1]");
        }
    }
    for (double ls : load_scales) {
        if (!(ls > 0.0) || !std::isfinite(ls)) {
            throw ValidationError("load scales must be positive");
        }
    }
    if (parallelism < 1) {
        throw ValidationError("parallelism must be at least 1");
    }
    if (!(horizon > 0.0) || !(t_trip >= 0.0 && t_trip < horizon)) {
        throw ValidationError("trip time must lie in [0, horizon)");
    }
}

std::vector<ScenarioSpec> SweepSpec::scenarios() const
{
    std::vector<ScenarioSpec> out;
    for (Family f : families) {
        for (double x : xs) {
            for (LineModel lm : line_models) {
                for (double ls : load_scales) {
                    ScenarioSpec s;
                    s.family = f;
                    s.x = x;
                    s.line_model = lm;
                    s.load_scale = ls;
                    out.push_back(s);
                }
            }
        }
    }
    return out;
}

std::size_t Manifest::failures() const
{
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.succeeded; }));
}

std::string error_category(const std::exception& e)
{
    if (dynamic_cast<const AlgebraicSingularityError*>(&e)) {
        return "algebraic_singularity";
    }
    if (dynamic_cast<const SingularMatrixError*>(&e)) {
        return "singular_matrix";
    }
    if (dynamic_cast<const ConvergenceError*>(&e)) {
        return "convergence";
    }
    if (dynamic_cast<const InitializationError*>(&e)) {
        return "initialization";
    }
    if (dynamic_cast<const InfeasibleOperatingPoint*>(&e)) {
        return "infeasible_operating_point";
    }
    if (dynamic_cast<const VoltageFloorError*>(&e)) {
        return "voltage_floor";
    }
    if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e)) {
        return "invalid_input";
    }
    if (dynamic_cast<const DomainError*>(&e)) {
        return "domain";
    }
    return "error";
}

std::string resolve_trip(const NetworkCase& c, const ScenarioSpec& scenario, const std::string& trip)
{
    if (trip != "auto") {
        c.branch(trip);
        return trip;
    }
    // Ranked at nominal dispatch so every load scale trips the same branch.
    ScenarioSpec nominal = scenario;
    nominal.load_scale = 1.0;
    nominal.event.reset();
    const SystemModel sys = assemble(c, nominal);
    return heaviest_loaded_branch(solve_scenario_power_flow(sys), sys.network);
}

std::string eigen_csv_name(const ScenarioSpec& s) { return "eig_" + s.id() + ".csv"; }
std::string trace_csv_name(const ScenarioSpec& s) { return "trace_" + s.id() + ".csv"; }
std::string trace_meta_name(const ScenarioSpec& s) { return "trace_" + s.id() + ".json"; }

void write_file_atomic(const fs::path& path, const std::string& text)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw Error("cannot write " + tmp.string());
        }
        os << text;
        if (!os.flush()) {
            throw Error("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw Error("cannot rename " + tmp.string() + ": " + ec.message());
    }
}

ManifestEntry run_scenario(const NetworkCase& c, const ScenarioSpec& scenario, Analysis analysis,
                           const RunOptions& options, const fs::path& out_dir)
{
    const auto t0 = std::chrono::steady_clock::now();
    ManifestEntry e;
    e.scenario = scenario;
    e.analysis = analysis;
    try {
        if (analysis == Analysis::SmallSignal) {
            const EquilibriumPoint eq = equilibrium_for(c, scenario);
            const EigenReport rep = analyze(eq);
            std::ostringstream os;
            write_eigen_csv_header(os);
            write_eigen_csv(os, scenario, rep);
            write_file_atomic(out_dir / eigen_csv_name(scenario), os.str());
            e.artifacts.push_back(eigen_csv_name(scenario));
            e.max_real_part = rep.max_real_part;
            e.stable = rep.stable;
        } else {
            const std::string branch = resolve_trip(c, scenario, options.trip);
            e.tripped_branch = branch;
            ScenarioSpec s = scenario;
            s.event = BranchEvent{branch, options.t_trip};
            const EquilibriumPoint eq = equilibrium_for(c, s);
            const TransientResult r = simulate(eq, s.event, options.horizon, options.solver);
            std::ostringstream os;
            write_trace_csv(os, r);
            write_file_atomic(out_dir / trace_csv_name(scenario), os.str());
            write_file_atomic(out_dir / trace_meta_name(scenario), metadata_json(r));
            e.artifacts.push_back(trace_csv_name(scenario));
            e.artifacts.push_back(trace_meta_name(scenario));
            e.outcome = to_string(r.outcome.kind);
        }
        e.succeeded = true;
    } catch (const std::exception& ex) {
        e.succeeded = false;
        e.error_category = error_category(ex);
        e.message = ex.what();
    }
    e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return e;
}

std::string manifest_json(const Manifest& m)
{
    nlohmann::json j;
    j["output_dir"] = m.output_dir.string();
    j["entries"] = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json je;
        je["scenario"] = {{"id", e.scenario.id()},
                          {"family", to_string(e.scenario.family)},
                          {"x", e.scenario.x},
                          {"line_model", to_string(e.scenario.line_model)},
                          {"load_scale", e.scenario.load_scale},
                          {"generation_portfolio", e.scenario.generation_portfolio}};
        je["analysis"] = to_string(e.analysis);
        je["status"] = e.succeeded ? "Succeeded" : "Failed";
        if (!e.succeeded) {
            je["error_category"] = e.error_category;
            je["message"] = e.message;
        }
        je["artifacts"] = e.artifacts;
        je["wall_seconds"] = e.wall_seconds;
        if (e.max_real_part) {
            je["max_real_part"] = *e.max_real_part;
        }
        if (e.stable) {
            je["stable"] = *e.stable;
        }
        if (e.outcome) {
            je["outcome"] = *e.outcome;
        }
        if (e.tripped_branch) {
            je["tripped_branch"] = *e.tripped_branch;
        }
        j["entries"].push_back(std::move(je));
    }
    return j.dump(2);
}

Manifest run_sweep(const SweepSpec& spec, const NetworkCase& c)
{
    spec.validate();
    std::error_code ec;
    fs::create_directories(spec.output_dir, ec);
    if (ec || !fs::is_directory(spec.output_dir)) {
        throw Error("cannot create output directory " + spec.output_dir.string());
    }

    struct Job {
        ScenarioSpec scenario;
        Analysis analysis;
    };
    std::vector<Job> jobs;
    for (const auto& s : spec.scenarios()) {
        for (Analysis a : spec.analyses) {
            jobs.push_back({s, a});
        }
    }
    const RunOptions opts{spec.trip, spec.t_trip, spec.horizon, spec.solver};

    std::vector<ManifestEntry> entries(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            entries[k] = run_scenario(c, jobs[k].scenario, jobs[k].analysis, opts, spec.output_dir);
        }
    };
    const auto n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(spec.parallelism), std::max<std::size_t>(jobs.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& th : pool) {
        th.join();
    }

    Manifest m;
    m.output_dir = spec.output_dir;
    m.entries = std::move(entries);
    write_file_atomic(spec.output_dir / "manifest.json", manifest_json(m));
    return m;
}

// Figures ----------------------------------------------------------------

std::vector<EigenRow> eigen_rows(const ScenarioSpec& s, const EigenReport& rep)
{
    std::vector<EigenRow> rows;
    for (std::size_t k = 0; k < rep.eigenvalues.size(); ++k) {
        rows.push_back({s.family, s.x, s.line_model, s.load_scale, rep.eigenvalues[k].real(),
                        rep.eigenvalues[k].imag(), rep.is_reference_mode[k]});
    }
    return rows;
}

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) {
        out.push_back(cur);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double to_double(const std::string& s)
{
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ParseError("not a number: '" + s + "'");
    }
    if (pos != s.size()) {
        throw ParseError("not a number: '" + s + "'");
    }
    return v;
}

// Shade of red (ZIP) or blue (ZI-E); x = 0 is light, x = 1 is saturated.
std::string family_color(Family f, double x)
{
    const double t = std::clamp(x, 0.0, 1.0);
    const int light = static_cast<int>(std::lround(200.0 * (1.0 - t)));
    const int full = static_cast<int>(std::lround(255.0 - 75.0 * t));
    char buf[8];
    if (f == Family::ZIP) {
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", full, light, light);
    } else {
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", light, light, full);
    }
    return buf;
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '&':
            out += "&amp;";
            break;
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '"':
            out += "&quot;";
            break;
        default:
            out += ch;
        }
    }
    return out;
}

struct Frame {
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    double left = 70, right = 20, top = 40, bottom = 50;
    int w = 800;
    int h = 600;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * (w - left - right); }
    double py(double y) const { return top + (y1 - y) / (y1 - y0) * (h - top - bottom); }
};

std::pair<double, double> padded(double lo, double hi)
{
    if (!(hi > lo)) {
        const double m = std::max(std::abs(lo), 1.0) * 0.05;
        return {lo - m, hi + m};
    }
    const double m = 0.05 * (hi - lo);
    return {lo - m, hi + m};
}

void axes(std::ostringstream& os, const Frame& f, const PlotStyle& st, const std::string& xl,
          const std::string& yl)
{
    os << "<rect x=\"0\" y=\"0\" width=\"" << f.w << "\" height=\"" << f.h
       << "\" fill=\"white\"/>\n";
    os << "<rect class=\"axes\" x=\"" << fmt(f.left) << "\" y=\"" << fmt(f.top) << "\" width=\""
       << fmt(f.w - f.left - f.right) << "\" height=\"" << fmt(f.h - f.top - f.bottom)
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
        const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
        os << "<text x=\"" << fmt(f.px(xv)) << "\" y=\"" << fmt(f.h - f.bottom + 16)
           << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
        os << "<text x=\"" << fmt(f.left - 6) << "\" y=\"" << fmt(f.py(yv) + 4)
           << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
    }
    os << "<text x=\"" << fmt((f.left + f.w - f.right) / 2) << "\" y=\"" << f.h - 8
       << "\" font-size=\"13\" text-anchor=\"middle\">" << xml_escape(xl) << "</text>\n";
    os << "<text x=\"14\" y=\"" << fmt((f.top + f.h - f.bottom) / 2)
       << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
       << fmt((f.top + f.h - f.bottom) / 2) << ")\">" << xml_escape(yl) << "</text>\n";
    if (!st.title.empty()) {
        os << "<text x=\"" << f.w / 2 << "\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">"
           << xml_escape(st.title) << "</text>\n";
    }
}

std::string svg_open(int w, int h)
{
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
           "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
           std::to_string(h) + "\">\n";
}

}  // namespace

std::vector<EigenRow> read_eigen_csv(std::istream& is)
{
    std::vector<EigenRow> rows;
    std::string line;
    if (!std::getline(is, line)) {
        throw ParseError("empty eigenvalue CSV");
    }
    const auto head = split_csv(line);
    if (head.size() != 10 || head[0] != "scenario_id") {
        throw ParseError("unexpected eigenvalue CSV header");
    }
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != 10) {
            throw ParseError("line " + std::to_string(lineno) + ": expected 10 fields");
        }
        EigenRow r;
        r.family = parse_family(f[1]);
        r.x = to_double(f[2]);
        r.line_model = parse_line_model(f[3]);
        r.load_scale = to_double(f[4]);
        r.re = to_double(f[5]);
        r.im = to_double(f[6]);
        r.is_reference_mode = f[9] == "1";
        rows.push_back(r);
    }
    return rows;
}

std::string emit_eigen_map(const std::vector<EigenRow>& rows, const PlotStyle& style)
{
    if (rows.empty()) {
        throw DomainError("no eigenvalues to plot");
    }
    double re_lo = rows[0].re, re_hi = rows[0].re, im_abs = 0.0;
    for (const auto& r : rows) {
        re_lo = std::min(re_lo, r.re);
        re_hi = std::max(re_hi, r.re);
        im_abs = std::max(im_abs, std::abs(r.im));
    }
    const auto xr = style.x_range.value_or(padded(re_lo, re_hi));
    // Symmetric imaginary axis so conjugate pairs mirror about the middle.
    const double ym = im_abs > 0.0 ? 1.05 * im_abs : 1.0;
    const auto yr = style.y_range.value_or(std::pair{-ym, ym});
    Frame f;
    f.x0 = xr.first;
    f.x1 = xr.second;
    f.y0 = yr.first;
    f.y1 = yr.second;
    f.w = style.width;
    f.h = style.height;

    std::ostringstream os;
    os << svg_open(f.w, f.h);
    axes(os, f, style, "Re (1/s)", "Im (rad/s)");
    if (f.y0 < 0.0 && f.y1 > 0.0) {
        os << "<line x1=\"" << fmt(f.left) << "\" y1=\"" << fmt(f.py(0)) << "\" x2=\""
           << fmt(f.w - f.right) << "\" y2=\"" << fmt(f.py(0))
           << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    }
    if (f.x0 < 0.0 && f.x1 > 0.0) {
        os << "<line x1=\"" << fmt(f.px(0)) << "\" y1=\"" << fmt(f.top) << "\" x2=\"" << fmt(f.px(0))
           << "\" y2=\"" << fmt(f.h - f.bottom) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    }
    const double rad = style.marker_radius;
    for (const auto& r : rows) {
        const double cx = f.px(r.re);
        const double cy = f.py(r.im);
        if (r.is_reference_mode) {
            os << "<path class=\"marker reference\" d=\"M" << fmt(cx - rad) << ' ' << fmt(cy - rad)
               << " L" << fmt(cx + rad) << ' ' << fmt(cy + rad) << " M" << fmt(cx - rad) << ' '
               << fmt(cy + rad) << " L" << fmt(cx + rad) << ' ' << fmt(cy - rad)
               << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
        } else {
            os << "<circle class=\"marker\" cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\""
               << fmt(rad) << "\" fill=\"" << family_color(r.family, r.x)
               << "\" fill-opacity=\"0.8\"/>\n";
        }
    }
    // Legend: one swatch per family present.
    double ly = f.top + 14;
    for (Family fam : {Family::ZIP, Family::ZIE}) {
        if (std::none_of(rows.begin(), rows.end(), [&](const auto& r) { return r.family == fam; })) {
            continue;
        }
        os << "<g class=\"legend\"><rect x=\"" << fmt(f.w - f.right - 110) << "\" y=\"" << fmt(ly - 9)
           << "\" width=\"10\" height=\"10\" fill=\"" << family_color(fam, 1.0) << "\"/><text x=\""
           << fmt(f.w - f.right - 95) << "\" y=\"" << fmt(ly) << "\" font-size=\"12\">"
           << xml_escape(to_string(fam)) << " (x: light to dark)</text></g>\n";
        ly += 16;
    }
    os << "</svg>\n";
    return os.str();
}

TraceSeries read_trace_csv(std::istream& is, const std::string& signal)
{
    std::string line;
    if (!std::getline(is, line)) {
        throw ParseError("empty trace CSV");
    }
    const auto head = split_csv(line);
    if (head.empty() || head[0] != "t") {
        throw ParseError("trace CSV must start with a t column");
    }
    const auto it = std::find(head.begin(), head.end(), signal);
    if (it == head.end()) {
        throw ParseError("trace CSV has no column '" + signal + "'");
    }
    const auto col = static_cast<std::size_t>(it - head.begin());
    TraceSeries s;
    s.label = signal;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != head.size()) {
            throw ParseError("trace CSV row has " + std::to_string(f.size()) + " fields, expected " +
                             std::to_string(head.size()));
        }
        s.t.push_back(to_double(f[0]));
        s.values.push_back(to_double(f[col]));
    }
    return s;
}

std::string emit_traces(const std::vector<TraceSeries>& series, const PlotStyle& style)
{
    if (series.empty()) {
        throw DomainError("no traces to plot");
    }
    double t_lo = 0.0, t_hi = 0.0, v_lo = 0.0, v_hi = 0.0;
    bool first = true;
    for (const auto& s : series) {
        if (s.t.size() != s.values.size()) {
            throw DomainError("trace '" + s.label + "' has mismatched lengths");
        }
        for (std::size_t k = 0; k < s.t.size(); ++k) {
            if (first) {
                t_lo = t_hi = s.t[k];
                v_lo = v_hi = s.values[k];
                first = false;
            }
            t_lo = std::min(t_lo, s.t[k]);
            t_hi = std::max(t_hi, s.t[k]);
            v_lo = std::min(v_lo, s.values[k]);
            v_hi = std::max(v_hi, s.values[k]);
        }
    }
    if (first) {
        throw DomainError("all traces are empty");
    }
    const auto xr = style.x_range.value_or(std::pair{t_lo, t_hi > t_lo ? t_hi : t_lo + 1.0});
    const auto yr = style.y_range.value_or(padded(v_lo, v_hi));
    Frame f;
    f.x0 = xr.first;
    f.x1 = xr.second;
    f.y0 = yr.first;
    f.y1 = yr.second;
    f.w = style.width;
    f.h = style.height;

    std::ostringstream os;
    os << svg_open(f.w, f.h);
    axes(os, f, style, "t (s)", series.size() == 1 ? series[0].label : "signal (pu)");

    // Same-family series get progressively darker shades.
    std::size_t n_zip = 0, n_zie = 0;
    for (const auto& s : series) {
        (s.family == Family::ZIP ? n_zip : n_zie)++;
    }
    std::size_t k_zip = 0, k_zie = 0;
    double ly = f.top + 14;
    for (const auto& s : series) {
        const bool zip = s.family == Family::ZIP;
        const std::size_t n = zip ? n_zip : n_zie;
        const std::size_t k = zip ? k_zip++ : k_zie++;
        const std::string color = family_color(s.family, n > 1 ? 0.3 + 0.7 * k / (n - 1.0) : 1.0);
        // Decimate to at most ~4 points per horizontal pixel, keeping extremes.
        const std::size_t stride = std::max<std::size_t>(1, s.t.size() / (4 * static_cast<std::size_t>(f.w)));
        os << "<polyline class=\"trace\" fill=\"none\" stroke=\"" << color
           << "\" stroke-width=\"1.2\" points=\"";
        for (std::size_t i = 0; i < s.t.size(); i += stride) {
            std::size_t lo = i, hi = i;
            for (std::size_t j = i; j < std::min(i + stride, s.t.size()); ++j) {
                if (s.values[j] < s.values[lo]) {
                    lo = j;
                }
                if (s.values[j] > s.values[hi]) {
                    hi = j;
                }
            }
            for (std::size_t j : {std::min(lo, hi), std::max(lo, hi)}) {
                os << fmt(f.px(s.t[j])) << ',' << fmt(f.py(s.values[j])) << ' ';
                if (lo == hi) {
                    break;
                }
            }
        }
        os << "\"/>\n";
        const std::string label = s.label + (s.truncated ? " (diverged, truncated)" : "");
        os << "<g class=\"legend" << (s.truncated ? " truncated" : "") << "\"><line x1=\""
           << fmt(f.left + 10) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(f.left + 30)
           << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\""
           << fmt(f.left + 36) << "\" y=\"" << fmt(ly) << "\" font-size=\"12\">" << xml_escape(label)
           << "</text></g>\n";
        ly += 16;
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace zipe
