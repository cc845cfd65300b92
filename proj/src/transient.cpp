#include "zipe/transient.hpp"

#include "zipe/error.hpp"

#include "json.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace zipe {

std::string to_string(OutcomeKind k)
{
    switch (k) {
    case OutcomeKind::Converged:
        return "Converged";
    case OutcomeKind::Diverged:
        return "Diverged";
    case OutcomeKind::MaxTimeReached:
        return "MaxTimeReached";
    }
    return "?";
}

const std::vector<double>& TransientResult::signal(const std::string& name) const
{
    const auto it = signals.find(name);
    if (it == signals.end()) {
        throw ValidationError("no recorded signal named '" + name + "'");
    }
    return it->second;
}

namespace {

// TR-BDF2 written as a three-stage ESDIRK with an explicit first stage.
const double kGamma = 2.0 - std::sqrt(2.0);
const double kD = kGamma / 2.0;
const double kW = std::sqrt(2.0) / 4.0;
const double kB[3] = {kW, kW, kD};
const double kBhat[3] = {(1.0 - kW) / 3.0, (3.0 * kW + 1.0) / 3.0, kD / 3.0};

bool has_gfl_at(const SystemModel& s, int bus_id)
{
    const auto& buses = s.network.buses;
    for (const auto& sl : s.slots) {
        if (sl.kind == SlotKind::Gfl && buses[static_cast<std::size_t>(sl.bus)].id == bus_id) {
            return true;
        }
    }
    return false;
}

class Integrator {
public:
    Integrator(const EquilibriumPoint& eq, const SolverSettings& st)
        : sys_(eq.system), st_(st), x_(eq.x0), y_(eq.y0)
    {
        eval(x_, y_, f_, g_);
    }

    const SystemModel& system() const { return sys_; }
    const Eigen::VectorXd& x() const { return x_; }
    const Eigen::VectorXd& y() const { return y_; }
    const Eigen::VectorXd& f() const { return f_; }
    double t() const { return t_; }
    double h() const { return h_; }
    void set_h(double h) { h_ = h; }
    SolverStats& stats() { return stats_; }

    // Previous accepted point, for dense output.
    const Eigen::VectorXd& x_prev() const { return xp_; }
    const Eigen::VectorXd& y_prev() const { return yp_; }
    const Eigen::VectorXd& f_prev() const { return fp_; }
    double t_prev() const { return tp_; }

    // Algebraic variables consistent with an interpolated state: a few
    // simplified Newton iterations on g(x, y) = 0 with the last g_y.
    Eigen::VectorXd consistent_y(const Eigen::VectorXd& x, Eigen::VectorXd y)
    {
        if (sys_.n_alg == 0) {
            return y;
        }
        if (!jac_valid_) {
            refresh_jacobian();
        }
        Eigen::VectorXd f, g;
        for (int it = 0; it < 4; ++it) {
            if (!try_eval(x, y, f, g) || g.cwiseAbs().maxCoeff() < 1e-11) {
                break;
            }
            y -= gy_lu_.solve(g);
        }
        return y;
    }

    void replace_model(SystemModel s, Eigen::VectorXd x, Eigen::VectorXd y)
    {
        sys_ = std::move(s);
        x_ = std::move(x);
        y_ = std::move(y);
        eval(x_, y_, f_, g_);
        jac_valid_ = false;
        lu_valid_ = false;
    }

    // Attempts one step of size h_ without passing t_stop. Returns true when
    // accepted; h_ is updated either way.
    bool step(double t_stop)
    {
        double h = std::min(h_, t_stop - t_);
        // Avoid leaving a sliver before the stop time.
        if (t_stop - (t_ + h) < 1e-3 * h) {
            h = t_stop - t_;
        }
        if (!jac_valid_) {
            refresh_jacobian();
        }
        if (!lu_valid_ || std::abs(h / h_fact_ - 1.0) > 0.2) {
            factorize(h);
        }

        const int nd = sys_.n_diff;
        const int na = sys_.n_alg;
        Eigen::VectorXd x2, y2, f2, g2, x3, y3, f3, g3;

        // Stage 2 at t + gamma h.
        Eigen::VectorXd base = x_ + h * kD * f_;
        x2 = x_ + kGamma * h * f_;
        y2 = y_;
        bool ok = newton(base, h, x2, y2);
        if (ok) {
            ok = try_eval(x2, y2, f2, g2);
        }
        if (ok) {
            base = x_ + h * (kW * f_ + kW * f2);
            x3 = base + h * kD * f2;
            y3 = y2;
            ok = newton(base, h, x3, y3);
        }
        if (ok) {
            ok = try_eval(x3, y3, f3, g3);
        }
        if (!ok) {
            ++stats_.newton_failures;
            ++stats_.rejected;
            if (jac_age_ > 0) {
                jac_valid_ = false;
            } else {
                h_ = 0.25 * h;
            }
            lu_valid_ = false;
            return false;
        }

        Eigen::VectorXd err =
            h * ((kB[0] - kBhat[0]) * f_ + (kB[1] - kBhat[1]) * f2 + (kB[2] - kBhat[2]) * f3);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nd + na);
        rhs.head(nd) = err;
        const Eigen::VectorXd filtered = lu_.solve(rhs);
        double acc = 0.0;
        for (int k = 0; k < nd; ++k) {
            const double sc = st_.atol + st_.rtol * std::max(std::abs(x_[k]), std::abs(x3[k]));
            const double e = filtered[k] / sc;
            acc += e * e;
        }
        const double en = nd > 0 ? std::sqrt(acc / nd) : 0.0;
        const double fac =
            en > 0.0 ? std::min(5.0, std::max(0.2, 0.9 * std::pow(en, -1.0 / 3.0))) : 5.0;

        if (!(en <= 1.0)) {
            ++stats_.rejected;
            h_ = h * std::min(fac, 0.9);
            return false;
        }

        xp_ = x_;
        yp_ = y_;
        fp_ = f_;
        tp_ = t_;
        x_ = std::move(x3);
        y_ = std::move(y3);
        f_ = std::move(f3);
        g_ = std::move(g3);
        t_ = (h == t_stop - t_) ? t_stop : t_ + h;
        ++stats_.steps;
        ++jac_age_;
        h_ = std::min(h * fac, st_.h_max);
        return true;
    }

private:
    void eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y, Eigen::VectorXd& f,
              Eigen::VectorXd& g) const
    {
        residual_into(sys_, x, y, f, g);
    }

    bool try_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y, Eigen::VectorXd& f,
                  Eigen::VectorXd& g) const
    {
        try {
            eval(x, y, f, g);
        } catch (const Error&) {
            return false;
        }
        return f.allFinite() && g.allFinite();
    }

    void refresh_jacobian()
    {
        jac_ = exact_jacobian(sys_, x_, y_);
        if (sys_.n_alg > 0) {
            gy_lu_.compute(jac_.g_y);
        }
        jac_valid_ = true;
        jac_age_ = 0;
        lu_valid_ = false;
        ++stats_.jacobians;
    }

    void factorize(double h)
    {
        const int nd = sys_.n_diff;
        const int na = sys_.n_alg;
        Eigen::MatrixXd m(nd + na, nd + na);
        m.topLeftCorner(nd, nd) = Eigen::MatrixXd::Identity(nd, nd) - h * kD * jac_.f_x;
        if (na > 0) {
            m.topRightCorner(nd, na) = -h * kD * jac_.f_y;
            m.bottomLeftCorner(na, nd) = jac_.g_x;
            m.bottomRightCorner(na, na) = jac_.g_y;
        }
        lu_.compute(m);
        h_fact_ = h;
        lu_valid_ = true;
        ++stats_.factorizations;
    }

    double weighted_norm(const Eigen::VectorXd& dz, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& y) const
    {
        const int nd = sys_.n_diff;
        double acc = 0.0;
        for (int k = 0; k < dz.size(); ++k) {
            const double z = k < nd ? x[k] : y[k - nd];
            const double e = dz[k] / (st_.atol + st_.rtol * std::abs(z));
            acc += e * e;
        }
        return dz.size() > 0 ? std::sqrt(acc / static_cast<double>(dz.size())) : 0.0;
    }

    // Solves X = base + h d f(X, Y), g(X, Y) = 0 by modified Newton.
    bool newton(const Eigen::VectorXd& base, double h, Eigen::VectorXd& x, Eigen::VectorXd& y)
    {
        const int nd = sys_.n_diff;
        const int na = sys_.n_alg;
        Eigen::VectorXd f, g;
        Eigen::VectorXd r(nd + na);
        double prev = 0.0;
        for (int it = 0; it < 8; ++it) {
            if (!try_eval(x, y, f, g)) {
                return false;
            }
            r.head(nd) = base + h * kD * f - x;
            if (na > 0) {
                r.tail(na) = -g;
            }
            const Eigen::VectorXd dz = lu_.solve(r);
            if (!dz.allFinite()) {
                return false;
            }
            x += dz.head(nd);
            if (na > 0) {
                y += dz.tail(na);
            }
            const double n = weighted_norm(dz, x, y);
            if (n < 1e-3) {
                return true;
            }
            if (it > 0) {
                const double rate = n / prev;
                if (rate > 0.9) {
                    return false;
                }
                if (rate / (1.0 - rate) * n < 1e-2) {
                    return true;
                }
            }
            prev = n;
        }
        return false;
    }

    SystemModel sys_;
    SolverSettings st_;
    Eigen::VectorXd x_, y_, f_, g_;
    Eigen::VectorXd xp_, yp_, fp_;
    double t_ = 0.0;
    double tp_ = 0.0;
    double h_ = 1e-6;
    JacobianBlocks jac_;
    bool jac_valid_ = false;
    int jac_age_ = 0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    Eigen::PartialPivLU<Eigen::MatrixXd> gy_lu_;
    bool lu_valid_ = false;
    double h_fact_ = 0.0;
    SolverStats stats_;
};

class Recorder {
public:
    Recorder(TransientResult& r, const SystemModel& s) : r_(r)
    {
        gfl_ = has_gfl_at(s, 3);
        if (gfl_) {
            r_.signal_names.emplace_back(kBus3InverterCurrent);
        }
        for (const auto& b : s.network.buses) {
            r_.signal_names.push_back("v_bus" + std::to_string(b.id));
        }
        for (const auto& n : r_.signal_names) {
            r_.signals[n];
        }
    }

    void record(double t, const SystemModel& s, const Eigen::VectorXd& x, const Eigen::VectorXd& y)
    {
        r_.t.push_back(t);
        std::size_t k = 0;
        if (gfl_) {
            r_.signals[r_.signal_names[k++]].push_back(s.gfl_current_mag(x, 3));
        }
        for (std::size_t b = 0; b < s.network.buses.size(); ++b) {
            r_.signals[r_.signal_names[k++]].push_back(
                magnitude(s.bus_voltage(x, y, static_cast<int>(b))));
        }
    }

private:
    TransientResult& r_;
    bool gfl_ = false;
};

}  // namespace

TransientResult simulate(const EquilibriumPoint& eq, const std::optional<BranchEvent>& event,
                         double horizon, const SolverSettings& settings)
{
    const auto t_start = std::chrono::steady_clock::now();
    if (!eq.system.initialized) {
        throw ValidationError("simulate needs an initialized equilibrium");
    }
    if (!(horizon > 0.0)) {
        throw DomainError("horizon must be positive");
    }
    if (event) {
        if (!(event->t_trip >= 0.0 && event->t_trip < horizon)) {
            throw DomainError("trip time must lie in [0, horizon)");
        }
        eq.system.network.branch(event->branch_id);
    }
    if (!(settings.rtol > 0.0 && settings.atol > 0.0 && settings.sample_rate > 0.0 &&
          settings.h0 > 0.0 && settings.h_max >= settings.h0)) {
        throw DomainError("invalid solver settings");
    }

    TransientResult r;
    r.scenario = eq.system.scenario;
    r.event = event;
    r.horizon = horizon;
    r.settings = settings;

    Integrator in(eq, settings);
    in.set_h(settings.h0);
    Recorder rec(r, in.system());

    const double dt = 1.0 / settings.sample_rate;
    const long n_samples = static_cast<long>(std::floor(horizon * settings.sample_rate + 1e-9));
    long next = 0;
    rec.record(0.0, in.system(), in.x(), in.y());
    ++next;

    bool tripped = false;
    const double t_trip = event ? event->t_trip : std::numeric_limits<double>::infinity();

    auto emit_samples = [&]() {
        const double t0 = in.t_prev();
        const double t1 = in.t();
        const double h = t1 - t0;
        while (next <= n_samples) {
            const double ts = static_cast<double>(next) * dt;
            if (ts > t1 + 1e-12) {
                break;
            }
            const double s = h > 0.0 ? std::clamp((ts - t0) / h, 0.0, 1.0) : 1.0;
            const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
            const double h10 = s * (1.0 - s) * (1.0 - s);
            const double h01 = s * s * (3.0 - 2.0 * s);
            const double h11 = s * s * (s - 1.0);
            const Eigen::VectorXd xs =
                h00 * in.x_prev() + h10 * h * in.f_prev() + h01 * in.x() + h11 * h * in.f();
            // Linear interpolation of y cuts chords across rotating phasors.
            const Eigen::VectorXd ys = in.consistent_y(xs, (1.0 - s) * in.y_prev() + s * in.y());
            rec.record(ts, in.system(), xs, ys);
            ++next;
        }
    };

    auto diverge = [&](double t, std::string why) {
        r.outcome.kind = OutcomeKind::Diverged;
        r.outcome.t_fail = t;
        r.outcome.reason = std::move(why);
    };

    bool failed = false;
    try {
        while (in.t() < horizon) {
            const double t_stop = (!tripped && t_trip < horizon) ? t_trip : horizon;
            if (in.t() >= t_stop) {
                // At the trip time: split the network and continue.
                SystemModel after = apply_branch_trip(in.system(), event->branch_id);
                Eigen::VectorXd x = remap_states(in.system(), after, in.x());
                Eigen::VectorXd y = in.y();
                if (after.n_alg > 0) {
                    try {
                        y = statpi_network_solve(after, x, y);
                    } catch (const Error& e) {
                        diverge(in.t(), std::string("algebraic re-solve at trip failed: ") + e.what());
                        failed = true;
                        break;
                    }
                }
                in.replace_model(std::move(after), std::move(x), std::move(y));
                in.set_h(settings.h0);
                tripped = true;
                continue;
            }
            if (in.stats().steps + in.stats().rejected >= settings.max_steps) {
                diverge(in.t(), "step budget exhausted");
                failed = true;
                break;
            }
            if (!in.step(t_stop)) {
                if (in.h() < settings.h_min) {
                    diverge(in.t(), "step size collapsed");
                    failed = true;
                    break;
                }
                continue;
            }
            if (!(in.x().cwiseAbs().maxCoeff() <= settings.blowup) ||
                (in.y().size() > 0 && !(in.y().cwiseAbs().maxCoeff() <= settings.blowup))) {
                emit_samples();
                diverge(in.t(), "state magnitude exceeded " + std::to_string(settings.blowup));
                failed = true;
                break;
            }
            if (!tripped) {
                r.max_pre_event_deviation =
                    std::max(r.max_pre_event_deviation, (in.x() - eq.x0).cwiseAbs().maxCoeff());
            }
            // Samples at the trip instant belong to the pre-trip network.
            emit_samples();
        }
    } catch (const Error& e) {
        diverge(in.t(), e.what());
        failed = true;
    }

    r.x_final = in.x();
    r.y_final = in.y();
    r.final_system = in.system();
    r.stats = in.stats();

    if (!failed) {
        const double w0 = horizon - settings.steady_window;
        bool flat = true;
        for (const auto& name : r.signal_names) {
            const auto& s = r.signals.at(name);
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::size_t k = 0; k < s.size(); ++k) {
                if (r.t[k] >= w0) {
                    lo = std::min(lo, s[k]);
                    hi = std::max(hi, s[k]);
                }
            }
            if (!(hi - lo <= settings.steady_band)) {
                flat = false;
            }
        }
        if (flat) {
            r.outcome.kind = OutcomeKind::Converged;
            if (r.signals.contains(kBus3InverterCurrent)) {
                r.outcome.steady_value = r.signals.at(kBus3InverterCurrent).back();
            }
        } else {
            r.outcome.kind = OutcomeKind::MaxTimeReached;
            r.outcome.reason = "signals still moving in the final window";
        }
    }
    r.stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return r;
}

double peak_deviation(const std::vector<double>& t, const std::vector<double>& s, double steady,
                      double t_start)
{
    if (t.size() != s.size()) {
        throw DomainError("time and signal lengths differ");
    }
    double peak = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] > t_start) {
            peak = std::max(peak, std::abs(s[k] - steady));
        }
    }
    return peak;
}

double overshoot(const TransientResult& r, const std::string& signal)
{
    if (r.outcome.kind != OutcomeKind::Converged) {
        throw DomainError("overshoot needs a converged run, got " + to_string(r.outcome.kind));
    }
    const auto& s = r.signal(signal);
    if (s.empty()) {
        throw DomainError("empty signal");
    }
    const double t_trip = r.event ? r.event->t_trip : 0.0;
    return peak_deviation(r.t, s, s.back(), t_trip);
}

double settling_time(const std::vector<double>& t, const std::vector<double>& s, double steady,
                     double t_start)
{
    const double band = 0.01 * peak_deviation(t, s, steady, t_start);
    double last = t_start;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] > t_start && std::abs(s[k] - steady) > band) {
            last = t[k];
        }
    }
    return last - t_start;
}

std::optional<double> dominant_frequency(const std::vector<double>& t, const std::vector<double>& s,
                                         double steady, double t_start)
{
    if (t.size() != s.size()) {
        throw DomainError("time and signal lengths differ");
    }
    if (t.size() < 4) {
        throw DomainError("series too short for a frequency estimate");
    }
    std::vector<double> crossings;
    double prev = 0.0;
    double t_prev = 0.0;
    bool have_prev = false;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (!(t[k] > t_start)) {
            continue;
        }
        const double d = s[k] - steady;
        if (d == 0.0) {
            continue;
        }
        if (have_prev && (d > 0.0) != (prev > 0.0)) {
            // Linear interpolation of the crossing instant.
            crossings.push_back(t_prev + (t[k] - t_prev) * prev / (prev - d));
        }
        prev = d;
        t_prev = t[k];
        have_prev = true;
    }
    if (crossings.size() < 3) {
        return std::nullopt;
    }
    const double span = crossings.back() - crossings.front();
    return static_cast<double>(crossings.size() - 1) / (2.0 * span);
}

Classification classify(const TransientResult& r, const std::string& signal)
{
    const auto& s = r.signal(signal);
    if (s.empty()) {
        throw DomainError("empty signal");
    }
    const double t0 = r.event ? r.event->t_trip : 0.0;
    // Converged runs end on their steady value; otherwise the last sample is
    // the best available reference.
    const double steady = s.back();
    Classification c;
    c.settling_time = settling_time(r.t, s, steady, t0);
    c.dominant_frequency_hz = dominant_frequency(r.t, s, steady, t0);
    c.overshoot = peak_deviation(r.t, s, steady, t0);
    return c;
}

void write_trace_csv(std::ostream& os, const TransientResult& r)
{
    os << 't';
    for (const auto& n : r.signal_names) {
        os << ',' << n;
    }
    os << '\n';
    const auto old = os.precision(12);
    for (std::size_t k = 0; k < r.t.size(); ++k) {
        os << r.t[k];
        for (const auto& n : r.signal_names) {
            os << ',' << r.signals.at(n)[k];
        }
        os << '\n';
    }
    os.precision(old);
}

std::string metadata_json(const TransientResult& r)
{
    nlohmann::json j;
    j["scenario"] = {{"id", r.scenario.id()},
                     {"family", to_string(r.scenario.family)},
                     {"x", r.scenario.x},
                     {"line_model", to_string(r.scenario.line_model)},
                     {"load_scale", r.scenario.load_scale},
                     {"generation_portfolio", r.scenario.generation_portfolio}};
    if (r.event) {
        j["event"] = {{"branch", r.event->branch_id}, {"t_trip", r.event->t_trip}};
    } else {
        j["event"] = nullptr;
    }
    j["horizon"] = r.horizon;
    j["solver"] = {{"method", "TR-BDF2"},
                   {"rtol", r.settings.rtol},
                   {"atol", r.settings.atol},
                   {"h0", r.settings.h0},
                   {"h_max", r.settings.h_max},
                   {"sample_rate", r.settings.sample_rate},
                   {"steady_window", r.settings.steady_window},
                   {"steady_band", r.settings.steady_band}};
    j["outcome"] = {{"kind", to_string(r.outcome.kind)},
                    {"steady_value", r.outcome.steady_value},
                    {"t_fail", r.outcome.t_fail},
                    {"reason", r.outcome.reason}};
    j["stats"] = {{"steps", r.stats.steps},
                  {"rejected", r.stats.rejected},
                  {"newton_failures", r.stats.newton_failures},
                  {"jacobians", r.stats.jacobians},
                  {"factorizations", r.stats.factorizations},
                  {"wall_seconds", r.stats.wall_seconds}};
    j["signals"] = r.signal_names;
    return j.dump(2);
}

}  // namespace zipe
