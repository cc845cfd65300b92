#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracle.hpp"
#include "support.hpp"

#include "zipe/dae.hpp"
#include "zipe/devices.hpp"
#include "zipe/error.hpp"
#include "zipe/smallsignal.hpp"
#include "zipe/transient.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <functional>

using namespace zipe;
using cplx = std::complex<double>;

namespace {

using Rhs = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

Eigen::VectorXd rk4(const Rhs& f, Eigen::VectorXd x, double horizon, double dt,
                    const std::function<void(double, const Eigen::VectorXd&)>& observe = {})
{
    const int n = static_cast<int>(std::lround(horizon / dt));
    for (int k = 1; k <= n; ++k) {
        const Eigen::VectorXd k1 = f(x);
        const Eigen::VectorXd k2 = f(x + dt / 2 * k1);
        const Eigen::VectorXd k3 = f(x + dt / 2 * k2);
        const Eigen::VectorXd k4 = f(x + dt * k3);
        x += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (observe) {
            observe(k * dt, x);
        }
    }
    return x;
}

Eigen::VectorXd to_vec(const EloadState& s)
{
    const auto a = s.to_array();
    return Eigen::Map<const Eigen::VectorXd>(a.data(), 12);
}

EloadState from_vec(const Eigen::VectorXd& v)
{
    std::array<double, 12> a{};
    for (int k = 0; k < 12; ++k) {
        a[static_cast<std::size_t>(k)] = v[k];
    }
    return EloadState::from_array(a);
}

// Sum of participation of `mode` in the states whose component matches.
double participation_in(const Participation& p, const SystemModel& s, int mode,
                        const std::string& component)
{
    double sum = 0.0;
    for (int j = 0; j < p.factors.cols(); ++j) {
        if (s.keys[static_cast<std::size_t>(j)].component == component) {
            sum += p.factors(mode, j);
        }
    }
    return sum;
}

const std::vector<std::pair<cplx, cplx>> kOperatingPoints = {
    {cplx(1.0, 0.0), cplx(0.8, 0.2)},
    {std::polar(1.04, 0.1), cplx(1.6, -0.3)},
    {std::polar(0.97, -0.2), cplx(0.0, 0.0)},
};

}  // namespace

TEST_CASE("SM initialization is a fixed point")
{
    const SmParams p;
    for (bool inductive : {false, true}) {
        for (const auto& [v, s] : kOperatingPoints) {
            const SmInit init = initialize_sm(p, v, s, inductive);
            Dq<double> inj;
            const Eigen::VectorXd dx =
                sm_derivatives(init.state, {v.real(), v.imag()}, p, init.setpoints, inductive,
                               kDefaultOmegaBase, &inj);
            CHECK(dx.cwiseAbs().maxCoeff() < 1e-9);
            const cplx sd = v * std::conj(cplx(inj.d, inj.q));
            CHECK(std::abs(sd - s) < 1e-9);
        }
        CHECK(static_cast<int>(sm_state_names(inductive).size()) == sm_state_count(inductive));
    }
}

TEST_CASE("VSM initialization is a fixed point")
{
    const VsmParams p;
    for (const auto& [v, s] : kOperatingPoints) {
        const VsmInit init = initialize_vsm(p, v, s);
        Dq<double> inj;
        const Eigen::VectorXd dx =
            vsm_derivatives(init.state, {v.real(), v.imag()}, p, init.setpoints, kDefaultOmegaBase,
                            &inj);
        CHECK(dx.cwiseAbs().maxCoeff() < 1e-9);
        CHECK(std::abs(v * std::conj(cplx(inj.d, inj.q)) - s) < 1e-9);
    }
    CHECK(vsm_state_names().size() == kVsmStateCount);
}

TEST_CASE("GFL source initialization is a fixed point delivering its references")
{
    const ConverterParams p;
    for (const auto& [v, s] : kOperatingPoints) {
        const Dq<double> vt(v.real(), v.imag());
        const EloadState st = initialize_gfl_source(p, vt, s.real(), s.imag());
        CHECK(to_vec(gfl_source_derivatives(st, vt, p, s.real(), s.imag())).cwiseAbs().maxCoeff() <
              1e-9);
        const auto pq = eload_power(vt.d, vt.q, st.i_g_d, st.i_g_q);
        CHECK(pq.p == doctest::Approx(s.real()).epsilon(1e-9));
        CHECK(pq.q == doctest::Approx(s.imag()).epsilon(1e-9));
    }
    CHECK_THROWS_AS(initialize_gfl_source(p, {0.0, 0.0}, 0.5, 0.0), InfeasibleOperatingPoint);
}

TEST_CASE("GFL source power step follows the oracle")
{
    const ConverterParams p;
    const Dq<double> v(1.0, 0.0);
    const auto ora = oracle::single_gfl_step_response(p, 0.05).value;
    REQUIRE_FALSE(ora.diverged);
    const Rhs f = [&](const Eigen::VectorXd& x) {
        return to_vec(gfl_source_derivatives(from_vec(x), v, p, 0.55, 0.0));
    };
    std::vector<double> lib{0.5};
    int steps = 0;
    rk4(f, to_vec(initialize_gfl_source(p, v, 0.5, 0.0)), 1.5, 1e-5,
        [&](double, const Eigen::VectorXd& x) {
            if (++steps % 10 == 0) {
                lib.push_back(eload_power(1.0, 0.0, x[4], x[5]).p);
            }
        });
    REQUIRE(lib.size() == ora.p.size());
    for (std::size_t k = 0; k < lib.size(); ++k) {
        CHECK(std::abs(lib[k] - ora.p[k]) < 1e-8);
    }
    for (std::size_t k = 1; k < lib.size(); ++k) {
        CHECK(lib[k] >= lib[k - 1] - 1e-6);
    }
    CHECK(lib.back() == doctest::Approx(0.55).epsilon(1e-5));
}

TEST_CASE("GFL source with zero gains decays like a passive filter")
{
    ConverterParams p;
    p.kp_pll = p.ki_pll = p.kp_p = p.ki_p = p.kp_q = p.ki_q = p.kp_c = p.ki_c = 0.0;
    const Rhs f = [&](const Eigen::VectorXd& x) {
        return to_vec(gfl_source_derivatives(from_vec(x), {0.0, 0.0}, p, 0.0, 0.0));
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(12);
    x[0] = -0.3;
    x[3] = 0.2;
    x[4] = 0.1;
    x = rk4(f, x, 2.0, 1e-5);
    CHECK(x.head(6).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("no-load SM on a stiff bus holds 1 pu and a constant angle")
{
    const SmParams p;
    const SmInit init = initialize_sm(p, 1.0, 0.0, true);
    // Proportional exciter: holding 1 pu needs v_ref = 1 + efd / ka with efd = 1.
    CHECK(init.setpoints.v_ref == doctest::Approx(1.0 + 1.0 / p.avr.ka).epsilon(1e-12));
    CHECK(init.setpoints.p_ref == doctest::Approx(0.0));
    const Rhs f = [&](const Eigen::VectorXd& x) {
        return sm_derivatives(x, {1.0, 0.0}, p, init.setpoints, true);
    };
    const Eigen::VectorXd end = rk4(f, init.state, 1.0, 1e-5);
    CHECK((end - init.state).cwiseAbs().maxCoeff() < 1e-9);

    // A disturbed rotor returns to the same angle.
    Eigen::VectorXd x = init.state;
    x[0] += 0.05;
    x = rk4(f, x, 20.0, 2e-5);
    CHECK(std::abs(x[0] - init.state[0]) < 1e-3);
    CHECK(std::abs(x[1] - 1.0) < 1e-6);
}

TEST_CASE("more SM damping moves the electromechanical mode left")
{
    double previous = 0.0;
    bool first = true;
    for (double d : {0.0, 2.0, 10.0, 40.0, 120.0}) {
        NetworkCase c = case9();
        std::get<SmParams>(c.generators[0].params).d = d;
        ScenarioSpec s;
        s.line_model = LineModel::StatPi;
        s.load_scale = 1.0;
        const EquilibriumPoint eq = equilibrium_for(c, s);
        const Participation part = participation_factors(state_matrix(eq).a);
        const int w = eq.system.index("gen1_SM", "omega");
        int best = -1;
        for (int k = 0; k < part.factors.rows(); ++k) {
            if (std::abs(part.eigenvalues[static_cast<std::size_t>(k)]) < kReferenceModeThreshold) {
                continue;
            }
            if (best < 0 || part.factors(k, w) > part.factors(best, w)) {
                best = k;
            }
        }
        REQUIRE(best >= 0);
        const double re = part.eigenvalues[static_cast<std::size_t>(best)].real();
        MESSAGE("d = ", d, ": electromechanical mode ", part.eigenvalues[static_cast<std::size_t>(best)]);
        CHECK(participation_in(part, eq.system, best, "gen1_SM") > 0.05);
        CHECK(std::abs(part.eigenvalues[static_cast<std::size_t>(best)].imag()) > 0.0);
        if (!first) {
            CHECK(re < previous);
        }
        previous = re;
        first = false;
    }
}

TEST_CASE("islanded VSM settles at its droop frequency")
{
    const VsmParams p;
    const VsmInit init = initialize_vsm(p, 1.0, cplx(0.5, 0.1));
    // Heavier impedance load than the setpoint: i = y v.
    const cplx y(0.6, -0.1);
    auto terminal = [&](const Eigen::VectorXd& x) {
        const cplx ig(x[15], x[16]);
        const cplx v = ig / y;
        return Dq<double>(v.real(), v.imag());
    };
    const Rhs f = [&](const Eigen::VectorXd& x) {
        return vsm_derivatives(x, terminal(x), p, init.setpoints);
    };
    const Eigen::VectorXd x = rk4(f, init.state, 4.0, 1e-5);
    const Eigen::VectorXd dx = f(x);
    CHECK(dx[1] == doctest::Approx(0.0).epsilon(1e-9));
    const double p_e = x[13] * x[15] + x[14] * x[16];
    const double w_droop = 1.0 + (init.setpoints.p_ref - p_e) / p.k_omega;
    CHECK(x[1] == doctest::Approx(w_droop).epsilon(1e-7));
    CHECK(x[1] < 1.0 - 1e-3);
    // Load power in the island matches the droop balance.
    const Dq<double> v = terminal(x);
    CHECK(y.real() * (v.d * v.d + v.q * v.q) ==
          doctest::Approx(p_e - p.rg * (x[15] * x[15] + x[16] * x[16])).epsilon(1e-6));
}

TEST_CASE("two VSMs share a load step by their droop gains")
{
    const std::string text = R"({"base_mva": 100, "f_nom": 60,
      "buses": [{"id": 1, "kind": "Reference", "v_set": 1.02}, {"id": 2, "kind": "PV", "v_set": 1.02},
                {"id": 3, "kind": "PQ"}, {"id": 4, "kind": "PQ"}],
      "branches": [{"id": "1-3", "from_bus": 1, "to_bus": 3, "r": 0.0, "x": 0.1, "b": 0.0},
                   {"id": "2-3", "from_bus": 2, "to_bus": 3, "r": 0.0, "x": 0.1, "b": 0.0},
                   {"id": "3-4", "from_bus": 3, "to_bus": 4, "r": 0.0, "x": 0.05, "b": 0.0}],
      "generators": [{"bus": 1, "kind": "GFM_VSM", "p_set": 0.7, "params": {"k_omega": 20}},
                     {"bus": 2, "kind": "GFM_VSM", "p_set": 0.7, "params": {"k_omega": 40}}],
      "loads": [{"bus": 3, "p0": 1.0, "q0": 0.2, "eta": [1, 0, 0, 0], "gamma": [1, 0, 0, 0]},
                {"bus": 4, "p0": 0.4, "q0": 0.1, "eta": [1, 0, 0, 0], "gamma": [1, 0, 0, 0]}]})";
    const NetworkCase c = load_case(text);
    ScenarioSpec s;
    s.line_model = LineModel::StatPi;
    EquilibriumPoint eq = equilibrium_for(c, s);
    // Pure impedance at the operating point, so the stranded bus 4 settles at 0 V.
    for (auto& l : eq.system.loads) {
        l.pz += l.pi;
        l.qz += l.qi;
        l.pi = l.qi = 0.0;
    }
    const TransientResult r = simulate(eq, BranchEvent{"3-4", 0.1}, 6.0);
    INFO(r.outcome.reason);
    REQUIRE(r.outcome.kind == OutcomeKind::Converged);

    auto p_e = [&](const Eigen::VectorXd& x, const std::string& gen) {
        const int o = r.final_system->index(gen, "theta");
        return x[o + 13] * x[o + 15] + x[o + 14] * x[o + 16];
    };
    const double dp1 = p_e(r.x_final, "gen1_GFM_VSM") - p_e(eq.x0, "gen1_GFM_VSM");
    const double dp2 = p_e(r.x_final, "gen2_GFM_VSM") - p_e(eq.x0, "gen2_GFM_VSM");
    const double w1 = r.x_final[r.final_system->index("gen1_GFM_VSM", "omega")];
    const double w2 = r.x_final[r.final_system->index("gen2_GFM_VSM", "omega")];
    CHECK(w1 == doctest::Approx(w2).epsilon(1e-6));
    CHECK(w1 > 1.0);
    CHECK(dp1 < 0.0);
    CHECK(dp1 / dp2 == doctest::Approx(20.0 / 40.0).epsilon(1e-3));
}

TEST_CASE("dynpi segment: phasor steady state and null input")
{
    BranchParams br;
    br.r = 0.01;
    br.x = 0.085;
    br.b = 0.176;
    const Dq<double> vf(1.02, 0.05), vt(0.98, -0.03);
    const Dq<double> i = dynpi_steady_current(vf, vt, br);
    const cplx ip = (cplx(vf.d, vf.q) - cplx(vt.d, vt.q)) / cplx(br.r, br.x);
    CHECK(std::abs(cplx(i.d, i.q) - ip) < 1e-12);
    const DynpiDerivative d = dynpi_derivatives(i, vf, vt, br);
    CHECK(std::hypot(d.di.d, d.di.q) < 1e-9);
    CHECK(d.c_from == doctest::Approx(br.b / 2));
    CHECK(d.c_to == doctest::Approx(br.b / 2));

    const DynpiDerivative z = dynpi_derivatives({0.0, 0.0}, vf, vf, br);
    CHECK(z.di.d == 0.0);
    CHECK(z.di.q == 0.0);
}

TEST_CASE("isolated L-C segment rings at the analytic resonance")
{
    const double wb = kDefaultOmegaBase;
    for (double r : {0.0, 0.02}) {
        BranchParams br;
        br.r = r;
        br.x = 0.1;
        br.b = 0.3;
        // States: i_s (d, q), v_from (d, q), v_to (d, q); C dv/dt = i - j C v in the dq frame.
        auto f = [&](const Eigen::VectorXd& z) {
            const DynpiDerivative d = dynpi_derivatives({z[0], z[1]}, {z[2], z[3]}, {z[4], z[5]}, br);
            Eigen::VectorXd out(6);
            out << d.di.d, d.di.q,
                (-d.i_from_out.d + d.c_from * z[3]) * wb / d.c_from,
                (-d.i_from_out.q - d.c_from * z[2]) * wb / d.c_from,
                (d.i_to_in.d + d.c_to * z[5]) * wb / d.c_to,
                (d.i_to_in.q - d.c_to * z[4]) * wb / d.c_to;
            return out;
        };
        Eigen::MatrixXd a(6, 6);
        for (int k = 0; k < 6; ++k) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(6);
            e[k] = 1.0;
            a.col(k) = f(e);
        }
        const Eigen::VectorXcd lam = Eigen::EigenSolver<Eigen::MatrixXd>(a).eigenvalues();
        // Series capacitance of the two shunt halves, in seconds.
        const double c_ser = (br.b / 4.0) / wb;
        const auto [l1, l2] = oracle::rlc_eigs(br.r, br.x / wb, c_ser);
        const cplx shift(0.0, wb);
        for (const cplx target : {l1 - shift, l2 - shift, -shift}) {
            for (const cplx t : {target, std::conj(target)}) {
                double best = 1e300;
                for (int k = 0; k < 6; ++k) {
                    best = std::min(best, std::abs(lam[k] - t));
                }
                CHECK(best / std::abs(t) < 1e-6);
            }
        }
    }
}

TEST_CASE("statpi network solve: source behind an impedance feeding a line")
{
    // Unloaded two-bus line; the SM is a Thevenin source for the stator algebra.
    NetworkCase c = testing::two_bus(0.01, 0.1, 0.4, 0.0, 0.0);
    ScenarioSpec s;
    s.line_model = LineModel::StatPi;
    const EquilibriumPoint eq = equilibrium_for(c, s);
    const SystemModel& sys = eq.system;
    const int off = sys.index("gen1_SM", "delta");
    const Eigen::VectorXd state = eq.x0.segment(off, 6);
    const auto& p = std::get<SmParams>(c.generators[0].params);
    auto inj = [&](cplx v) {
        Dq<double> i;
        sm_derivatives(state, {v.real(), v.imag()}, p, sys.gen_setpoints[0].sm, false,
                       kDefaultOmegaBase, &i);
        return cplx(i.d, i.q);
    };
    const cplx i_sc = inj(0.0);
    const cplx y_s = i_sc - inj(1.0);
    // Perturb the field flux, then solve the 2-node divider by hand.
    Eigen::VectorXd x = eq.x0;
    x[sys.index("gen1_SM", "eq_p")] *= 1.05;
    const Eigen::VectorXd st2 = x.segment(off, 6);
    Dq<double> i0;
    sm_derivatives(st2, {0.0, 0.0}, p, sys.gen_setpoints[0].sm, false, kDefaultOmegaBase, &i0);
    const cplx ys = 1.0 / cplx(0.01, 0.1), ysh(0.0, 0.2);
    const cplx y11 = y_s + ys + ysh, y12 = -ys, y22 = ys + ysh;
    const cplx det = y11 * y22 - y12 * y12;
    const cplx v1 = y22 * cplx(i0.d, i0.q) / det;
    const cplx v2 = -y12 * cplx(i0.d, i0.q) / det;
    const Eigen::VectorXd y = statpi_network_solve(sys, x, eq.y0);
    const Dq<double> b1 = sys.bus_voltage(x, y, 0), b2 = sys.bus_voltage(x, y, 1);
    CHECK(std::abs(cplx(b1.d, b1.q) - v1) < 1e-10);
    CHECK(std::abs(cplx(b2.d, b2.q) - v2) < 1e-10);
    CHECK(std::abs(i_sc) > 0.0);
}

TEST_CASE("statpi network solve reproduces the power flow on case9")
{
    ScenarioSpec s;
    s.line_model = LineModel::StatPi;
    const EquilibriumPoint eq = equilibrium_for(case9(), s);
    Eigen::VectorXd guess = eq.y0;
    guess.array() *= 0.97;
    const Eigen::VectorXd y = statpi_network_solve(eq.system, eq.x0, guess);
    for (int k = 0; k < 9; ++k) {
        const Dq<double> v = eq.system.bus_voltage(eq.x0, y, k);
        CHECK(std::abs(std::hypot(v.d, v.q) - eq.pf.v[k]) < 1e-8);
        CHECK(std::abs(std::atan2(v.q, v.d) - eq.pf.theta[k]) < 1e-8);
    }
}

TEST_CASE("statpi network solve fails past the loadability limit")
{
    // Constant-power load on a lossless feeder behind the machine's stator reactance.
    NetworkCase c = testing::two_bus(0.0, 0.1, 0.0, 0.5, 0.0);
    ScenarioSpec s;
    s.line_model = LineModel::StatPi;
    s.x = 1.0;
    const EquilibriumPoint eq = equilibrium_for(c, s);
    const auto& p = std::get<SmParams>(c.generators[0].params);
    const int off = eq.system.index("gen1_SM", "delta");
    Dq<double> i0;
    sm_derivatives(eq.x0.segment(off, 6), {0.0, 0.0}, p, eq.system.gen_setpoints[0].sm, false,
                   kDefaultOmegaBase, &i0);
    // Thevenin source E behind x_th: unity power factor limit E^2 / (2 x_th).
    const double x_th = p.xd_p + 0.1;
    const double e = std::hypot(i0.d, i0.q) * std::abs(cplx(p.ra, p.xd_p));
    const double p_max = e * e / (2.0 * x_th);

    SystemModel below = eq.system;
    below.loads[0].pp = 0.8 * p_max;
    CHECK_NOTHROW(statpi_network_solve(below, eq.x0, eq.y0));

    SystemModel beyond = eq.system;
    beyond.loads[0].pp = 1.5 * p_max;
    CHECK_THROWS_AS(statpi_network_solve(beyond, eq.x0, eq.y0), Error);
}

TEST_CASE("statpi and dynpi share the same equilibrium")
{
    for (auto fam : {Family::ZIP, Family::ZIE}) {
        ScenarioSpec a;
        a.family = fam;
        a.x = 0.6;
        a.load_scale = 0.5;
        a.line_model = LineModel::StatPi;
        ScenarioSpec b = a;
        b.line_model = LineModel::DynPi;
        const EquilibriumPoint ea = equilibrium_for(case9(), a);
        const EquilibriumPoint eb = equilibrium_for(case9(), b);
        CHECK((ea.pf.v - eb.pf.v).cwiseAbs().maxCoeff() < 1e-12);
        for (int k = 0; k < 9; ++k) {
            const auto va = ea.system.bus_voltage(ea.x0, ea.y0, k);
            const auto vb = eb.system.bus_voltage(eb.x0, eb.y0, k);
            CHECK(std::hypot(va.d - vb.d, va.q - vb.q) < 1e-8);
        }
        for (const auto& [key, ia] : ea.system.state_index) {
            // Generators differ: under dynpi they also supply the fictitious bus capacitors.
            if (key.component.rfind("load", 0) == 0) {
                auto it = eb.system.state_index.find(key);
                if (it != eb.system.state_index.end()) {
                    INFO(key.component, ".", key.name);
                    CHECK(std::abs(ea.x0[ia] - eb.x0[it->second]) < 1e-6);
                }
            }
        }
    }
}

TEST_CASE("dynpi modes above 1.2 kHz are the bus-capacitor resonances")
{
    ScenarioSpec s;
    s.line_model = LineModel::DynPi;
    s.load_scale = 1.0;
    const EigenReport rep = analyze(equilibrium_for(case9(), s));
    const std::vector<double> targets = testing::cluster_targets_hz(case9());
    int matched = 0;
    for (std::size_t k = 0; k < rep.eigenvalues.size(); ++k) {
        if (rep.freq_hz[k] <= 1200.0) {
            continue;
        }
        double best = 1e300;
        for (double t : targets) {
            best = std::min(best, std::abs(rep.freq_hz[k] - t) / t);
        }
        INFO("mode at ", rep.freq_hz[k], " Hz");
        CHECK(best < 0.1);
        ++matched;
    }
    CHECK(matched == 12);
}
