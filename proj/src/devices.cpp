#include "zipe/devices.hpp"

#include "models.hpp"

#include <cmath>
#include <numbers>

namespace zipe {

using C = std::complex<double>;

int sm_state_count(bool inductive_stator)
{
    return inductive_stator ? detail::sm::count_dynamic : detail::sm::count_static;
}

std::vector<std::string_view> sm_state_names(bool inductive_stator)
{
    std::vector<std::string_view> n = {"delta", "omega", "eq_p", "ed_p", "efd", "pm"};
    if (inductive_stator) {
        n.push_back("i_d");
        n.push_back("i_q");
    }
    return n;
}

Eigen::VectorXd sm_derivatives(const Eigen::VectorXd& state, Dq<double> v_terminal,
                               const SmParams& params, const SmSetpoints& sp,
                               bool inductive_stator, double omega_base, Dq<double>* injection)
{
    if (state.size() != sm_state_count(inductive_stator)) {
        throw DomainError("SM state vector has the wrong length");
    }
    Eigen::VectorXd dx(state.size());
    const Dq<double> i =
        detail::sm_rhs(params, sp, omega_base, inductive_stator, state.data(), v_terminal, dx.data());
    if (injection) {
        *injection = i;
    }
    return dx;
}

SmInit initialize_sm(const SmParams& p, C v, C s, bool inductive_stator)
{
    if (!(std::abs(v) > kDefaultVoltageFloor)) {
        throw InfeasibleOperatingPoint("SM terminal voltage is zero");
    }
    if (!(p.avr.ka > 0.0)) {
        throw InfeasibleOperatingPoint("SM exciter gain must be positive to hold a field voltage");
    }
    const C i = std::conj(s / v);
    const double x_eff = inductive_stator ? p.xq - p.xq_p + p.xd_p : p.xq;
    const double delta = std::arg(v + C(p.ra, x_eff) * i);
    const C rot = std::polar(1.0, -(delta - std::numbers::pi / 2.0));
    const C vr = v * rot;
    const C ir = i * rot;

    double ed = 0.0;
    double eq = 0.0;
    double te = 0.0;
    if (inductive_stator) {
        const C e = (v + C(p.ra, p.xd_p) * i) * rot;
        ed = e.real();
        eq = e.imag();
        te = ed * ir.real() + eq * ir.imag();
    } else {
        ed = vr.real() + p.ra * ir.real() - p.xq_p * ir.imag();
        eq = vr.imag() + p.ra * ir.imag() + p.xd_p * ir.real();
        te = ed * ir.real() + eq * ir.imag() + (p.xq_p - p.xd_p) * ir.real() * ir.imag();
    }
    const double efd = eq + (p.xd - p.xd_p) * ir.real();

    SmInit out;
    out.state.resize(sm_state_count(inductive_stator));
    out.state << delta, 1.0, eq, ed, efd, te, Eigen::VectorXd::Zero(out.state.size() - 6);
    if (inductive_stator) {
        out.state[detail::sm::i_d] = i.real();
        out.state[detail::sm::i_q] = i.imag();
    }
    out.setpoints.v_ref = std::abs(v) + efd / p.avr.ka;
    out.setpoints.p_ref = te;
    return out;
}

std::vector<std::string_view> vsm_state_names()
{
    return {"theta", "omega", "pll_eps", "pll_theta", "q_m",  "xi_d",  "xi_q",  "gamma_d", "gamma_q",
            "phi_d", "phi_q", "i_cv_d",  "i_cv_q",    "v_cf_d", "v_cf_q", "i_g_d", "i_g_q"};
}

Eigen::VectorXd vsm_derivatives(const Eigen::VectorXd& state, Dq<double> v_terminal,
                                const VsmParams& params, const VsmSetpoints& sp, double omega_base,
                                Dq<double>* injection)
{
    if (state.size() != kVsmStateCount) {
        throw DomainError("VSM state vector has the wrong length");
    }
    Eigen::VectorXd dx(state.size());
    const Dq<double> i = detail::vsm_rhs(params, sp, omega_base, state.data(), v_terminal, dx.data());
    if (injection) {
        *injection = i;
    }
    return dx;
}

VsmInit initialize_vsm(const VsmParams& p, C v, C s)
{
    namespace ix = detail::vsm;
    if (!(std::abs(v) > kDefaultVoltageFloor)) {
        throw InfeasibleOperatingPoint("VSM terminal voltage is zero");
    }
    const C ig = std::conj(s / v);
    const C vcf = v + C(p.rg, p.lg) * ig;
    const C icv = ig + C(0.0, p.cf) * vcf;
    const C vcv = vcf + C(p.rf, p.lf) * icv;
    const C internal = vcf + C(p.rv, p.lv) * ig;
    const double theta = std::arg(internal);
    const C rot = std::polar(1.0, -theta);
    const C vcf_r = vcf * rot;
    const C icv_r = icv * rot;
    const C ig_r = ig * rot;
    const C vcv_r = vcv * rot;
    const C s_cap = vcf * std::conj(ig);

    const C xi = (icv_r - C(0.0, p.cf) * vcf_r - p.kffi * ig_r) / p.kiv;
    const C gam = (vcv_r - C(0.0, p.lf) * icv_r - p.kffv * vcf_r) / p.kic;

    VsmInit out;
    out.state = Eigen::VectorXd::Zero(kVsmStateCount);
    out.state[ix::theta] = theta;
    out.state[ix::omega] = 1.0;
    out.state[ix::pll_eps] = 0.0;
    out.state[ix::pll_theta] = std::arg(vcf);
    out.state[ix::q_m] = s_cap.imag();
    out.state[ix::xi_d] = xi.real();
    out.state[ix::xi_q] = xi.imag();
    out.state[ix::gamma_d] = gam.real();
    out.state[ix::gamma_q] = gam.imag();
    out.state[ix::phi_d] = vcf_r.real();
    out.state[ix::phi_q] = vcf_r.imag();
    out.state[ix::icv_d] = icv.real();
    out.state[ix::icv_q] = icv.imag();
    out.state[ix::vcf_d] = vcf.real();
    out.state[ix::vcf_q] = vcf.imag();
    out.state[ix::ig_d] = ig.real();
    out.state[ix::ig_q] = ig.imag();
    out.setpoints.p_ref = s_cap.real();
    out.setpoints.q_ref = s_cap.imag();
    out.setpoints.v_ref = std::abs(internal);
    return out;
}

DynpiDerivative dynpi_derivatives(Dq<double> i_s, Dq<double> v_from, Dq<double> v_to,
                                  const BranchParams& br, double omega_base, double omega_sys)
{
    DynpiDerivative d;
    d.di = detail::line_rhs(br.r, br.x, omega_base, omega_sys, i_s, v_from, v_to);
    d.i_from_out = i_s;
    d.i_to_in = i_s;
    d.c_from = br.b / 2.0;
    d.c_to = br.b / 2.0;
    return d;
}

Dq<double> dynpi_steady_current(Dq<double> v_from, Dq<double> v_to, const BranchParams& br)
{
    return from_complex((to_complex(v_from) - to_complex(v_to)) / C(br.r, br.x));
}

}  // namespace zipe
