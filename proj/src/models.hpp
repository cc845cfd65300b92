#pragma once

// Device right-hand sides templated on the scalar type, shared by the public
// double-valued API and by the system residual (double and autodiff).

#include "zipe/devices.hpp"
#include "zipe/dq.hpp"
#include "zipe/error.hpp"
#include "zipe/loadmodels.hpp"
#include "zipe/types.hpp"

#include <cmath>
#include <numbers>

namespace zipe::detail {

namespace cv {
enum : int {
    icv_d,
    icv_q,
    vcf_d,
    vcf_q,
    ig_d,
    ig_q,
    pll_eps,
    pll_theta,
    xi_p,
    xi_q,
    sigma_d,
    sigma_q,
    count
};
}

/// Grid-following converter. `s` is +1 for a load, -1 for a source.
/// Returns the network injection current (system base).
template <class T>
Dq<T> converter_rhs(double s, const ConverterParams& p, double wb, double w, const T* x,
                    const Dq<T>& v, double p_ref, double q_ref, T* dx)
{
    const Dq<T> icv(x[cv::icv_d], x[cv::icv_q]);
    const Dq<T> vcf(x[cv::vcf_d], x[cv::vcf_q]);
    const Dq<T> ig(x[cv::ig_d], x[cv::ig_q]);
    const T& theta = x[cv::pll_theta];

    const Dq<T> vcf_p = unrotate(vcf, theta);
    const T w_pll = 1.0 + p.kp_pll * vcf_p.q + p.ki_pll * x[cv::pll_eps];

    const T p_meas = kConverterPowerFactor * dot(v, ig);
    const T q_meas = kConverterPowerFactor * cross(v, ig);
    const T e_p = p_ref - p_meas;
    const T e_q = q_ref - q_meas;
    const Dq<T> i_ref(p.kp_p * e_p + p.ki_p * x[cv::xi_p], -(p.kp_q * e_q + p.ki_q * x[cv::xi_q]));

    const Dq<T> icv_p = unrotate(icv, theta);
    const Dq<T> err = i_ref - icv_p;
    const Dq<T> sigma(x[cv::sigma_d], x[cv::sigma_q]);
    const T w_lf = w_pll * p.lf;
    const Dq<T> u_p = err * p.kp_c + sigma * p.ki_c + jmul(icv_p) * w_lf;
    // No capacitor-voltage feedforward: with it the LCL resonance goes unstable
    // against constant-power loads.
    const Dq<T> vcv = rotate(u_p, theta) * (-s);

    const Dq<T> dig = ((v - vcf) * s - (ig * p.rg + jmul(ig) * (w * p.lg))) * (wb / p.lg);
    const Dq<T> dvcf = ((ig - icv) * s - jmul(vcf) * (w * p.cf)) * (wb / p.cf);
    const Dq<T> dicv = ((vcf - vcv) * s - (icv * p.rf + jmul(icv) * (w * p.lf))) * (wb / p.lf);

    dx[cv::icv_d] = dicv.d;
    dx[cv::icv_q] = dicv.q;
    dx[cv::vcf_d] = dvcf.d;
    dx[cv::vcf_q] = dvcf.q;
    dx[cv::ig_d] = dig.d;
    dx[cv::ig_q] = dig.q;
    dx[cv::pll_eps] = vcf_p.q;
    dx[cv::pll_theta] = wb * (w_pll - 1.0);
    dx[cv::xi_p] = e_p;
    dx[cv::xi_q] = e_q;
    dx[cv::sigma_d] = err.d;
    dx[cv::sigma_q] = err.q;

    return ig * (-s * kConverterPowerFactor);
}

/// Static ZIP part of a load, as coefficients of the three current laws.
struct ZipCoeffs {
    double pz = 0.0, qz = 0.0;  // powers drawn at v = v0
    double pi = 0.0, qi = 0.0;
    double pp = 0.0, qp = 0.0;
    double v0 = 1.0;
};

inline ZipCoeffs zip_coeffs(double p0, double q0, double v0, const CompositionVector& eta,
                            const CompositionVector& gamma)
{
    return {p0 * eta.z, q0 * gamma.z, p0 * eta.i, q0 * gamma.i, p0 * eta.p, q0 * gamma.p, v0};
}

/// Current drawn by the static part (system base, S = v conj(i)).
template <class T>
Dq<T> zip_current(const ZipCoeffs& c, const Dq<T>& v, double floor)
{
    // (P - jQ) v / V^2 for each law, with V^2 replaced by v0^2, v0 |v| or |v|^2.
    auto law = [&](double p, double q, const T& scale) {
        return Dq<T>((p * v.d + q * v.q) * scale, (p * v.q - q * v.d) * scale);
    };
    Dq<T> i = law(c.pz, c.qz, T(1.0 / (c.v0 * c.v0)));
    const bool needs_mag = c.pi != 0.0 || c.qi != 0.0 || c.pp != 0.0 || c.qp != 0.0;
    if (needs_mag) {
        const T m2 = norm2(v);
        if (!(value_of(m2) > floor * floor)) {
            throw VoltageFloorError("bus voltage magnitude below floor in constant-power/current load");
        }
        using std::sqrt;
        const T m = sqrt(m2);
        const T inv_i = 1.0 / (c.v0 * m);
        const T inv_p = 1.0 / m2;
        i += law(c.pi, c.qi, inv_i);
        i += law(c.pp, c.qp, inv_p);
    }
    return i;
}

namespace sm {
enum : int { delta, omega, eq_p, ed_p, efd, pm, i_d, i_q, count_static = 6, count_dynamic = 8 };
}

/// Two-axis machine with exciter and governor. With `inductive_stator` the
/// stator current is a state behind x'd (used when bus voltages are states).
/// Returns the network injection current.
template <class T>
Dq<T> sm_rhs(const SmParams& p, const SmSetpoints& sp, double wb, bool inductive_stator,
             const T* x, const Dq<T>& v, T* dx)
{
    const T angle = x[sm::delta] - std::numbers::pi / 2.0;
    const Dq<T> v_r = unrotate(v, angle);
    const T& ed = x[sm::ed_p];
    const T& eq = x[sm::eq_p];
    Dq<T> i_r;
    Dq<T> i_net;
    T te;
    if (inductive_stator) {
        i_net = Dq<T>(x[sm::i_d], x[sm::i_q]);
        i_r = unrotate(i_net, angle);
        const Dq<T> e_net = rotate(Dq<T>(ed, eq), angle);
        const Dq<T> di = (e_net - v - (i_net * p.ra + jmul(i_net) * p.xd_p)) * (wb / p.xd_p);
        dx[sm::i_d] = di.d;
        dx[sm::i_q] = di.q;
        te = ed * i_r.d + eq * i_r.q;
    } else {
        const double det = p.ra * p.ra + p.xd_p * p.xq_p;
        const T a = ed - v_r.d;
        const T b = eq - v_r.q;
        i_r = Dq<T>((p.ra * a + p.xq_p * b) / det, (p.ra * b - p.xd_p * a) / det);
        i_net = rotate(i_r, angle);
        te = ed * i_r.d + eq * i_r.q + (p.xq_p - p.xd_p) * i_r.d * i_r.q;
    }
    const T vmag = magnitude(v);
    dx[sm::delta] = wb * (x[sm::omega] - 1.0);
    dx[sm::omega] = (x[sm::pm] - te - p.d * (x[sm::omega] - 1.0)) / (2.0 * p.h);
    dx[sm::eq_p] = (-eq - (p.xd - p.xd_p) * i_r.d + x[sm::efd]) / p.td0_p;
    dx[sm::ed_p] = (-ed + (p.xq - p.xq_p) * i_r.q) / p.tq0_p;
    dx[sm::efd] = (-x[sm::efd] + p.avr.ka * (sp.v_ref - vmag)) / p.avr.ta;
    dx[sm::pm] = (-x[sm::pm] + sp.p_ref - (x[sm::omega] - 1.0) / p.gov.r_droop) / p.gov.tg;
    return i_net;
}

namespace vsm {
enum : int {
    theta,
    omega,
    pll_eps,
    pll_theta,
    q_m,
    xi_d,
    xi_q,
    gamma_d,
    gamma_q,
    phi_d,
    phi_q,
    icv_d,
    icv_q,
    vcf_d,
    vcf_q,
    ig_d,
    ig_q,
    count
};
}

/// Virtual synchronous machine with cascaded voltage and current control and
/// an LCL output filter. Returns the network injection current.
template <class T>
Dq<T> vsm_rhs(const VsmParams& p, const VsmSetpoints& sp, double wb, const T* x, const Dq<T>& v,
              T* dx)
{
    const T& theta = x[vsm::theta];
    const T& w = x[vsm::omega];
    const Dq<T> icv(x[vsm::icv_d], x[vsm::icv_q]);
    const Dq<T> vcf(x[vsm::vcf_d], x[vsm::vcf_q]);
    const Dq<T> ig(x[vsm::ig_d], x[vsm::ig_q]);

    const T p_e = dot(vcf, ig);
    const T q_e = cross(vcf, ig);

    const Dq<T> vcf_pll = unrotate(vcf, x[vsm::pll_theta]);
    const T w_pll = 1.0 + p.kp_pll * vcf_pll.q + p.ki_pll * x[vsm::pll_eps];

    dx[vsm::theta] = wb * (w - 1.0);
    dx[vsm::omega] =
        (sp.p_ref - p_e - p.kd * (w - w_pll) - p.k_omega * (w - 1.0)) / p.ta;
    dx[vsm::pll_eps] = vcf_pll.q;
    dx[vsm::pll_theta] = wb * (w_pll - 1.0);
    dx[vsm::q_m] = p.omega_f * (q_e - x[vsm::q_m]);

    const Dq<T> vcf_r = unrotate(vcf, theta);
    const Dq<T> icv_r = unrotate(icv, theta);
    const Dq<T> ig_r = unrotate(ig, theta);

    const T v_olc = sp.v_ref + p.kq * (sp.q_ref - x[vsm::q_m]);
    const T w_lv = w * p.lv;
    const Dq<T> v_ref = Dq<T>(v_olc, T(0.0)) - (ig_r * p.rv + jmul(ig_r) * w_lv);

    const Dq<T> ev = v_ref - vcf_r;
    const Dq<T> xi(x[vsm::xi_d], x[vsm::xi_q]);
    const T w_cf = w * p.cf;
    const Dq<T> i_ref = ev * p.kpv + xi * p.kiv + jmul(vcf_r) * w_cf + ig_r * p.kffi;

    const Dq<T> ei = i_ref - icv_r;
    const Dq<T> gam(x[vsm::gamma_d], x[vsm::gamma_q]);
    const Dq<T> phi(x[vsm::phi_d], x[vsm::phi_q]);
    const T w_lf = w * p.lf;
    const Dq<T> vcv_r = ei * p.kpc + gam * p.kic + jmul(icv_r) * w_lf + vcf_r * p.kffv -
                        (vcf_r - phi) * p.kad;

    dx[vsm::xi_d] = ev.d;
    dx[vsm::xi_q] = ev.q;
    dx[vsm::gamma_d] = ei.d;
    dx[vsm::gamma_q] = ei.q;
    dx[vsm::phi_d] = p.omega_ad * (vcf_r.d - phi.d);
    dx[vsm::phi_q] = p.omega_ad * (vcf_r.q - phi.q);

    const Dq<T> vcv = rotate(vcv_r, theta);
    const Dq<T> dicv = (vcv - vcf - (icv * p.rf + jmul(icv) * p.lf)) * (wb / p.lf);
    const Dq<T> dvcf = (icv - ig - jmul(vcf) * p.cf) * (wb / p.cf);
    const Dq<T> dig = (vcf - v - (ig * p.rg + jmul(ig) * p.lg)) * (wb / p.lg);
    dx[vsm::icv_d] = dicv.d;
    dx[vsm::icv_q] = dicv.q;
    dx[vsm::vcf_d] = dvcf.d;
    dx[vsm::vcf_q] = dvcf.q;
    dx[vsm::ig_d] = dig.d;
    dx[vsm::ig_q] = dig.q;
    return ig;
}

/// Series RL branch current from `vf` to `vt` in the synchronous frame.
template <class T>
Dq<T> line_rhs(double r, double l, double wb, double w, const Dq<T>& i, const Dq<T>& vf,
               const Dq<T>& vt)
{
    return (vf - vt - (i * r + jmul(i) * (w * l))) * (wb / l);
}

}  // namespace zipe::detail
