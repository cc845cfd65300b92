#include "zipe/loadmodels.hpp"

#include "models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>

namespace zipe {

std::string to_string(Family f) { return f == Family::ZIP ? "ZIP" : "ZI-E"; }

Family parse_family(std::string_view s)
{
    std::string lower;
    for (char c : s) {
        if (c != '-' && c != '_') {
            lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (lower == "zip") {
        return Family::ZIP;
    }
    if (lower == "zie") {
        return Family::ZIE;
    }
    throw ValidationError("unknown load family '" + std::string(s) + "' (expected zip or zie)");
}

PowerPair eval_exponential(double p0, double q0, double v0, double n_p, double n_q, double v)
{
    if (!(v0 > 0.0)) {
        throw DomainError("nominal voltage must be positive");
    }
    if (v < 0.0) {
        throw DomainError("voltage magnitude must be nonnegative");
    }
    if (v == 0.0 && (n_p < 0.0 || n_q < 0.0)) {
        throw DomainError("zero voltage with negative load exponent");
    }
    const double r = v / v0;
    return {p0 * std::pow(r, n_p), q0 * std::pow(r, n_q)};
}

PowerPair eval_zip(double p0, double q0, double v0, const CompositionVector& eta,
                   const CompositionVector& gamma, double v)
{
    if (!(v0 > 0.0)) {
        throw DomainError("nominal voltage must be positive");
    }
    if (v < 0.0) {
        throw DomainError("voltage magnitude must be nonnegative");
    }
    const double r = v / v0;
    return {p0 * (eta.z * r * r + eta.i * r + eta.p),
            q0 * (gamma.z * r * r + gamma.i * r + gamma.p)};
}

CompositionVector composition_from_x(double x, Family family)
{
    if (!(x >= 0.0 && x <= 1.0)) {
        throw DomainError("composition fraction x must lie in [0, 1]");
    }
    const double zi = (1.0 - x) / 2.0;
    if (family == Family::ZIP) {
        return {zi, zi, x, 0.0};
    }
    return {zi, zi, 0.0, x};
}

PowerPair eload_power(double v_d, double v_q, double i_d, double i_q)
{
    const Dq<double> v(v_d, v_q);
    const Dq<double> i(i_d, i_q);
    return {kConverterPowerFactor * dot(v, i), kConverterPowerFactor * cross(v, i)};
}

std::array<double, EloadState::kSize> EloadState::to_array() const
{
    return {i_cv_d, i_cv_q, v_cf_d, v_cf_q, i_g_d, i_g_q,
            pll_eps, pll_theta, xi_p, xi_q, sigma_d, sigma_q};
}

EloadState EloadState::from_array(const std::array<double, kSize>& a)
{
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9], a[10], a[11]};
}

const std::array<std::string_view, EloadState::kSize>& converter_state_names()
{
    static const std::array<std::string_view, EloadState::kSize> names = {
        "i_cv_d", "i_cv_q", "v_cf_d", "v_cf_q", "i_g_d", "i_g_q",
        "pll_eps", "pll_theta", "xi_p", "xi_q", "sigma_d", "sigma_q"};
    return names;
}

EloadState converter_derivatives(ConverterRole role, const EloadState& s, Dq<double> v_bus,
                                 const ConverterParams& params, double p_ref, double q_ref,
                                 double omega_sys, double omega_base)
{
    const auto x = s.to_array();
    std::array<double, EloadState::kSize> dx{};
    detail::converter_rhs(static_cast<double>(static_cast<int>(role)), params,
                          omega_base, omega_sys, x.data(), v_bus, p_ref, q_ref,
                          dx.data());
    return EloadState::from_array(dx);
}

EloadState initialize_converter(ConverterRole role, const ConverterParams& p, Dq<double> v_bus,
                                double p_ref, double q_ref)
{
    using C = std::complex<double>;
    const double s = static_cast<int>(role);
    const C v = to_complex(v_bus);
    if (!(std::abs(v) > kDefaultVoltageFloor)) {
        throw InfeasibleOperatingPoint("converter terminal voltage is zero; no power transfer possible");
    }
    const C ig = std::conj(C(p_ref, q_ref)) / (kConverterPowerFactor * std::conj(v));
    const C vcf = v - s * C(p.rg, p.lg) * ig;
    const C icv = ig - s * C(0.0, p.cf) * vcf;
    if (!(std::abs(vcf) > kDefaultVoltageFloor)) {
        throw InfeasibleOperatingPoint("converter filter capacitor voltage collapses at this operating point");
    }
    const double theta = std::arg(vcf);
    const C rot = std::polar(1.0, -theta);
    const C icv_p = icv * rot;

    EloadState st;
    st.i_cv_d = icv.real();
    st.i_cv_q = icv.imag();
    st.v_cf_d = vcf.real();
    st.v_cf_q = vcf.imag();
    st.i_g_d = ig.real();
    st.i_g_q = ig.imag();
    st.pll_eps = 0.0;
    st.pll_theta = theta;
    if (p.ki_p > 0.0) {
        st.xi_p = icv_p.real() / p.ki_p;
    } else if (icv_p.real() != 0.0) {
        throw InfeasibleOperatingPoint("ki_p = 0 cannot hold a nonzero d-axis current");
    }
    if (p.ki_q > 0.0) {
        st.xi_q = -icv_p.imag() / p.ki_q;
    } else if (icv_p.imag() != 0.0) {
        throw InfeasibleOperatingPoint("ki_q = 0 cannot hold a nonzero q-axis current");
    }
    const C vcv = vcf - s * C(p.rf, p.lf) * icv;
    const C u = -s * vcv * rot - C(0.0, p.lf) * icv_p;
    if (p.ki_c > 0.0) {
        st.sigma_d = u.real() / p.ki_c;
        st.sigma_q = u.imag() / p.ki_c;
    } else if (std::abs(u) != 0.0) {
        throw InfeasibleOperatingPoint("ki_c = 0 cannot hold the bridge voltage");
    }
    return st;
}

Dq<double> zipe_injection(const LoadSpec& spec, double load_scale, Dq<double> v_bus,
                          const std::optional<EloadState>& eload_state, double voltage_floor)
{
    if (spec.has_e() != eload_state.has_value()) {
        throw ValidationError("E-load state must be supplied exactly when the load has an E weight");
    }
    const auto c = detail::zip_coeffs(spec.p0 * load_scale, spec.q0 * load_scale, spec.v0, spec.eta,
                                      spec.gamma);
    Dq<double> i = detail::zip_current(c, v_bus, voltage_floor);
    if (eload_state) {
        i += Dq<double>(eload_state->i_g_d, eload_state->i_g_q) * kConverterPowerFactor;
    }
    return i;
}

}  // namespace zipe
