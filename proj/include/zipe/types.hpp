#pragma once

// Parameter blocks shared by the network data model and the dynamic models.

#include <array>
#include <string>

namespace zipe {

/// Weights over the {Z, I, P, E} load components. Used for both the real-power
/// (eta) and reactive-power (gamma) compositions of a load.
struct CompositionVector {
    double z = 1.0;
    double i = 0.0;
    double p = 0.0;
    double e = 0.0;

    /// Checks the convex-weight invariants; throws ValidationError.
    void validate() const;

    std::array<double, 4> as_array() const { return {z, i, p, e}; }
    static CompositionVector from_array(const std::array<double, 4>& a);

    friend bool operator==(const CompositionVector&, const CompositionVector&) = default;
};

/// Grid-following converter: SRF-PLL, PI power loops, PI current loops,
/// averaged bridge and LCL filter. Used for the E load and for the GFL source.
/// Impedances are on the converter's own current base (see kConverterPowerFactor).
struct ConverterParams {
    double lf = 0.08;
    double rf = 0.003;
    double cf = 0.074;
    double lg = 0.2;
    double rg = 0.01;
    double kp_pll = 0.2;
    double ki_pll = 10.0;
    double kp_p = 0.0;
    double ki_p = 20.0;
    double kp_q = 0.0;
    double ki_q = 20.0;
    double kp_c = 1.0;
    double ki_c = 20.0;
    /// Free-form note on the current base used by the parameter set.
    std::string i_base = "peak dq, S = 1/2 v.i";

    void validate() const;

    friend bool operator==(const ConverterParams&, const ConverterParams&) = default;
};

using EloadParams = ConverterParams;

struct AvrParams {
    double ka = 20.0;
    double ta = 0.2;
    double v_ref = 1.0;

    friend bool operator==(const AvrParams&, const AvrParams&) = default;
};

struct GovernorParams {
    double r_droop = 0.05;
    double tg = 0.5;
    double p_ref = 0.0;

    friend bool operator==(const GovernorParams&, const GovernorParams&) = default;
};

/// Two-axis synchronous machine with first-order exciter and governor.
struct SmParams {
    double h = 23.64;
    double d = 2.0;
    double xd = 0.146;
    double xq = 0.0969;
    double xd_p = 0.0608;
    double xq_p = 0.0608;
    double td0_p = 8.96;
    double tq0_p = 0.31;
    double ra = 0.002;
    AvrParams avr;
    GovernorParams gov;

    void validate() const;

    friend bool operator==(const SmParams&, const SmParams&) = default;
};

/// Virtual synchronous machine: virtual inertia with PLL-referenced damping,
/// reactive droop, cascaded voltage/current PI loops, LCL output filter.
/// Quantities are on the system base.
struct VsmParams {
    double ta = 2.0;
    double kd = 400.0;
    double k_omega = 20.0;
    double kq = 0.2;
    double omega_f = 1000.0;
    double kpv = 0.59;
    double kiv = 736.0;
    double kffi = 0.0;
    double rv = 0.0;
    double lv = 0.2;
    double kpc = 1.27;
    double kic = 14.3;
    double kffv = 0.0;
    double kad = 0.2;
    double omega_ad = 50.0;
    double lf = 0.08;
    double rf = 0.003;
    double cf = 0.1;
    double lg = 0.2;
    double rg = 0.01;
    double kp_pll = 0.084;
    double ki_pll = 4.69;

    void validate() const;

    friend bool operator==(const VsmParams&, const VsmParams&) = default;
};

}  // namespace zipe
