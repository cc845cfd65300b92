#pragma once

#include "zipe/dq.hpp"
#include "zipe/netdata.hpp"
#include "zipe/types.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace zipe {

enum class Family { ZIP, ZIE };

std::string to_string(Family f);
/// Accepts "zip" / "zie" (any case) and "ZI-E".
Family parse_family(std::string_view s);

struct PowerPair {
    double p = 0.0;
    double q = 0.0;
};

/// Ratio between converter power and the dq product v.i, i.e. S = k (v . conj i).
/// A converter current of magnitude 1 on its own base carries k times the
/// system-base current, so the network injection is k * i_g.
inline constexpr double kConverterPowerFactor = 0.5;

/// Voltage magnitude below which constant-power current conversion aborts.
inline constexpr double kDefaultVoltageFloor = 1e-6;

/// Base angular frequency of a 60 Hz system (rad/s).
inline constexpr double kDefaultOmegaBase = 2.0 * 3.14159265358979323846 * 60.0;

PowerPair eval_exponential(double p0, double q0, double v0, double n_p, double n_q, double v);

/// Static ZIP power; the e entries of eta and gamma are ignored.
PowerPair eval_zip(double p0, double q0, double v0, const CompositionVector& eta,
                   const CompositionVector& gamma, double v);

CompositionVector composition_from_x(double x, Family family);

/// Converter power for terminal voltage v and current i (load convention).
PowerPair eload_power(double v_d, double v_q, double i_d, double i_q);

/// Grid-following converter state. For the E load, i_g is drawn from the bus;
/// for a GFL source it is delivered to the bus.
struct EloadState {
    double i_cv_d = 0.0;
    double i_cv_q = 0.0;
    double v_cf_d = 0.0;
    double v_cf_q = 0.0;
    double i_g_d = 0.0;
    double i_g_q = 0.0;
    double pll_eps = 0.0;
    double pll_theta = 0.0;
    double xi_p = 0.0;
    double xi_q = 0.0;
    double sigma_d = 0.0;
    double sigma_q = 0.0;

    static constexpr int kSize = 12;
    std::array<double, kSize> to_array() const;
    static EloadState from_array(const std::array<double, kSize>& a);
};

/// State names in storage order.
const std::array<std::string_view, EloadState::kSize>& converter_state_names();

/// Sign of the converter role: +1 draws power (E load), -1 delivers it (GFL source).
enum class ConverterRole { Load = 1, Source = -1 };

EloadState converter_derivatives(ConverterRole role, const EloadState& s, Dq<double> v_bus,
                                 const ConverterParams& params, double p_ref, double q_ref,
                                 double omega_sys = 1.0, double omega_base = kDefaultOmegaBase);

/// Equilibrium state that transfers (p_ref, q_ref) at the terminal.
/// Throws InfeasibleOperatingPoint when |v_bus| is at or below the voltage floor.
EloadState initialize_converter(ConverterRole role, const ConverterParams& params, Dq<double> v_bus,
                                double p_ref, double q_ref);

inline EloadState eload_derivatives(const EloadState& s, Dq<double> v_bus,
                                    const EloadParams& params, double p_ref, double q_ref,
                                    double omega_sys = 1.0, double omega_base = kDefaultOmegaBase)
{
    return converter_derivatives(ConverterRole::Load, s, v_bus, params, p_ref, q_ref, omega_sys,
                                 omega_base);
}

inline EloadState initialize_eload(const EloadParams& params, Dq<double> v_bus, double p_ref,
                                   double q_ref)
{
    return initialize_converter(ConverterRole::Load, params, v_bus, p_ref, q_ref);
}

/// Current drawn by a ZIP-E load at bus voltage v (system base, S = v conj(i)).
/// eload_state must be present exactly when the load has a nonzero E weight.
Dq<double> zipe_injection(const LoadSpec& spec, double load_scale, Dq<double> v_bus,
                          const std::optional<EloadState>& eload_state,
                          double voltage_floor = kDefaultVoltageFloor);

}  // namespace zipe
