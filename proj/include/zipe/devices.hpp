#pragma once

// Generation devices and the dynamic line segment, exposed as plain
// double-valued functions of (state, terminal voltage).

#include "zipe/dq.hpp"
#include "zipe/loadmodels.hpp"
#include "zipe/netdata.hpp"
#include "zipe/types.hpp"

#include <Eigen/Core>

#include <complex>
#include <string_view>
#include <vector>

namespace zipe {

struct SmSetpoints {
    double v_ref = 1.0;
    double p_ref = 0.0;
};

struct VsmSetpoints {
    double p_ref = 0.0;
    double q_ref = 0.0;
    double v_ref = 1.0;
};

/// Device states and the setpoints that make them an equilibrium.
struct SmInit {
    Eigen::VectorXd state;
    SmSetpoints setpoints;
};

struct VsmInit {
    Eigen::VectorXd state;
    VsmSetpoints setpoints;
};

/// 6 states (delta, omega, e'q, e'd, efd, pm), plus the stator current
/// (i_d, i_q) in the network frame when the stator is inductive.
int sm_state_count(bool inductive_stator);
std::vector<std::string_view> sm_state_names(bool inductive_stator);

/// Time derivatives; `injection` receives the current delivered to the bus.
Eigen::VectorXd sm_derivatives(const Eigen::VectorXd& state, Dq<double> v_terminal,
                               const SmParams& params, const SmSetpoints& sp,
                               bool inductive_stator, double omega_base = kDefaultOmegaBase,
                               Dq<double>* injection = nullptr);

/// Back-solves the machine for terminal voltage v and delivered power s.
SmInit initialize_sm(const SmParams& params, std::complex<double> v, std::complex<double> s,
                     bool inductive_stator);

inline constexpr int kVsmStateCount = 17;
std::vector<std::string_view> vsm_state_names();

Eigen::VectorXd vsm_derivatives(const Eigen::VectorXd& state, Dq<double> v_terminal,
                                const VsmParams& params, const VsmSetpoints& sp,
                                double omega_base = kDefaultOmegaBase,
                                Dq<double>* injection = nullptr);

VsmInit initialize_vsm(const VsmParams& params, std::complex<double> v, std::complex<double> s);

/// Grid-following source: the converter core with power delivered positive.
inline EloadState gfl_source_derivatives(const EloadState& st, Dq<double> v_terminal,
                                         const ConverterParams& params, double p_ref, double q_ref,
                                         double omega_sys = 1.0,
                                         double omega_base = kDefaultOmegaBase)
{
    return converter_derivatives(ConverterRole::Source, st, v_terminal, params, p_ref, q_ref,
                                 omega_sys, omega_base);
}

inline EloadState initialize_gfl_source(const ConverterParams& params, Dq<double> v_terminal,
                                        double p_ref, double q_ref)
{
    return initialize_converter(ConverterRole::Source, params, v_terminal, p_ref, q_ref);
}

struct DynpiDerivative {
    /// d(i_s)/dt of the series current flowing from `from` to `to`.
    Dq<double> di;
    /// Current leaving the from-bus and entering the to-bus through the series element.
    Dq<double> i_from_out;
    Dq<double> i_to_in;
    /// Shunt capacitance attached to each terminal (b/2).
    double c_from = 0.0;
    double c_to = 0.0;
};

DynpiDerivative dynpi_derivatives(Dq<double> i_s, Dq<double> v_from, Dq<double> v_to,
                                  const BranchParams& br, double omega_base = kDefaultOmegaBase,
                                  double omega_sys = 1.0);

/// Steady-state series current (v_from - v_to) / (r + jx).
Dq<double> dynpi_steady_current(Dq<double> v_from, Dq<double> v_to, const BranchParams& br);

/// Capacitance added at a bus whose lines carry no charging, so that every bus
/// voltage is a state under the dynamic line model.
inline constexpr double kFictitiousCapacitance = 1e-4;

}  // namespace zipe
