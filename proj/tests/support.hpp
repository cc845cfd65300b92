#pragma once

// Small fixtures shared by the test binaries.

#include "oracle.hpp"

#include "zipe/dae.hpp"
#include "zipe/netdata.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace testing {

/// Two buses joined by one branch: reference machine at bus 1, load at bus 2.
inline zipe::NetworkCase two_bus(double r, double x, double b, double p_load, double q_load)
{
    const std::string text = R"({"base_mva": 100, "f_nom": 60,
      "buses": [{"id": 1, "kind": "Reference", "v_set": 1.0}, {"id": 2, "kind": "PQ"}],
      "branches": [{"id": "1-2", "from_bus": 1, "to_bus": 2, "r": )" +
                             std::to_string(r) + R"(, "x": )" + std::to_string(x) +
                             R"(, "b": )" + std::to_string(b) + R"(}],
      "generators": [{"bus": 1, "kind": "SM", "p_set": 0.0, "params": {}}],
      "loads": [{"bus": 2, "p0": )" + std::to_string(p_load) +
                             R"(, "q0": )" + std::to_string(q_load) +
                             R"(, "eta": [1, 0, 0, 0], "gamma": [1, 0, 0, 0]}]})";
    return zipe::load_case(text);
}

/// case9 with every load and generator setpoint at zero.
inline zipe::NetworkCase case9_no_load()
{
    zipe::NetworkCase c = zipe::case9();
    for (auto& l : c.loads) {
        l.p0 = 0.0;
        l.q0 = 0.0;
    }
    for (auto& g : c.generators) {
        g.p_set = 0.0;
        g.q_set = 0.0;
    }
    return c;
}

/// Resonances of the fictitious capacitors at buses 1-3 (Hz). Each sees its
/// transformer in parallel with the device terminal inductance: SM x'd at
/// bus 1, converter lg / k at buses 2 and 3.
inline std::vector<double> cluster_targets_hz(const zipe::NetworkCase& c)
{
    const double wb = c.omega_base();
    const double l_dev[3] = {std::get<zipe::SmParams>(c.generators[0].params).xd_p,
                             std::get<zipe::VsmParams>(c.generators[1].params).lg,
                             std::get<zipe::ConverterParams>(c.generators[2].params).lg /
                                 zipe::kConverterPowerFactor};
    const double x_tr[3] = {c.branch("1-4").x, c.branch("2-7").x, c.branch("3-9").x};
    std::vector<double> targets;
    for (int k = 0; k < 3; ++k) {
        const double l = x_tr[k] * l_dev[k] / (x_tr[k] + l_dev[k]);
        const auto [a, b] = oracle::rlc_eigs(0.0, l / wb, zipe::kFictitiousCapacitance / wb);
        targets.push_back(std::abs(a.imag()) / (2 * M_PI));
    }
    return targets;
}

}  // namespace testing
