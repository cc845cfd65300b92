#pragma once

#include "zipe/types.hpp"

#include <Eigen/Core>

#include <complex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace zipe {

enum class BusKind { Reference, PV, PQ };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    /// Voltage magnitude setpoint (pu); meaningful for Reference and PV buses.
    double v_set = 1.0;
    /// Nominal voltage (kV).
    double v_nom = 230.0;

    friend bool operator==(const Bus&, const Bus&) = default;
};

struct BranchParams {
    std::string id;
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    /// Total shunt susceptance, split equally between the two ends.
    double b = 0.0;
    /// Unit-tap transformer. Contingency selection ranks lines only.
    bool transformer = false;

    friend bool operator==(const BranchParams&, const BranchParams&) = default;
};

enum class GeneratorKind { SM, GFM_VSM, GFL };

struct GeneratorSpec {
    int bus = 0;
    GeneratorKind kind = GeneratorKind::SM;
    double p_set = 0.0;
    double q_set = 0.0;
    std::variant<SmParams, VsmParams, ConverterParams> params;

    friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

struct LoadSpec {
    int bus = 0;
    double p0 = 0.0;
    double q0 = 0.0;
    double v0 = 1.0;
    CompositionVector eta;
    CompositionVector gamma;
    std::optional<EloadParams> eload_params;

    bool has_e() const { return eta.e > 0.0 || gamma.e > 0.0; }

    friend bool operator==(const LoadSpec&, const LoadSpec&) = default;
};

/// Validated network description. Buses are kept sorted by id.
struct NetworkCase {
    double base_mva = 100.0;
    double f_nom = 60.0;
    std::vector<Bus> buses;
    std::vector<BranchParams> branches;
    std::vector<GeneratorSpec> generators;
    std::vector<LoadSpec> loads;

    /// Position of a bus id in `buses`; throws ValidationError when absent.
    int bus_index(int bus_id) const;
    const BranchParams& branch(std::string_view id) const;
    int reference_index() const;
    std::set<std::string> all_branch_ids() const;
    /// Base angular frequency (rad/s).
    double omega_base() const;

    /// Throws ValidationError on the first violated invariant.
    void validate() const;

    friend bool operator==(const NetworkCase&, const NetworkCase&) = default;
};

/// Parses and validates a JSON case description.
NetworkCase load_case(std::string_view text);
NetworkCase load_case_file(const std::string& path);
/// Inverse of load_case.
std::string serialize_case(const NetworkCase& c);

/// JSON text of the embedded WSCC 9-bus case (SM at bus 1, VSM at bus 2, GFL at bus 3).
std::string_view case9_json();
/// Same network with synchronous machines at all three generator buses.
std::string case9_all_sm_json();
NetworkCase case9();

/// Complex bus admittance matrix of the in-service branches (pi model).
Eigen::MatrixXcd build_ybus(const NetworkCase& c, const std::set<std::string>& in_service);

/// 2x2 pi-model stamp of a single branch, ordered (from, to).
Eigen::Matrix2cd branch_stamp(const BranchParams& br);

std::string to_string(BusKind k);
std::string to_string(GeneratorKind k);

}  // namespace zipe
