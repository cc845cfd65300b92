#pragma once

#include "zipe/devices.hpp"
#include "zipe/dq.hpp"
#include "zipe/loadmodels.hpp"
#include "zipe/netdata.hpp"
#include "zipe/powerflow.hpp"

#include <Eigen/Core>

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace zipe {

enum class LineModel { StatPi, DynPi };

std::string to_string(LineModel m);
/// Accepts "statpi" / "dynpi".
LineModel parse_line_model(std::string_view s);

struct BranchEvent {
    std::string branch_id;
    double t_trip = 0.1;
};

struct ScenarioSpec {
    Family family = Family::ZIP;
    double x = 0.0;
    LineModel line_model = LineModel::DynPi;
    double load_scale = 1.0;
    std::optional<BranchEvent> event;
    std::string generation_portfolio = "case9";

    void validate() const;
    /// Stable label such as "zip_x0.30_dynpi_ls0.250".
    std::string id() const;
};

struct StateKey {
    std::string component;
    std::string name;

    auto operator<=>(const StateKey&) const = default;
};

enum class SlotKind { BusVoltage, Sm, Vsm, Gfl, Line, Eload };

/// Contiguous block of states belonging to one component.
struct Slot {
    SlotKind kind = SlotKind::BusVoltage;
    std::string component;
    /// Owning bus position (from-bus for lines).
    int bus = 0;
    int to_bus = 0;
    int offset = 0;
    int size = 0;
    /// Index into case generators, loads or branches.
    int source = 0;
};

struct GenSetpoints {
    SmSetpoints sm;
    VsmSetpoints vsm;
    double p_ref = 0.0;
    double q_ref = 0.0;
};

/// Static and E parts of one load after composition and initialization.
struct LoadModel {
    int bus = 0;
    double pz = 0.0, qz = 0.0, pi = 0.0, qi = 0.0, pp = 0.0, qp = 0.0;
    /// Voltage at which the static part draws its nominal share.
    double v0 = 1.0;
    bool has_e = false;
    ConverterParams eload;
    double e_p_ref = 0.0;
    double e_q_ref = 0.0;
    /// Offset of the E-load states, -1 when absent.
    int e_offset = -1;
};

/// Assembled differential-algebraic model. Differential states are ordered
/// bus voltages (dynpi), devices, line currents (dynpi), E loads; algebraic
/// variables (statpi) are the bus voltages in bus order, d then q.
struct SystemModel {
    NetworkCase network;  // scaled to the scenario's load_scale
    ScenarioSpec scenario;
    std::set<std::string> in_service;
    std::vector<StateKey> keys;
    std::map<StateKey, int> state_index;
    int n_diff = 0;
    int n_alg = 0;

    std::vector<Slot> slots;
    std::vector<GenSetpoints> gen_setpoints;  // per case generator
    std::vector<LoadModel> loads;            // per case load
    /// Per-bus shunt capacitance (dynpi) including any fictitious part.
    Eigen::VectorXd bus_capacitance;
    Eigen::VectorXd fictitious_capacitance;
    Eigen::MatrixXd ybus_g;
    Eigen::MatrixXd ybus_b;
    double omega_base = kDefaultOmegaBase;
    double voltage_floor = kDefaultVoltageFloor;
    bool initialized = false;

    int index(const std::string& component, const std::string& name) const;
    int n_total() const { return n_diff + n_alg; }
    /// Differential states contributed by E loads.
    int eload_state_count() const;

    /// Bus voltage in the common frame, read from states or algebraic variables.
    Dq<double> bus_voltage(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int bus_pos) const;
    /// Magnitude of the current the GFL source at `bus_id` delivers (system base).
    double gfl_current_mag(const Eigen::VectorXd& x, int bus_id) const;
};

struct EquilibriumPoint {
    SystemModel system;  // initialized copy carrying the setpoints
    Eigen::VectorXd x0;
    Eigen::VectorXd y0;
    PFSolution pf;
    double residual_inf_norm = 0.0;
};

struct JacobianBlocks {
    Eigen::MatrixXd f_x;
    Eigen::MatrixXd f_y;
    Eigen::MatrixXd g_x;
    Eigen::MatrixXd g_y;
};

SystemModel assemble(const NetworkCase& c, const ScenarioSpec& scenario);

/// Power flow of the assembled (scaled) network with the model's branch set.
PFSolution solve_scenario_power_flow(const SystemModel& system, double tol = 1e-8,
                                     int max_iter = 20);

/// Back-solves all states from the power flow. Throws InitializationError when
/// the residual exceeds `max_residual`.
EquilibriumPoint initialize(const SystemModel& system, const PFSolution& pf,
                            double max_residual = 1e-8);

/// Convenience: assemble, solve the power flow and initialize.
EquilibriumPoint equilibrium_for(const NetworkCase& c, const ScenarioSpec& scenario);

SystemModel apply_branch_trip(const SystemModel& system, const std::string& branch_id);
SystemModel restore_branch(const SystemModel& system, const std::string& branch_id);

/// Differential residual f(x, y) = dx/dt and algebraic residual g(x, y).
std::pair<Eigen::VectorXd, Eigen::VectorXd> residual(const SystemModel& system,
                                                     const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& y, double t = 0.0);
void residual_into(const SystemModel& system, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                   Eigen::VectorXd& f, Eigen::VectorXd& g);

/// Exact partial derivatives by forward-mode automatic differentiation.
JacobianBlocks exact_jacobian(const SystemModel& system, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y);

/// Solves g(x, y) = 0 for the statpi bus voltages by Newton's method.
/// Throws AlgebraicSingularityError when g_y is numerically singular.
Eigen::VectorXd statpi_network_solve(const SystemModel& system, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& y_guess, double tol = 1e-12,
                                     int max_iter = 20);

/// Carries states across models by key; states absent in `from` are zero.
Eigen::VectorXd remap_states(const SystemModel& from, const SystemModel& to,
                             const Eigen::VectorXd& x_from);

/// Power bookkeeping at an operating point (system base).
struct PowerBalance {
    double generation_p = 0.0;
    double load_p = 0.0;
    double losses_p = 0.0;
};
PowerBalance power_balance(const SystemModel& system, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y);

}  // namespace zipe
