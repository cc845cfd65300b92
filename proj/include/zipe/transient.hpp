#pragma once

#include "zipe/dae.hpp"

#include <Eigen/Core>

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace zipe {

inline constexpr const char* kBus3InverterCurrent = "bus3_inverter_current_mag";

struct SolverSettings {
    double rtol = 1e-6;
    double atol = 1e-8;
    double h0 = 1e-6;
    double h_max = 0.02;
    double h_min = 1e-12;
    /// Dense-output sampling rate (Hz).
    double sample_rate = 10000.0;
    /// Any state beyond this magnitude is declared divergence.
    double blowup = 1e6;
    /// Length of the trailing window used to judge convergence (s).
    double steady_window = 0.5;
    /// Peak-to-peak band of every signal in that window for Converged.
    double steady_band = 1e-4;
    long max_steps = 20'000'000;
};

enum class OutcomeKind { Converged, Diverged, MaxTimeReached };

std::string to_string(OutcomeKind k);

struct Outcome {
    OutcomeKind kind = OutcomeKind::MaxTimeReached;
    /// Final value of bus3_inverter_current_mag when Converged.
    double steady_value = 0.0;
    /// Time at which integration failed when Diverged.
    double t_fail = 0.0;
    std::string reason;
};

struct SolverStats {
    long steps = 0;
    long rejected = 0;
    long newton_failures = 0;
    long jacobians = 0;
    long factorizations = 0;
    double wall_seconds = 0.0;
};

struct TransientResult {
    std::vector<double> t;
    /// Ordered signal names; each series has the same length as `t`.
    std::vector<std::string> signal_names;
    std::map<std::string, std::vector<double>> signals;
    Outcome outcome;

    ScenarioSpec scenario;
    std::optional<BranchEvent> event;
    double horizon = 0.0;
    SolverSettings settings;
    SolverStats stats;

    /// Largest |x - x0| over accepted steps before any event (all steps when
    /// there is no event).
    double max_pre_event_deviation = 0.0;
    /// States and algebraic variables at the last accepted step, with the
    /// model they belong to.
    Eigen::VectorXd x_final;
    Eigen::VectorXd y_final;
    std::optional<SystemModel> final_system;

    const std::vector<double>& signal(const std::string& name) const;
};

/// TR-BDF2 integration of the DAE from the equilibrium, with an optional
/// branch trip. Failures during integration are reported through the outcome.
TransientResult simulate(const EquilibriumPoint& eq, const std::optional<BranchEvent>& event,
                         double horizon = 5.0, const SolverSettings& settings = {});

/// max |s - steady| over t > t_trip. Throws DomainError unless Converged.
double overshoot(const TransientResult& r, const std::string& signal = kBus3InverterCurrent);

/// Peak deviation of a raw series from `steady` for t > t_start.
double peak_deviation(const std::vector<double>& t, const std::vector<double>& s, double steady,
                      double t_start);

/// Time after `t_start` at which |s - steady| last exceeds 1% of the peak
/// deviation. Returns 0 when the series never leaves the band.
double settling_time(const std::vector<double>& t, const std::vector<double>& s, double steady,
                     double t_start);

/// Oscillation frequency from sign changes of s - steady after `t_start`.
/// Empty when there are fewer than three crossings. Throws DomainError for
/// fewer than four samples.
std::optional<double> dominant_frequency(const std::vector<double>& t, const std::vector<double>& s,
                                         double steady, double t_start);

struct Classification {
    double settling_time = 0.0;
    std::optional<double> dominant_frequency_hz;
    double overshoot = 0.0;
};

Classification classify(const TransientResult& r, const std::string& signal = kBus3InverterCurrent);

void write_trace_csv(std::ostream& os, const TransientResult& r);
std::string metadata_json(const TransientResult& r);

}  // namespace zipe
