#pragma once

#include "zipe/dae.hpp"

#include <Eigen/Core>

#include <complex>
#include <optional>
#include <ostream>
#include <vector>

namespace zipe {

inline constexpr double kReferenceModeThreshold = 1e-6;
inline constexpr double kMaxAlgebraicCondition = 1e12;

/// Central finite-difference partials with step h * max(1, |z_k|).
JacobianBlocks jacobian(const SystemModel& system, const EquilibriumPoint& eq, double h = 1e-6);
JacobianBlocks jacobian(const SystemModel& system, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y, double h = 1e-6);

struct ReducedSystem {
    Eigen::MatrixXd a;
    /// 2-norm condition number of g_y; absent when there are no algebraic variables.
    std::optional<double> g_y_condition;
};

/// A = f_x - f_y g_y^{-1} g_x. Throws AlgebraicSingularityError above `max_condition`.
ReducedSystem reduce(const JacobianBlocks& blocks, double max_condition = kMaxAlgebraicCondition);

struct EigenReport {
    /// Sorted by decreasing real part, then decreasing imaginary part.
    std::vector<std::complex<double>> eigenvalues;
    std::vector<double> freq_hz;
    std::vector<double> damping_ratio;
    std::vector<bool> is_reference_mode;
    double max_real_part = 0.0;
    bool stable = true;
    bool reference_mode_present = false;
    std::optional<double> g_y_condition;
};

EigenReport eigenvalues(const Eigen::MatrixXd& a, double reference_threshold = kReferenceModeThreshold);

struct Participation {
    /// Same order as EigenReport::eigenvalues.
    std::vector<std::complex<double>> eigenvalues;
    /// Row per mode, column per state; rows sum to 1.
    Eigen::MatrixXd factors;
    /// True when the eigenvector matrix was too ill-conditioned to invert and a
    /// pseudo-inverse supplied the left eigenvectors.
    bool used_pseudo_inverse = false;
};

Participation participation_factors(const Eigen::MatrixXd& a);

/// Exact Jacobian at the equilibrium, reduction and eigen-decomposition.
EigenReport analyze(const EquilibriumPoint& eq);
/// Reduced state matrix at the equilibrium (exact Jacobian).
ReducedSystem state_matrix(const EquilibriumPoint& eq);

void write_eigen_csv_header(std::ostream& os);
void write_eigen_csv(std::ostream& os, const ScenarioSpec& scenario, const EigenReport& report);

}  // namespace zipe
