#pragma once

#include "zipe/netdata.hpp"

#include <Eigen/Core>

#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace zipe {

struct BranchFlow {
    std::string id;
    double p_from = 0.0;
    double q_from = 0.0;
    double p_to = 0.0;
    double q_to = 0.0;

    /// Larger apparent power of the two ends.
    double max_apparent() const;
};

struct PFSolution {
    Eigen::VectorXd v;
    Eigen::VectorXd theta;
    Eigen::VectorXd p_inj;
    Eigen::VectorXd q_inj;
    double residual_norm = 0.0;
    int iterations = 0;
    std::vector<BranchFlow> branch_flows;
    std::set<std::string> in_service;
    /// Bus ids in the order used by the vectors above.
    std::vector<int> bus_ids;

    double total_losses_p() const;
    double total_losses_q() const;
};

struct PFOptions {
    double tol = 1e-8;
    int max_iter = 20;
    /// Initial magnitudes/angles; flat start when absent.
    std::optional<Eigen::VectorXd> v_start;
    std::optional<Eigen::VectorXd> theta_start;
    /// Branch subset; all branches when absent.
    std::optional<std::set<std::string>> in_service;
};

/// Loads and generator active setpoints multiplied by load_scale.
NetworkCase scale_loading(const NetworkCase& c, double load_scale);

/// Specified net injections (generation minus nominal load) per bus.
void specified_injections(const NetworkCase& c, Eigen::VectorXd& p, Eigen::VectorXd& q);

/// Newton-Raphson in polar form. Throws ConvergenceError or SingularMatrixError.
PFSolution solve_power_flow(const NetworkCase& c, double tol = 1e-8, int max_iter = 20);
PFSolution solve_power_flow(const NetworkCase& c, const PFOptions& opts);

/// Branch flows and injections implied by a voltage profile.
std::vector<BranchFlow> compute_branch_flows(const NetworkCase& c,
                                             const std::set<std::string>& in_service,
                                             const Eigen::VectorXd& v, const Eigen::VectorXd& theta);

/// Line (non-transformer) with the largest end apparent power; all branches
/// are ranked when the case has no lines. Ties go to the smaller id.
std::string heaviest_loaded_branch(const PFSolution& sol, const NetworkCase& c);
/// Ranks every branch in the solution, transformers included.
std::string heaviest_loaded_branch(const PFSolution& sol);

void write_pf_csv(std::ostream& os, const PFSolution& sol);

}  // namespace zipe
