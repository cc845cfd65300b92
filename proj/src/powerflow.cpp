#include "zipe/powerflow.hpp"

#include "zipe/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <limits>

namespace zipe {

double BranchFlow::max_apparent() const
{
    return std::max(std::hypot(p_from, q_from), std::hypot(p_to, q_to));
}

double PFSolution::total_losses_p() const
{
    double s = 0.0;
    for (const auto& f : branch_flows) {
        s += f.p_from + f.p_to;
    }
    return s;
}

double PFSolution::total_losses_q() const
{
    double s = 0.0;
    for (const auto& f : branch_flows) {
        s += f.q_from + f.q_to;
    }
    return s;
}

NetworkCase scale_loading(const NetworkCase& c, double load_scale)
{
    if (!(load_scale >= 0.0) || !std::isfinite(load_scale)) {
        throw DomainError("load_scale must be a nonnegative finite number");
    }
    NetworkCase out = c;
    for (auto& l : out.loads) {
        l.p0 *= load_scale;
        l.q0 *= load_scale;
    }
    for (auto& g : out.generators) {
        g.p_set *= load_scale;
    }
    return out;
}

void specified_injections(const NetworkCase& c, Eigen::VectorXd& p, Eigen::VectorXd& q)
{
    const auto n = static_cast<Eigen::Index>(c.buses.size());
    p = Eigen::VectorXd::Zero(n);
    q = Eigen::VectorXd::Zero(n);
    for (const auto& g : c.generators) {
        const int k = c.bus_index(g.bus);
        p[k] += g.p_set;
        q[k] += g.q_set;
    }
    for (const auto& l : c.loads) {
        const int k = c.bus_index(l.bus);
        p[k] -= l.p0;
        q[k] -= l.q0;
    }
}

namespace {

void injections(const Eigen::MatrixXcd& y, const Eigen::VectorXd& v, const Eigen::VectorXd& th,
                Eigen::VectorXd& p, Eigen::VectorXd& q)
{
    const Eigen::Index n = v.size();
    Eigen::VectorXcd vc(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        vc[k] = std::polar(v[k], th[k]);
    }
    const Eigen::VectorXcd s = vc.cwiseProduct((y * vc).conjugate());
    p = s.real();
    q = s.imag();
}

}  // namespace

PFSolution solve_power_flow(const NetworkCase& c, double tol, int max_iter)
{
    PFOptions o;
    o.tol = tol;
    o.max_iter = max_iter;
    return solve_power_flow(c, o);
}

PFSolution solve_power_flow(const NetworkCase& c, const PFOptions& opts)
{
    if (!(opts.tol > 0.0)) {
        throw DomainError("power-flow tolerance must be positive");
    }
    if (opts.max_iter < 1) {
        throw DomainError("power-flow max_iter must be at least 1");
    }
    const auto n = static_cast<Eigen::Index>(c.buses.size());
    const std::set<std::string> in_service = opts.in_service.value_or(c.all_branch_ids());
    for (const auto& id : in_service) {
        c.branch(id);
    }
    const Eigen::MatrixXcd y = build_ybus(c, in_service);
    const Eigen::MatrixXd g = y.real();
    const Eigen::MatrixXd b = y.imag();

    Eigen::VectorXd p_spec;
    Eigen::VectorXd q_spec;
    specified_injections(c, p_spec, q_spec);

    // Unknown ordering: angles of non-reference buses, then magnitudes of PQ buses.
    std::vector<int> ang_idx;
    std::vector<int> mag_idx;
    Eigen::VectorXd v = opts.v_start.value_or(Eigen::VectorXd::Ones(n));
    Eigen::VectorXd th = opts.theta_start.value_or(Eigen::VectorXd::Zero(n));
    if (v.size() != n || th.size() != n) {
        throw DomainError("warm-start vectors do not match the bus count");
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& bus = c.buses[static_cast<std::size_t>(k)];
        if (bus.kind != BusKind::Reference) {
            ang_idx.push_back(static_cast<int>(k));
        }
        if (bus.kind == BusKind::PQ) {
            mag_idx.push_back(static_cast<int>(k));
        } else {
            v[k] = bus.v_set;
        }
    }
    const auto na = static_cast<Eigen::Index>(ang_idx.size());
    const auto nm = static_cast<Eigen::Index>(mag_idx.size());
    const Eigen::Index nu = na + nm;

    Eigen::VectorXd p;
    Eigen::VectorXd q;
    auto mismatch = [&](Eigen::VectorXd& f) {
        injections(y, v, th, p, q);
        f.resize(nu);
        for (Eigen::Index a = 0; a < na; ++a) {
            f[a] = p_spec[ang_idx[a]] - p[ang_idx[a]];
        }
        for (Eigen::Index m = 0; m < nm; ++m) {
            f[na + m] = q_spec[mag_idx[m]] - q[mag_idx[m]];
        }
        return nu == 0 ? 0.0 : f.cwiseAbs().maxCoeff();
    };

    Eigen::VectorXd f;
    double err = mismatch(f);
    int iter = 0;
    while (err >= opts.tol) {
        if (iter >= opts.max_iter) {
            throw ConvergenceError("power flow did not converge in " + std::to_string(iter) +
                                       " iterations (mismatch " + std::to_string(err) + " pu)",
                                   iter, err);
        }
        ++iter;
        // Polar Jacobian of (P, Q) with respect to (theta, V).
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(nu, nu);
        auto dP = [&](int i, int k, bool wrt_v) {
            if (i == k) {
                return wrt_v ? p[i] / v[i] + g(i, i) * v[i] : -q[i] - b(i, i) * v[i] * v[i];
            }
            const double t = th[i] - th[k];
            return wrt_v ? v[i] * (g(i, k) * std::cos(t) + b(i, k) * std::sin(t))
                         : v[i] * v[k] * (g(i, k) * std::sin(t) - b(i, k) * std::cos(t));
        };
        auto dQ = [&](int i, int k, bool wrt_v) {
            if (i == k) {
                return wrt_v ? q[i] / v[i] - b(i, i) * v[i] : p[i] - g(i, i) * v[i] * v[i];
            }
            const double t = th[i] - th[k];
            return wrt_v ? v[i] * (g(i, k) * std::sin(t) - b(i, k) * std::cos(t))
                         : -v[i] * v[k] * (g(i, k) * std::cos(t) + b(i, k) * std::sin(t));
        };
        for (Eigen::Index r = 0; r < nu; ++r) {
            const bool row_p = r < na;
            const int i = row_p ? ang_idx[r] : mag_idx[r - na];
            for (Eigen::Index s = 0; s < nu; ++s) {
                const bool col_th = s < na;
                const int k = col_th ? ang_idx[s] : mag_idx[s - na];
                jac(r, s) = row_p ? dP(i, k, !col_th) : dQ(i, k, !col_th);
            }
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        const double rcond = lu.rcond();
        if (!(rcond > 1e-14)) {
            throw SingularMatrixError("power-flow Jacobian singular at iteration " +
                                          std::to_string(iter),
                                      iter, rcond);
        }
        const Eigen::VectorXd dx = lu.solve(f);
        for (Eigen::Index a = 0; a < na; ++a) {
            th[ang_idx[a]] += dx[a];
        }
        for (Eigen::Index m = 0; m < nm; ++m) {
            v[mag_idx[m]] += dx[na + m];
        }
        if (!dx.allFinite() || (v.array() <= 0.0).any()) {
            throw ConvergenceError("power flow diverged (nonpositive voltage magnitude)", iter,
                                   std::numeric_limits<double>::infinity());
        }
        err = mismatch(f);
    }

    PFSolution sol;
    sol.v = v;
    sol.theta = th;
    sol.p_inj = p;
    sol.q_inj = q;
    sol.residual_norm = err;
    sol.iterations = iter;
    sol.in_service = in_service;
    sol.branch_flows = compute_branch_flows(c, in_service, v, th);
    for (const auto& bus : c.buses) {
        sol.bus_ids.push_back(bus.id);
    }
    return sol;
}

std::vector<BranchFlow> compute_branch_flows(const NetworkCase& c,
                                             const std::set<std::string>& in_service,
                                             const Eigen::VectorXd& v, const Eigen::VectorXd& theta)
{
    std::vector<BranchFlow> flows;
    for (const auto& br : c.branches) {
        if (!in_service.contains(br.id)) {
            continue;
        }
        const int f = c.bus_index(br.from_bus);
        const int t = c.bus_index(br.to_bus);
        const Eigen::Matrix2cd s = branch_stamp(br);
        const std::complex<double> vf = std::polar(v[f], theta[f]);
        const std::complex<double> vt = std::polar(v[t], theta[t]);
        const std::complex<double> i_f = s(0, 0) * vf + s(0, 1) * vt;
        const std::complex<double> i_t = s(1, 0) * vf + s(1, 1) * vt;
        const std::complex<double> sf = vf * std::conj(i_f);
        const std::complex<double> st = vt * std::conj(i_t);
        flows.push_back({br.id, sf.real(), sf.imag(), st.real(), st.imag()});
    }
    return flows;
}

namespace {

std::string heaviest_of(const std::vector<const BranchFlow*>& cands)
{
    if (cands.empty()) {
        throw ValidationError("no in-service branch to rank");
    }
    const BranchFlow* best = cands.front();
    for (const BranchFlow* f : cands) {
        const double a = f->max_apparent();
        const double b = best->max_apparent();
        if (a > b || (a == b && f->id < best->id)) {
            best = f;
        }
    }
    return best->id;
}

}  // namespace

std::string heaviest_loaded_branch(const PFSolution& sol)
{
    std::vector<const BranchFlow*> all;
    for (const auto& f : sol.branch_flows) {
        all.push_back(&f);
    }
    return heaviest_of(all);
}

std::string heaviest_loaded_branch(const PFSolution& sol, const NetworkCase& c)
{
    std::vector<const BranchFlow*> lines;
    for (const auto& f : sol.branch_flows) {
        if (!c.branch(f.id).transformer) {
            lines.push_back(&f);
        }
    }
    if (lines.empty()) {
        return heaviest_loaded_branch(sol);
    }
    return heaviest_of(lines);
}

void write_pf_csv(std::ostream& os, const PFSolution& sol)
{
    os << "bus,v_pu,theta_rad,p_inj,q_inj\n";
    os << std::setprecision(12);
    for (std::size_t k = 0; k < sol.bus_ids.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        os << sol.bus_ids[k] << ',' << sol.v[i] << ',' << sol.theta[i] << ',' << sol.p_inj[i] << ','
           << sol.q_inj[i] << '\n';
    }
}

}  // namespace zipe
