#include "zipe/smallsignal.hpp"

#include "zipe/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>

namespace zipe {

using C = std::complex<double>;

JacobianBlocks jacobian(const SystemModel& system, const EquilibriumPoint& eq, double h)
{
    return jacobian(system, eq.x0, eq.y0, h);
}

JacobianBlocks jacobian(const SystemModel& system, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y, double h)
{
    if (!(h > 0.0)) {
        throw DomainError("finite-difference step must be positive");
    }
    const int nd = system.n_diff;
    const int na = system.n_alg;
    Eigen::MatrixXd jac(nd + na, nd + na);
    Eigen::VectorXd xp = x;
    Eigen::VectorXd yp = y;
    Eigen::VectorXd fp;
    Eigen::VectorXd gp;
    Eigen::VectorXd fm;
    Eigen::VectorXd gm;
    for (int col = 0; col < nd + na; ++col) {
        double& z = col < nd ? xp[col] : yp[col - nd];
        const double z0 = z;
        const double step = h * std::max(1.0, std::abs(z0));
        z = z0 + step;
        residual_into(system, xp, yp, fp, gp);
        z = z0 - step;
        residual_into(system, xp, yp, fm, gm);
        z = z0;
        jac.col(col).head(nd) = (fp - fm) / (2.0 * step);
        jac.col(col).tail(na) = (gp - gm) / (2.0 * step);
    }
    return {jac.topLeftCorner(nd, nd), jac.topRightCorner(nd, na), jac.bottomLeftCorner(na, nd),
            jac.bottomRightCorner(na, na)};
}

ReducedSystem reduce(const JacobianBlocks& b, double max_condition)
{
    const auto nd = b.f_x.rows();
    const auto na = b.g_y.rows();
    if (b.f_x.cols() != nd || b.g_y.cols() != na || b.f_y.rows() != nd || b.f_y.cols() != na ||
        b.g_x.rows() != na || b.g_x.cols() != nd) {
        throw DomainError("Jacobian block dimensions are inconsistent");
    }
    ReducedSystem r;
    if (na == 0) {
        r.a = b.f_x;
        return r;
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(b.g_y);
    const auto& sv = svd.singularValues();
    const double smin = sv[na - 1];
    const double cond = smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity();
    r.g_y_condition = cond;
    if (!(cond <= max_condition)) {
        throw AlgebraicSingularityError(cond);
    }
    r.a = b.f_x - b.f_y * b.g_y.partialPivLu().solve(b.g_x);
    return r;
}

namespace {

std::vector<int> mode_order(const Eigen::VectorXcd& ev)
{
    std::vector<int> idx(static_cast<std::size_t>(ev.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (ev[a].real() != ev[b].real()) {
            return ev[a].real() > ev[b].real();
        }
        return ev[a].imag() > ev[b].imag();
    });
    return idx;
}

Eigen::EigenSolver<Eigen::MatrixXd> solve_eigen(const Eigen::MatrixXd& a, bool vectors)
{
    if (!a.allFinite()) {
        throw DomainError("state matrix contains non-finite entries");
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, vectors);
    if (es.info() != Eigen::Success) {
        throw ConvergenceError("eigenvalue iteration did not converge for a " +
                                   std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                   " state matrix",
                               0, 0.0);
    }
    return es;
}

}  // namespace

EigenReport eigenvalues(const Eigen::MatrixXd& a, double reference_threshold)
{
    EigenReport rep;
    if (a.rows() == 0) {
        return rep;
    }
    const auto es = solve_eigen(a, false);
    const Eigen::VectorXcd ev = es.eigenvalues();
    rep.max_real_part = -std::numeric_limits<double>::infinity();
    for (int k : mode_order(ev)) {
        const C l = ev[k];
        const bool ref = std::abs(l) < reference_threshold;
        rep.eigenvalues.push_back(l);
        rep.freq_hz.push_back(std::abs(l.imag()) / (2.0 * std::numbers::pi));
        rep.damping_ratio.push_back(std::abs(l) > 0.0 ? -l.real() / std::abs(l) : 1.0);
        rep.is_reference_mode.push_back(ref);
        if (ref) {
            rep.reference_mode_present = true;
        } else {
            rep.max_real_part = std::max(rep.max_real_part, l.real());
        }
    }
    rep.stable = rep.max_real_part < 0.0;
    return rep;
}

Participation participation_factors(const Eigen::MatrixXd& a)
{
    Participation out;
    if (a.rows() == 0) {
        return out;
    }
    const auto es = solve_eigen(a, true);
    const Eigen::VectorXcd ev = es.eigenvalues();
    const Eigen::MatrixXcd v = es.eigenvectors();
    Eigen::MatrixXcd w;
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(v);
    if (lu.rcond() > 1e-13) {
        w = lu.inverse();
    } else {
        w = v.completeOrthogonalDecomposition().pseudoInverse();
        out.used_pseudo_inverse = true;
    }
    const auto n = a.rows();
    out.factors.resize(n, n);
    Eigen::Index row = 0;
    for (int k : mode_order(ev)) {
        out.eigenvalues.push_back(ev[k]);
        double total = 0.0;
        for (Eigen::Index s = 0; s < n; ++s) {
            const double p = std::abs(w(k, s) * v(s, k));
            out.factors(row, s) = p;
            total += p;
        }
        if (total > 0.0) {
            out.factors.row(row) /= total;
        }
        ++row;
    }
    return out;
}

ReducedSystem state_matrix(const EquilibriumPoint& eq)
{
    return reduce(exact_jacobian(eq.system, eq.x0, eq.y0));
}

EigenReport analyze(const EquilibriumPoint& eq)
{
    const ReducedSystem r = state_matrix(eq);
    EigenReport rep = eigenvalues(r.a);
    rep.g_y_condition = r.g_y_condition;
    return rep;
}

void write_eigen_csv_header(std::ostream& os)
{
    os << "scenario_id,family,x,line_model,load_scale,re,im,freq_hz,damping_ratio,is_reference_mode\n";
}

void write_eigen_csv(std::ostream& os, const ScenarioSpec& s, const EigenReport& rep)
{
    const auto old = os.precision(12);
    for (std::size_t k = 0; k < rep.eigenvalues.size(); ++k) {
        os << s.id() << ',' << (s.family == Family::ZIP ? "zip" : "zie") << ',' << s.x << ','
           << to_string(s.line_model) << ',' << s.load_scale << ',' << rep.eigenvalues[k].real()
           << ',' << rep.eigenvalues[k].imag() << ',' << rep.freq_hz[k] << ','
           << rep.damping_ratio[k] << ',' << (rep.is_reference_mode[k] ? 1 : 0) << '\n';
    }
    os.precision(old);
}

}  // namespace zipe
