#include "zipe/dae.hpp"

#include "models.hpp"
#include "zipe/error.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <type_traits>

namespace zipe {

using C = std::complex<double>;

std::string to_string(LineModel m) { return m == LineModel::StatPi ? "statpi" : "dynpi"; }

LineModel parse_line_model(std::string_view s)
{
    if (s == "statpi") {
        return LineModel::StatPi;
    }
    if (s == "dynpi") {
        return LineModel::DynPi;
    }
    throw ValidationError("unknown line model '" + std::string(s) + "' (expected statpi or dynpi)");
}

void ScenarioSpec::validate() const
{
    if (!(x >= 0.0 && x <= 1.0)) {
        throw ValidationError("scenario x must lie in [0, 1]");
    }
    if (!(load_scale >= 0.0) || !std::isfinite(load_scale)) {
        throw ValidationError("scenario load_scale must be nonnegative");
    }
    if (event && !(event->t_trip >= 0.0)) {
        throw ValidationError("trip time must be nonnegative");
    }
}

std::string ScenarioSpec::id() const
{
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s_x%.2f_%s_ls%.3f", family == Family::ZIP ? "zip" : "zie", x,
                  to_string(line_model).c_str(), load_scale);
    return buf;
}

int SystemModel::index(const std::string& component, const std::string& name) const
{
    const auto it = state_index.find({component, name});
    if (it == state_index.end()) {
        throw ValidationError("no state " + component + "." + name);
    }
    return it->second;
}

int SystemModel::eload_state_count() const
{
    int n = 0;
    for (const auto& s : slots) {
        if (s.kind == SlotKind::Eload) {
            n += s.size;
        }
    }
    return n;
}

Dq<double> SystemModel::bus_voltage(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                    int bus_pos) const
{
    if (scenario.line_model == LineModel::DynPi) {
        return {x[2 * bus_pos], x[2 * bus_pos + 1]};
    }
    return {y[2 * bus_pos], y[2 * bus_pos + 1]};
}

double SystemModel::gfl_current_mag(const Eigen::VectorXd& x, int bus_id) const
{
    const int pos = network.bus_index(bus_id);
    for (const auto& s : slots) {
        if (s.kind == SlotKind::Gfl && s.bus == pos) {
            return kConverterPowerFactor *
                   std::hypot(x[s.offset + detail::cv::ig_d], x[s.offset + detail::cv::ig_q]);
        }
    }
    throw ValidationError("no GFL source at bus " + std::to_string(bus_id));
}

namespace {

bool is_dynpi(const SystemModel& s) { return s.scenario.line_model == LineModel::DynPi; }

std::string gen_component(const GeneratorSpec& g)
{
    return "gen" + std::to_string(g.bus) + "_" + to_string(g.kind);
}

Eigen::VectorXd line_charging(const NetworkCase& c, const std::set<std::string>& in_service)
{
    Eigen::VectorXd cap = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.buses.size()));
    for (const auto& br : c.branches) {
        if (in_service.contains(br.id)) {
            cap[c.bus_index(br.from_bus)] += br.b / 2.0;
            cap[c.bus_index(br.to_bus)] += br.b / 2.0;
        }
    }
    return cap;
}

// Lays out slots, keys and network matrices for the current branch set.
void build_structure(SystemModel& s)
{
    const NetworkCase& c = s.network;
    const bool dyn = is_dynpi(s);
    s.slots.clear();
    s.keys.clear();
    s.state_index.clear();
    int offset = 0;

    auto add = [&](SlotKind kind, const std::string& comp, int bus, int to_bus, int source,
                   const std::vector<std::string_view>& names) {
        Slot sl{kind, comp, bus, to_bus, offset, static_cast<int>(names.size()), source};
        for (auto n : names) {
            s.keys.push_back({comp, std::string(n)});
        }
        offset += sl.size;
        s.slots.push_back(sl);
        return sl;
    };

    if (dyn) {
        for (std::size_t k = 0; k < c.buses.size(); ++k) {
            add(SlotKind::BusVoltage, "bus" + std::to_string(c.buses[k].id), static_cast<int>(k), 0,
                static_cast<int>(k), {"v_d", "v_q"});
        }
    }
    const auto cv_names = converter_state_names();
    const std::vector<std::string_view> conv(cv_names.begin(), cv_names.end());
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        const auto& gen = c.generators[g];
        const int bus = c.bus_index(gen.bus);
        switch (gen.kind) {
        case GeneratorKind::SM:
            add(SlotKind::Sm, gen_component(gen), bus, 0, static_cast<int>(g), sm_state_names(dyn));
            break;
        case GeneratorKind::GFM_VSM:
            add(SlotKind::Vsm, gen_component(gen), bus, 0, static_cast<int>(g), vsm_state_names());
            break;
        case GeneratorKind::GFL:
            add(SlotKind::Gfl, gen_component(gen), bus, 0, static_cast<int>(g), conv);
            break;
        }
    }
    if (dyn) {
        for (std::size_t b = 0; b < c.branches.size(); ++b) {
            const auto& br = c.branches[b];
            if (s.in_service.contains(br.id)) {
                add(SlotKind::Line, "line" + br.id, c.bus_index(br.from_bus),
                    c.bus_index(br.to_bus), static_cast<int>(b), {"i_d", "i_q"});
            }
        }
    }
    std::map<int, int> seen;
    for (std::size_t l = 0; l < s.loads.size(); ++l) {
        auto& lm = s.loads[l];
        lm.e_offset = -1;
        if (!lm.has_e) {
            continue;
        }
        const int bus_id = c.buses[static_cast<std::size_t>(lm.bus)].id;
        std::string comp = "load" + std::to_string(bus_id) + "_E";
        if (const int n = seen[bus_id]++; n > 0) {
            comp += "#" + std::to_string(n);
        }
        lm.e_offset = offset;
        add(SlotKind::Eload, comp, lm.bus, 0, static_cast<int>(l), conv);
    }
    s.n_diff = offset;
    s.n_alg = 0;
    if (!dyn) {
        for (const auto& bus : c.buses) {
            s.keys.push_back({"bus" + std::to_string(bus.id), "v_d"});
            s.keys.push_back({"bus" + std::to_string(bus.id), "v_q"});
        }
        s.n_alg = 2 * static_cast<int>(c.buses.size());
    }
    for (std::size_t k = 0; k < s.keys.size(); ++k) {
        s.state_index.emplace(s.keys[k], static_cast<int>(k));
    }

    const Eigen::VectorXd charging = line_charging(c, s.in_service);
    if (s.fictitious_capacitance.size() != charging.size()) {
        s.fictitious_capacitance = Eigen::VectorXd::Zero(charging.size());
    }
    for (Eigen::Index k = 0; k < charging.size(); ++k) {
        if (charging[k] == 0.0) {
            s.fictitious_capacitance[k] = kFictitiousCapacitance;
        }
    }
    s.bus_capacitance = charging + s.fictitious_capacitance;
    const Eigen::MatrixXcd y = build_ybus(c, s.in_service);
    s.ybus_g = y.real();
    s.ybus_b = y.imag();
}

struct Probe {
    std::vector<Dq<double>> gen;   // per bus, delivered by generators
    std::vector<Dq<double>> load;  // per bus, drawn by loads
};

template <class T>
void eval_residual(const SystemModel& s, const T* x, const T* y, T* f, T* g, Probe* probe = nullptr)
{
    const NetworkCase& c = s.network;
    const auto n = c.buses.size();
    const bool dyn = is_dynpi(s);
    const double wb = s.omega_base;

    std::vector<Dq<T>> v(n);
    for (std::size_t k = 0; k < n; ++k) {
        const T* src = dyn ? x + 2 * k : y + 2 * k;
        v[k] = Dq<T>(src[0], src[1]);
    }
    std::vector<Dq<T>> inj(n, Dq<T>(T(0.0), T(0.0)));
    if constexpr (std::is_same_v<T, double>) {
        if (probe) {
            probe->gen.assign(n, Dq<double>(0.0, 0.0));
            probe->load.assign(n, Dq<double>(0.0, 0.0));
        }
    }
    auto record = [&](bool is_gen, int bus, const Dq<T>& i) {
        if constexpr (std::is_same_v<T, double>) {
            if (probe) {
                (is_gen ? probe->gen : probe->load)[static_cast<std::size_t>(bus)] += i;
            }
        }
    };

    for (const auto& sl : s.slots) {
        const auto b = static_cast<std::size_t>(sl.bus);
        switch (sl.kind) {
        case SlotKind::BusVoltage:
        case SlotKind::Line:
            break;
        case SlotKind::Sm: {
            const auto& gen = c.generators[static_cast<std::size_t>(sl.source)];
            const Dq<T> i = detail::sm_rhs(std::get<SmParams>(gen.params),
                                           s.gen_setpoints[static_cast<std::size_t>(sl.source)].sm,
                                           wb, dyn, x + sl.offset, v[b], f + sl.offset);
            inj[b] += i;
            record(true, sl.bus, i);
            break;
        }
        case SlotKind::Vsm: {
            const auto& gen = c.generators[static_cast<std::size_t>(sl.source)];
            const Dq<T> i = detail::vsm_rhs(std::get<VsmParams>(gen.params),
                                            s.gen_setpoints[static_cast<std::size_t>(sl.source)].vsm,
                                            wb, x + sl.offset, v[b], f + sl.offset);
            inj[b] += i;
            record(true, sl.bus, i);
            break;
        }
        case SlotKind::Gfl: {
            const auto& gen = c.generators[static_cast<std::size_t>(sl.source)];
            const auto& sp = s.gen_setpoints[static_cast<std::size_t>(sl.source)];
            const Dq<T> i =
                detail::converter_rhs(-1.0, std::get<ConverterParams>(gen.params), wb, 1.0,
                                      x + sl.offset, v[b], sp.p_ref, sp.q_ref, f + sl.offset);
            inj[b] += i;
            record(true, sl.bus, i);
            break;
        }
        case SlotKind::Eload: {
            const auto& lm = s.loads[static_cast<std::size_t>(sl.source)];
            const Dq<T> i = detail::converter_rhs(1.0, lm.eload, wb, 1.0, x + sl.offset, v[b],
                                                  lm.e_p_ref, lm.e_q_ref, f + sl.offset);
            inj[b] += i;
            record(false, sl.bus, -i);
            break;
        }
        }
    }
    for (const auto& lm : s.loads) {
        const detail::ZipCoeffs zc{lm.pz, lm.qz, lm.pi, lm.qi, lm.pp, lm.qp, lm.v0};
        const auto b = static_cast<std::size_t>(lm.bus);
        const Dq<T> i = detail::zip_current(zc, v[b], s.voltage_floor);
        inj[b] -= i;
        record(false, lm.bus, i);
    }

    if (dyn) {
        for (const auto& sl : s.slots) {
            if (sl.kind != SlotKind::Line) {
                continue;
            }
            const auto& br = c.branches[static_cast<std::size_t>(sl.source)];
            const auto fb = static_cast<std::size_t>(sl.bus);
            const auto tb = static_cast<std::size_t>(sl.to_bus);
            const Dq<T> i(x[sl.offset], x[sl.offset + 1]);
            const Dq<T> di = detail::line_rhs(br.r, br.x, wb, 1.0, i, v[fb], v[tb]);
            f[sl.offset] = di.d;
            f[sl.offset + 1] = di.q;
            inj[fb] -= i;
            inj[tb] += i;
        }
        for (std::size_t k = 0; k < n; ++k) {
            const double cap = s.bus_capacitance[static_cast<Eigen::Index>(k)];
            const Dq<T> dv = (inj[k] - jmul(v[k]) * cap) * (wb / cap);
            f[2 * k] = dv.d;
            f[2 * k + 1] = dv.q;
        }
    } else {
        for (std::size_t k = 0; k < n; ++k) {
            T gd = inj[k].d;
            T gq = inj[k].q;
            for (std::size_t j = 0; j < n; ++j) {
                const double gkj = s.ybus_g(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
                const double bkj = s.ybus_b(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
                if (gkj == 0.0 && bkj == 0.0) {
                    continue;
                }
                gd -= gkj * v[j].d - bkj * v[j].q;
                gq -= gkj * v[j].q + bkj * v[j].d;
            }
            g[2 * k] = gd;
            g[2 * k + 1] = gq;
        }
    }
}

// Columns [c0, c1) of the stacked Jacobian d(f, g)/d(x, y).
Eigen::MatrixXd jacobian_columns(const SystemModel& s, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y, int c0, int c1)
{
    const int nd = s.n_diff;
    const int na = s.n_alg;
    std::vector<ADScalar> xa(static_cast<std::size_t>(nd));
    std::vector<ADScalar> ya(static_cast<std::size_t>(na));
    std::vector<ADScalar> fa(static_cast<std::size_t>(nd));
    std::vector<ADScalar> ga(static_cast<std::size_t>(na));
    const Eigen::Matrix<double, 1, 1> zero = Eigen::Matrix<double, 1, 1>::Zero();
    const Eigen::Matrix<double, 1, 1> one = Eigen::Matrix<double, 1, 1>::Ones();
    for (int k = 0; k < nd; ++k) {
        xa[static_cast<std::size_t>(k)] = ADScalar(x[k], zero);
    }
    for (int k = 0; k < na; ++k) {
        ya[static_cast<std::size_t>(k)] = ADScalar(y[k], zero);
    }
    Eigen::MatrixXd jac(nd + na, c1 - c0);
    for (int col = c0; col < c1; ++col) {
        ADScalar& seed = col < nd ? xa[static_cast<std::size_t>(col)]
                                  : ya[static_cast<std::size_t>(col - nd)];
        seed.derivatives() = one;
        eval_residual<ADScalar>(s, xa.data(), ya.data(), fa.data(), ga.data());
        seed.derivatives() = zero;
        for (int r = 0; r < nd; ++r) {
            const auto& d = fa[static_cast<std::size_t>(r)].derivatives();
            jac(r, col - c0) = d.size() ? d[0] : 0.0;
        }
        for (int r = 0; r < na; ++r) {
            const auto& d = ga[static_cast<std::size_t>(r)].derivatives();
            jac(nd + r, col - c0) = d.size() ? d[0] : 0.0;
        }
    }
    return jac;
}

double condition_number(const Eigen::MatrixXd& m)
{
    if (m.size() == 0) {
        return 1.0;
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    const double smin = sv[sv.size() - 1];
    return smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity();
}

}  // namespace

void residual_into(const SystemModel& system, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                   Eigen::VectorXd& f, Eigen::VectorXd& g)
{
    if (x.size() != system.n_diff || y.size() != system.n_alg) {
        throw DomainError("state vector sizes do not match the model");
    }
    f.resize(system.n_diff);
    g.resize(system.n_alg);
    eval_residual<double>(system, x.data(), y.data(), f.data(), g.data());
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> residual(const SystemModel& system,
                                                     const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& y, double /*t*/)
{
    std::pair<Eigen::VectorXd, Eigen::VectorXd> out;
    residual_into(system, x, y, out.first, out.second);
    return out;
}

JacobianBlocks exact_jacobian(const SystemModel& system, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y)
{
    const int nd = system.n_diff;
    const int na = system.n_alg;
    const Eigen::MatrixXd j = jacobian_columns(system, x, y, 0, nd + na);
    return {j.topLeftCorner(nd, nd), j.topRightCorner(nd, na), j.bottomLeftCorner(na, nd),
            j.bottomRightCorner(na, na)};
}

SystemModel assemble(const NetworkCase& c, const ScenarioSpec& scenario)
{
    scenario.validate();
    c.validate();
    SystemModel s;
    s.scenario = scenario;
    s.network = scale_loading(c, scenario.load_scale);
    s.in_service = c.all_branch_ids();
    s.omega_base = c.omega_base();
    s.gen_setpoints.assign(c.generators.size(), GenSetpoints{});

    const CompositionVector comp = composition_from_x(scenario.x, scenario.family);
    for (auto& l : s.network.loads) {
        l.eta = comp;
        l.gamma = comp;
        if (l.has_e() && !l.eload_params) {
            throw ValidationError("load at bus " + std::to_string(l.bus) +
                                  " has an E weight but no eload_params");
        }
        LoadModel lm;
        lm.bus = s.network.bus_index(l.bus);
        lm.pz = l.p0 * comp.z;
        lm.qz = l.q0 * comp.z;
        lm.pi = l.p0 * comp.i;
        lm.qi = l.q0 * comp.i;
        lm.pp = l.p0 * comp.p;
        lm.qp = l.q0 * comp.p;
        lm.v0 = l.v0;
        lm.has_e = l.has_e();
        if (lm.has_e) {
            lm.eload = *l.eload_params;
            lm.e_p_ref = l.p0 * comp.e;
            lm.e_q_ref = l.q0 * comp.e;
        }
        s.loads.push_back(lm);
    }
    build_structure(s);
    return s;
}

PFSolution solve_scenario_power_flow(const SystemModel& system, double tol, int max_iter)
{
    PFOptions o;
    o.tol = tol;
    o.max_iter = max_iter;
    o.in_service = system.in_service;
    return solve_power_flow(system.network, o);
}

EquilibriumPoint initialize(const SystemModel& system, const PFSolution& pf_in, double max_residual)
{
    const NetworkCase& c = system.network;
    const auto n = static_cast<Eigen::Index>(c.buses.size());
    if (pf_in.v.size() != n || pf_in.theta.size() != n) {
        throw InitializationError("power-flow solution does not match the network bus count");
    }
    // Tighten the supplied solution so that stiff network equations start at rest.
    PFSolution pf = pf_in;
    try {
        PFOptions o;
        o.tol = 1e-12;
        o.max_iter = 10;
        o.v_start = pf_in.v;
        o.theta_start = pf_in.theta;
        o.in_service = system.in_service;
        pf = solve_power_flow(c, o);
    } catch (const Error&) {
        pf = pf_in;
    }

    EquilibriumPoint eq;
    eq.system = system;
    SystemModel& s = eq.system;
    const bool dyn = is_dynpi(s);

    std::vector<C> v(static_cast<std::size_t>(n));
    std::vector<C> s_dev(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        v[kk] = std::polar(pf.v[k], pf.theta[k]);
        s_dev[kk] = C(pf.p_inj[k], pf.q_inj[k]);
        if (dyn) {
            s_dev[kk] -= C(0.0, s.fictitious_capacitance[k] * std::norm(v[kk]));
        }
    }
    for (const auto& l : c.loads) {
        s_dev[static_cast<std::size_t>(c.bus_index(l.bus))] += C(l.p0, l.q0);
    }

    Eigen::VectorXd x = Eigen::VectorXd::Zero(s.n_diff);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(s.n_alg);
    std::vector<bool> has_gen(static_cast<std::size_t>(n), false);

    for (const auto& sl : s.slots) {
        const auto b = static_cast<std::size_t>(sl.bus);
        switch (sl.kind) {
        case SlotKind::BusVoltage:
            x[sl.offset] = v[b].real();
            x[sl.offset + 1] = v[b].imag();
            break;
        case SlotKind::Line: {
            const auto& br = c.branches[static_cast<std::size_t>(sl.source)];
            const C i = (v[b] - v[static_cast<std::size_t>(sl.to_bus)]) / C(br.r, br.x);
            x[sl.offset] = i.real();
            x[sl.offset + 1] = i.imag();
            break;
        }
        case SlotKind::Sm: {
            const auto& gen = c.generators[static_cast<std::size_t>(sl.source)];
            const SmInit init = initialize_sm(std::get<SmParams>(gen.params), v[b], s_dev[b], dyn);
            x.segment(sl.offset, sl.size) = init.state;
            s.gen_setpoints[static_cast<std::size_t>(sl.source)].sm = init.setpoints;
            has_gen[b] = true;
            break;
        }
        case SlotKind::Vsm: {
            const auto& gen = c.generators[static_cast<std::size_t>(sl.source)];
            const VsmInit init = initialize_vsm(std::get<VsmParams>(gen.params), v[b], s_dev[b]);
            x.segment(sl.offset, sl.size) = init.state;
            s.gen_setpoints[static_cast<std::size_t>(sl.source)].vsm = init.setpoints;
            has_gen[b] = true;
            break;
        }
        case SlotKind::Gfl: {
            const auto& gen = c.generators[static_cast<std::size_t>(sl.source)];
            auto& sp = s.gen_setpoints[static_cast<std::size_t>(sl.source)];
            sp.p_ref = s_dev[b].real();
            sp.q_ref = s_dev[b].imag();
            const EloadState st = initialize_converter(
                ConverterRole::Source, std::get<ConverterParams>(gen.params), from_complex(v[b]),
                sp.p_ref, sp.q_ref);
            const auto a = st.to_array();
            for (int k = 0; k < sl.size; ++k) {
                x[sl.offset + k] = a[static_cast<std::size_t>(k)];
            }
            has_gen[b] = true;
            break;
        }
        case SlotKind::Eload: {
            const auto& lm = s.loads[static_cast<std::size_t>(sl.source)];
            const EloadState st = initialize_converter(ConverterRole::Load, lm.eload,
                                                       from_complex(v[b]), lm.e_p_ref, lm.e_q_ref);
            const auto a = st.to_array();
            for (int k = 0; k < sl.size; ++k) {
                x[sl.offset + k] = a[static_cast<std::size_t>(k)];
            }
            break;
        }
        }
    }
    if (dyn) {
        for (Eigen::Index k = 0; k < n; ++k) {
            if (s.fictitious_capacitance[k] > 0.0 && !has_gen[static_cast<std::size_t>(k)]) {
                throw InitializationError("bus " + std::to_string(c.buses[static_cast<std::size_t>(k)].id) +
                                          " needs fictitious capacitance but has no generator to "
                                          "balance its reactive power");
            }
        }
    }
    for (auto& lm : s.loads) {
        lm.v0 = std::abs(v[static_cast<std::size_t>(lm.bus)]);
    }
    if (!dyn) {
        for (Eigen::Index k = 0; k < n; ++k) {
            y[2 * k] = v[static_cast<std::size_t>(k)].real();
            y[2 * k + 1] = v[static_cast<std::size_t>(k)].imag();
        }
    }
    s.initialized = true;

    Eigen::VectorXd f;
    Eigen::VectorXd g;
    residual_into(s, x, y, f, g);
    if (dyn) {
        // Small bus capacitances amplify rounding in the nodal balance; fold the
        // leftover current into the generator's output current state.
        for (const auto& sl : s.slots) {
            const double cap = s.bus_capacitance[sl.bus];
            const double mis_d = f[2 * sl.bus] * cap / s.omega_base;
            const double mis_q = f[2 * sl.bus + 1] * cap / s.omega_base;
            int id = -1;
            double scale = 1.0;
            if (sl.kind == SlotKind::Sm) {
                id = sl.offset + detail::sm::i_d;
            } else if (sl.kind == SlotKind::Vsm) {
                id = sl.offset + detail::vsm::ig_d;
            } else if (sl.kind == SlotKind::Gfl) {
                id = sl.offset + detail::cv::ig_d;
                scale = 1.0 / kConverterPowerFactor;
            }
            if (id >= 0) {
                x[id] -= mis_d * scale;
                x[id + 1] -= mis_q * scale;
            }
        }
        residual_into(s, x, y, f, g);
    }
    double worst = 0.0;
    int worst_idx = -1;
    for (Eigen::Index k = 0; k < f.size() + g.size(); ++k) {
        const double r = std::abs(k < f.size() ? f[k] : g[k - f.size()]);
        if (!(r <= worst)) {
            worst = r;
            worst_idx = static_cast<int>(k);
        }
    }
    if (!(worst < max_residual)) {
        const auto& key = s.keys[static_cast<std::size_t>(worst_idx)];
        throw InitializationError("initialization residual " + std::to_string(worst) + " at " +
                                  key.component + "." + key.name);
    }
    eq.x0 = std::move(x);
    eq.y0 = std::move(y);
    eq.pf = std::move(pf);
    eq.residual_inf_norm = worst;
    return eq;
}

EquilibriumPoint equilibrium_for(const NetworkCase& c, const ScenarioSpec& scenario)
{
    const SystemModel s = assemble(c, scenario);
    return initialize(s, solve_scenario_power_flow(s));
}

SystemModel apply_branch_trip(const SystemModel& system, const std::string& branch_id)
{
    system.network.branch(branch_id);
    if (!system.in_service.contains(branch_id)) {
        throw ValidationError("branch '" + branch_id + "' is not in service");
    }
    SystemModel s = system;
    s.in_service.erase(branch_id);
    build_structure(s);
    return s;
}

SystemModel restore_branch(const SystemModel& system, const std::string& branch_id)
{
    system.network.branch(branch_id);
    if (system.in_service.contains(branch_id)) {
        throw ValidationError("branch '" + branch_id + "' is already in service");
    }
    SystemModel s = system;
    s.in_service.insert(branch_id);
    // Fictitious capacitance reverts to what the restored topology needs.
    s.fictitious_capacitance.resize(0);
    build_structure(s);
    return s;
}

Eigen::VectorXd remap_states(const SystemModel& from, const SystemModel& to,
                             const Eigen::VectorXd& x_from)
{
    Eigen::VectorXd x = Eigen::VectorXd::Zero(to.n_diff);
    for (int k = 0; k < to.n_diff; ++k) {
        const auto it = from.state_index.find(to.keys[static_cast<std::size_t>(k)]);
        if (it != from.state_index.end() && it->second < from.n_diff) {
            x[k] = x_from[it->second];
        }
    }
    return x;
}

Eigen::VectorXd statpi_network_solve(const SystemModel& system, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& y_guess, double tol, int max_iter)
{
    if (system.n_alg == 0) {
        return Eigen::VectorXd(0);
    }
    Eigen::VectorXd y = y_guess;
    Eigen::VectorXd f;
    Eigen::VectorXd g;
    residual_into(system, x, y, f, g);
    double err = g.cwiseAbs().maxCoeff();
    int iter = 0;
    while (!(err < tol)) {
        if (iter >= max_iter || !std::isfinite(err)) {
            throw ConvergenceError("network voltage solve did not converge", iter, err);
        }
        ++iter;
        const Eigen::MatrixXd gy = jacobian_columns(system, x, y, system.n_diff, system.n_total())
                                       .bottomRows(system.n_alg);
        const double cond = condition_number(gy);
        if (!(cond <= 1e12)) {
            throw AlgebraicSingularityError(cond);
        }
        y -= gy.partialPivLu().solve(g);
        residual_into(system, x, y, f, g);
        err = g.cwiseAbs().maxCoeff();
    }
    return y;
}

PowerBalance power_balance(const SystemModel& system, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y)
{
    Probe probe;
    Eigen::VectorXd f(system.n_diff);
    Eigen::VectorXd g(system.n_alg);
    eval_residual<double>(system, x.data(), y.data(), f.data(), g.data(), &probe);
    PowerBalance pb;
    const auto n = static_cast<Eigen::Index>(system.network.buses.size());
    Eigen::VectorXd vm(n);
    Eigen::VectorXd va(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Dq<double> v = system.bus_voltage(x, y, static_cast<int>(k));
        const auto kk = static_cast<std::size_t>(k);
        pb.generation_p += dot(v, probe.gen[kk]);
        pb.load_p += dot(v, probe.load[kk]);
        vm[k] = magnitude(v);
        va[k] = std::atan2(v.q, v.d);
    }
    for (const auto& fl : compute_branch_flows(system.network, system.in_service, vm, va)) {
        pb.losses_p += fl.p_from + fl.p_to;
    }
    return pb;
}

}  // namespace zipe
