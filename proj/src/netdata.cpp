#include "zipe/netdata.hpp"

#include "zipe/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace zipe {

using json = nlohmann::json;

namespace {

void require(bool ok, const std::string& msg)
{
    if (!ok) {
        throw ValidationError(msg);
    }
}

BusKind parse_bus_kind(const std::string& s)
{
    if (s == "Reference") {
        return BusKind::Reference;
    }
    if (s == "PV") {
        return BusKind::PV;
    }
    if (s == "PQ") {
        return BusKind::PQ;
    }
    throw ParseError("unknown bus kind '" + s + "'");
}

GeneratorKind parse_gen_kind(const std::string& s)
{
    if (s == "SM") {
        return GeneratorKind::SM;
    }
    if (s == "GFM_VSM") {
        return GeneratorKind::GFM_VSM;
    }
    if (s == "GFL") {
        return GeneratorKind::GFL;
    }
    throw ParseError("unknown generator kind '" + s + "'");
}

// Optional numeric field with default.
template <class T>
void get_opt(const json& j, const char* key, T& out)
{
    if (auto it = j.find(key); it != j.end()) {
        out = it->get<T>();
    }
}

CompositionVector parse_composition(const json& j)
{
    if (!j.is_array() || j.size() != 4) {
        throw ParseError("composition vector must be a 4-array [z, i, p, e]");
    }
    return CompositionVector::from_array({j[0].get<double>(), j[1].get<double>(),
                                          j[2].get<double>(), j[3].get<double>()});
}

json composition_json(const CompositionVector& c)
{
    return json::array({c.z, c.i, c.p, c.e});
}

ConverterParams parse_converter(const json& j)
{
    ConverterParams p;
    get_opt(j, "lf", p.lf);
    get_opt(j, "rf", p.rf);
    get_opt(j, "cf", p.cf);
    get_opt(j, "lg", p.lg);
    get_opt(j, "rg", p.rg);
    get_opt(j, "kp_pll", p.kp_pll);
    get_opt(j, "ki_pll", p.ki_pll);
    get_opt(j, "kp_p", p.kp_p);
    get_opt(j, "ki_p", p.ki_p);
    get_opt(j, "kp_q", p.kp_q);
    get_opt(j, "ki_q", p.ki_q);
    get_opt(j, "kp_c", p.kp_c);
    get_opt(j, "ki_c", p.ki_c);
    get_opt(j, "i_base", p.i_base);
    return p;
}

json converter_json(const ConverterParams& p)
{
    return {{"lf", p.lf},         {"rf", p.rf},         {"cf", p.cf},     {"lg", p.lg},
            {"rg", p.rg},         {"kp_pll", p.kp_pll}, {"ki_pll", p.ki_pll},
            {"kp_p", p.kp_p},     {"ki_p", p.ki_p},     {"kp_q", p.kp_q}, {"ki_q", p.ki_q},
            {"kp_c", p.kp_c},     {"ki_c", p.ki_c},     {"i_base", p.i_base}};
}

SmParams parse_sm(const json& j, double system_mva)
{
    SmParams p;
    get_opt(j, "h", p.h);
    get_opt(j, "d", p.d);
    get_opt(j, "xd", p.xd);
    get_opt(j, "xq", p.xq);
    get_opt(j, "xd_p", p.xd_p);
    get_opt(j, "xq_p", p.xq_p);
    get_opt(j, "td0_p", p.td0_p);
    get_opt(j, "tq0_p", p.tq0_p);
    get_opt(j, "ra", p.ra);
    if (auto it = j.find("avr"); it != j.end()) {
        get_opt(*it, "ka", p.avr.ka);
        get_opt(*it, "ta", p.avr.ta);
        get_opt(*it, "v_ref", p.avr.v_ref);
    }
    if (auto it = j.find("gov"); it != j.end()) {
        get_opt(*it, "r_droop", p.gov.r_droop);
        get_opt(*it, "tg", p.gov.tg);
        get_opt(*it, "p_ref", p.gov.p_ref);
    }
    // Machine data given on its own rating is moved to the system base.
    if (auto it = j.find("mva_base"); it != j.end()) {
        const double ratio = system_mva / it->get<double>();
        if (!(ratio > 0.0) || !std::isfinite(ratio)) {
            throw ValidationError("SM mva_base must be positive");
        }
        p.h /= ratio;
        p.d /= ratio;
        p.xd *= ratio;
        p.xq *= ratio;
        p.xd_p *= ratio;
        p.xq_p *= ratio;
        p.ra *= ratio;
        p.gov.r_droop *= ratio;
    }
    return p;
}

json sm_json(const SmParams& p)
{
    return {{"h", p.h},         {"d", p.d},         {"xd", p.xd},
            {"xq", p.xq},       {"xd_p", p.xd_p},   {"xq_p", p.xq_p},
            {"td0_p", p.td0_p}, {"tq0_p", p.tq0_p}, {"ra", p.ra},
            {"avr", {{"ka", p.avr.ka}, {"ta", p.avr.ta}, {"v_ref", p.avr.v_ref}}},
            {"gov", {{"r_droop", p.gov.r_droop}, {"tg", p.gov.tg}, {"p_ref", p.gov.p_ref}}}};
}

VsmParams parse_vsm(const json& j)
{
    VsmParams p;
    get_opt(j, "ta", p.ta);
    get_opt(j, "kd", p.kd);
    get_opt(j, "k_omega", p.k_omega);
    get_opt(j, "kq", p.kq);
    get_opt(j, "omega_f", p.omega_f);
    get_opt(j, "kpv", p.kpv);
    get_opt(j, "kiv", p.kiv);
    get_opt(j, "kffi", p.kffi);
    get_opt(j, "rv", p.rv);
    get_opt(j, "lv", p.lv);
    get_opt(j, "kpc", p.kpc);
    get_opt(j, "kic", p.kic);
    get_opt(j, "kffv", p.kffv);
    get_opt(j, "kad", p.kad);
    get_opt(j, "omega_ad", p.omega_ad);
    get_opt(j, "lf", p.lf);
    get_opt(j, "rf", p.rf);
    get_opt(j, "cf", p.cf);
    get_opt(j, "lg", p.lg);
    get_opt(j, "rg", p.rg);
    get_opt(j, "kp_pll", p.kp_pll);
    get_opt(j, "ki_pll", p.ki_pll);
    return p;
}

json vsm_json(const VsmParams& p)
{
    return {{"ta", p.ta},       {"kd", p.kd},     {"k_omega", p.k_omega},
            {"kq", p.kq},       {"omega_f", p.omega_f},
            {"kpv", p.kpv},     {"kiv", p.kiv},   {"kffi", p.kffi},
            {"rv", p.rv},       {"lv", p.lv},     {"kpc", p.kpc},
            {"kic", p.kic},     {"kffv", p.kffv}, {"kad", p.kad},
            {"omega_ad", p.omega_ad},
            {"lf", p.lf},       {"rf", p.rf},     {"cf", p.cf},
            {"lg", p.lg},       {"rg", p.rg},     {"kp_pll", p.kp_pll},
            {"ki_pll", p.ki_pll}};
}

NetworkCase parse(const json& root)
{
    if (!root.is_object()) {
        throw ParseError("case root must be a JSON object");
    }
    NetworkCase c;
    c.base_mva = root.at("base_mva").get<double>();
    c.f_nom = root.at("f_nom").get<double>();

    for (const auto& jb : root.at("buses")) {
        Bus b;
        b.id = jb.at("id").get<int>();
        b.kind = parse_bus_kind(jb.at("kind").get<std::string>());
        get_opt(jb, "v_set", b.v_set);
        get_opt(jb, "v_nom", b.v_nom);
        c.buses.push_back(b);
    }
    for (const auto& jb : root.at("branches")) {
        BranchParams br;
        br.id = jb.at("id").get<std::string>();
        br.from_bus = jb.at("from_bus").get<int>();
        br.to_bus = jb.at("to_bus").get<int>();
        br.r = jb.at("r").get<double>();
        br.x = jb.at("x").get<double>();
        get_opt(jb, "b", br.b);
        get_opt(jb, "transformer", br.transformer);
        c.branches.push_back(br);
    }
    for (const auto& jg : root.at("generators")) {
        GeneratorSpec g;
        g.bus = jg.at("bus").get<int>();
        g.kind = parse_gen_kind(jg.at("kind").get<std::string>());
        get_opt(jg, "p_set", g.p_set);
        get_opt(jg, "q_set", g.q_set);
        const json params = jg.value("params", json::object());
        switch (g.kind) {
        case GeneratorKind::SM:
            g.params = parse_sm(params, c.base_mva);
            break;
        case GeneratorKind::GFM_VSM:
            g.params = parse_vsm(params);
            break;
        case GeneratorKind::GFL:
            g.params = parse_converter(params);
            break;
        }
        c.generators.push_back(std::move(g));
    }
    for (const auto& jl : root.at("loads")) {
        LoadSpec l;
        l.bus = jl.at("bus").get<int>();
        l.p0 = jl.at("p0").get<double>();
        l.q0 = jl.at("q0").get<double>();
        get_opt(jl, "v0", l.v0);
        if (auto it = jl.find("eta"); it != jl.end()) {
            l.eta = parse_composition(*it);
        }
        if (auto it = jl.find("gamma"); it != jl.end()) {
            l.gamma = parse_composition(*it);
        }
        if (auto it = jl.find("eload_params"); it != jl.end() && !it->is_null()) {
            l.eload_params = parse_converter(*it);
        }
        c.loads.push_back(std::move(l));
    }
    std::sort(c.buses.begin(), c.buses.end(),
              [](const Bus& a, const Bus& b) { return a.id < b.id; });
    return c;
}

}  // namespace

void CompositionVector::validate() const
{
    for (double w : as_array()) {
        require(std::isfinite(w) && w >= 0.0 && w <= 1.0,
                "composition weights must lie in [0, 1]");
    }
    require(std::abs(z + i + p + e - 1.0) <= 1e-12, "composition weights must sum to 1");
}

CompositionVector CompositionVector::from_array(const std::array<double, 4>& a)
{
    return {a[0], a[1], a[2], a[3]};
}

void ConverterParams::validate() const
{
    require(lf > 0.0 && cf > 0.0 && lg > 0.0, "converter filter lf, cf, lg must be positive");
    require(rf >= 0.0 && rg >= 0.0, "converter filter resistances must be nonnegative");
    for (double k : {kp_pll, ki_pll, kp_p, ki_p, kp_q, ki_q, kp_c, ki_c}) {
        require(std::isfinite(k) && k >= 0.0, "converter gains must be nonnegative");
    }
}

void SmParams::validate() const
{
    require(h > 0.0, "SM inertia h must be positive");
    require(td0_p > 0.0 && tq0_p > 0.0, "SM transient time constants must be positive");
    require(avr.ta > 0.0 && gov.tg > 0.0, "SM exciter/governor time constants must be positive");
    require(gov.r_droop > 0.0, "SM governor droop must be positive");
    require(xd_p > 0.0 && xq_p > 0.0 && xd >= xd_p && xq >= xq_p,
            "SM reactances must satisfy xd >= xd_p > 0 and xq >= xq_p > 0");
    require(ra >= 0.0 && d >= 0.0, "SM ra and d must be nonnegative");
}

void VsmParams::validate() const
{
    require(ta > 0.0, "VSM virtual inertia ta must be positive");
    require(lf > 0.0 && cf > 0.0 && lg > 0.0, "VSM filter lf, cf, lg must be positive");
    require(rf >= 0.0 && rg >= 0.0, "VSM filter resistances must be nonnegative");
    require(omega_f > 0.0 && omega_ad > 0.0, "VSM filter bandwidths must be positive");
    require(kiv > 0.0 && kic > 0.0, "VSM integral gains must be positive");
}

int NetworkCase::bus_index(int bus_id) const
{
    const auto it = std::lower_bound(buses.begin(), buses.end(), bus_id,
                                     [](const Bus& b, int id) { return b.id < id; });
    if (it == buses.end() || it->id != bus_id) {
        throw ValidationError("reference to unknown bus " + std::to_string(bus_id));
    }
    return static_cast<int>(it - buses.begin());
}

const BranchParams& NetworkCase::branch(std::string_view id) const
{
    for (const auto& br : branches) {
        if (br.id == id) {
            return br;
        }
    }
    throw ValidationError("unknown branch id '" + std::string(id) + "'");
}

int NetworkCase::reference_index() const
{
    for (std::size_t k = 0; k < buses.size(); ++k) {
        if (buses[k].kind == BusKind::Reference) {
            return static_cast<int>(k);
        }
    }
    throw ValidationError("case has no reference bus");
}

std::set<std::string> NetworkCase::all_branch_ids() const
{
    std::set<std::string> ids;
    for (const auto& br : branches) {
        ids.insert(br.id);
    }
    return ids;
}

double NetworkCase::omega_base() const { return 2.0 * M_PI * f_nom; }

void NetworkCase::validate() const
{
    require(std::isfinite(base_mva) && base_mva > 0.0, "base_mva must be positive");
    require(std::isfinite(f_nom) && f_nom > 0.0, "f_nom must be positive");
    require(!buses.empty(), "case has no buses");

    int n_ref = 0;
    for (std::size_t k = 0; k < buses.size(); ++k) {
        if (k > 0) {
            require(buses[k].id != buses[k - 1].id,
                    "duplicate bus id " + std::to_string(buses[k].id));
        }
        if (buses[k].kind == BusKind::Reference) {
            ++n_ref;
        }
        if (buses[k].kind != BusKind::PQ) {
            require(buses[k].v_set > 0.0,
                    "bus " + std::to_string(buses[k].id) + " needs v_set > 0");
        }
    }
    require(n_ref == 1, "exactly one reference bus required, found " + std::to_string(n_ref));

    std::set<std::string> ids;
    for (const auto& br : branches) {
        require(ids.insert(br.id).second, "duplicate branch id '" + br.id + "'");
        bus_index(br.from_bus);
        bus_index(br.to_bus);
        require(br.from_bus != br.to_bus, "branch '" + br.id + "' connects a bus to itself");
        require(std::isfinite(br.x) && br.x != 0.0, "branch '" + br.id + "' has x = 0");
        require(br.b >= 0.0, "branch '" + br.id + "' has negative shunt susceptance");
        require(br.r >= 0.0, "branch '" + br.id + "' has negative resistance");
    }

    std::set<int> gen_buses;
    for (const auto& g : generators) {
        bus_index(g.bus);
        require(gen_buses.insert(g.bus).second,
                "at most one generator per bus (bus " + std::to_string(g.bus) + ")");
        switch (g.kind) {
        case GeneratorKind::SM:
            require(std::holds_alternative<SmParams>(g.params), "SM generator needs SM params");
            std::get<SmParams>(g.params).validate();
            break;
        case GeneratorKind::GFM_VSM:
            require(std::holds_alternative<VsmParams>(g.params), "VSM generator needs VSM params");
            std::get<VsmParams>(g.params).validate();
            break;
        case GeneratorKind::GFL:
            require(std::holds_alternative<ConverterParams>(g.params),
                    "GFL generator needs converter params");
            std::get<ConverterParams>(g.params).validate();
            break;
        }
    }

    for (const auto& l : loads) {
        bus_index(l.bus);
        require(std::isfinite(l.p0) && l.p0 >= 0.0, "load p0 must be nonnegative");
        require(std::isfinite(l.q0), "load q0 must be finite");
        require(l.v0 > 0.0, "load v0 must be positive");
        l.eta.validate();
        l.gamma.validate();
        if (l.has_e()) {
            require(l.eload_params.has_value(), "load at bus " + std::to_string(l.bus) +
                                                    " has E weight but no eload_params");
        }
        if (l.eload_params) {
            l.eload_params->validate();
        }
    }
}

NetworkCase load_case(std::string_view text)
{
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("case parse error: ") + e.what());
    }
    NetworkCase c;
    try {
        c = parse(root);
    } catch (const json::exception& e) {
        throw ParseError(std::string("case schema error: ") + e.what());
    }
    c.validate();
    return c;
}

NetworkCase load_case_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open case file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return load_case(ss.str());
}

std::string serialize_case(const NetworkCase& c)
{
    json root;
    root["base_mva"] = c.base_mva;
    root["f_nom"] = c.f_nom;
    root["buses"] = json::array();
    for (const auto& b : c.buses) {
        root["buses"].push_back(
            {{"id", b.id}, {"kind", to_string(b.kind)}, {"v_set", b.v_set}, {"v_nom", b.v_nom}});
    }
    root["branches"] = json::array();
    for (const auto& br : c.branches) {
        root["branches"].push_back({{"id", br.id},
                                    {"from_bus", br.from_bus},
                                    {"to_bus", br.to_bus},
                                    {"r", br.r},
                                    {"x", br.x},
                                    {"b", br.b},
                                    {"transformer", br.transformer}});
    }
    root["generators"] = json::array();
    for (const auto& g : c.generators) {
        json jg{{"bus", g.bus}, {"kind", to_string(g.kind)}, {"p_set", g.p_set}, {"q_set", g.q_set}};
        std::visit(
            [&](const auto& p) {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, SmParams>) {
                    jg["params"] = sm_json(p);
                } else if constexpr (std::is_same_v<P, VsmParams>) {
                    jg["params"] = vsm_json(p);
                } else {
                    jg["params"] = converter_json(p);
                }
            },
            g.params);
        root["generators"].push_back(std::move(jg));
    }
    root["loads"] = json::array();
    for (const auto& l : c.loads) {
        json jl{{"bus", l.bus},
                {"p0", l.p0},
                {"q0", l.q0},
                {"v0", l.v0},
                {"eta", composition_json(l.eta)},
                {"gamma", composition_json(l.gamma)}};
        jl["eload_params"] = l.eload_params ? converter_json(*l.eload_params) : json(nullptr);
        root["loads"].push_back(std::move(jl));
    }
    return root.dump(2);
}

Eigen::Matrix2cd branch_stamp(const BranchParams& br)
{
    const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
    const std::complex<double> ysh(0.0, br.b / 2.0);
    Eigen::Matrix2cd s;
    s << ys + ysh, -ys, -ys, ys + ysh;
    return s;
}

Eigen::MatrixXcd build_ybus(const NetworkCase& c, const std::set<std::string>& in_service)
{
    const auto n = static_cast<Eigen::Index>(c.buses.size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : c.branches) {
        if (!in_service.contains(br.id)) {
            continue;
        }
        const int f = c.bus_index(br.from_bus);
        const int t = c.bus_index(br.to_bus);
        const Eigen::Matrix2cd s = branch_stamp(br);
        y(f, f) += s(0, 0);
        y(f, t) += s(0, 1);
        y(t, f) += s(1, 0);
        y(t, t) += s(1, 1);
    }
    return y;
}

std::string to_string(BusKind k)
{
    switch (k) {
    case BusKind::Reference:
        return "Reference";
    case BusKind::PV:
        return "PV";
    case BusKind::PQ:
        return "PQ";
    }
    return "?";
}

std::string to_string(GeneratorKind k)
{
    switch (k) {
    case GeneratorKind::SM:
        return "SM";
    case GeneratorKind::GFM_VSM:
        return "GFM_VSM";
    case GeneratorKind::GFL:
        return "GFL";
    }
    return "?";
}

NetworkCase case9() { return load_case(case9_json()); }

std::string case9_all_sm_json()
{
    json root = json::parse(case9_json());
    for (auto& g : root["generators"]) {
        if (g["kind"] != "SM") {
            g["kind"] = "SM";
            // Hydro-style unit parameters for the machines replacing the converters.
            g["params"] = {{"h", 6.4},   {"d", 2.0},     {"xd", 0.8958}, {"xq", 0.8645},
                           {"xd_p", 0.1198}, {"xq_p", 0.1198}, {"td0_p", 6.0}, {"tq0_p", 0.535},
                           {"ra", 0.002}};
        }
    }
    return root.dump(2);
}

}  // namespace zipe
