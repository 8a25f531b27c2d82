#include "gridmcp/dsspkg/dss.hpp"

#include "gridmcp/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>

namespace gridmcp::dss {

using pf::cplx;
using pf::Phase;
using pf::PhaseSet;

namespace {

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

[[noreturn]] void bad(const Directive& d, const std::string& msg)
{
    throw Error(ErrorCode::ParseError, d.source + ":" + std::to_string(d.line) + ": " + std::string(to_string(d.kind)) +
                                           "." + d.name + ": " + msg);
}

std::string unwrap(std::string_view v)
{
    while (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'') ||
                             (v.front() == '[' && v.back() == ']') || (v.front() == '(' && v.back() == ')') ||
                             (v.front() == '{' && v.back() == '}'))) {
        v = v.substr(1, v.size() - 2);
    }
    return std::string(v);
}

std::optional<double> to_number(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

double number(const Directive& d, std::string_view key, std::optional<double> fallback = std::nullopt)
{
    auto raw = d.get(key);
    if (!raw) {
        if (fallback) {
            return *fallback;
        }
        bad(d, "missing required property '" + std::string(key) + "'");
    }
    auto v = to_number(unwrap(*raw));
    if (!v) {
        bad(d, "property '" + std::string(key) + "' expects a number, got '" + *raw + "'");
    }
    return *v;
}

std::vector<double> number_list(const Directive& d, std::string_view text)
{
    std::vector<double> out;
    std::string token;
    auto flush = [&] {
        if (!token.empty()) {
            auto v = to_number(token);
            if (!v) {
                bad(d, "'" + token + "' is not a number");
            }
            out.push_back(*v);
            token.clear();
        }
    };
    for (char c : unwrap(text)) {
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '|') {
            flush();
        } else {
            token.push_back(c);
        }
    }
    flush();
    return out;
}

std::vector<std::string> word_list(std::string_view text)
{
    std::vector<std::string> out;
    std::string token;
    for (char c : unwrap(text)) {
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
            if (!token.empty()) {
                out.push_back(token);
                token.clear();
            }
        } else {
            token.push_back(c);
        }
    }
    if (!token.empty()) {
        out.push_back(token);
    }
    return out;
}

/// Lower-triangular "(a | b c | d e f)" or full row-wise matrix.
std::vector<std::vector<double>> matrix(const Directive& d, std::string_view key, std::size_t n)
{
    auto text = unwrap(*d.get(key));
    std::vector<std::vector<double>> rows;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto bar = text.find('|', start);
        auto part = text.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
        rows.push_back(number_list(d, part));
        if (bar == std::string::npos) {
            break;
        }
        start = bar + 1;
    }
    if (rows.size() != n) {
        bad(d, "'" + std::string(key) + "' has " + std::to_string(rows.size()) + " rows, expected " + std::to_string(n));
    }
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t r = 0; r < n; ++r) {
        if (rows[r].size() == r + 1 || rows[r].size() == n) {
            for (std::size_t k = 0; k < rows[r].size(); ++k) {
                m[r][k] = rows[r][k];
                m[k][r] = rows[r][k];
            }
        } else {
            bad(d, "'" + std::string(key) + "' row " + std::to_string(r + 1) + " has the wrong number of entries");
        }
    }
    return m;
}

struct BusRef {
    std::string id;
    std::vector<int> nodes; // non-ground nodes in written order
};

BusRef bus_ref(const Directive& d, std::string_view spec)
{
    auto text = lower(unwrap(spec));
    BusRef ref;
    auto dot = text.find('.');
    ref.id = text.substr(0, dot);
    if (ref.id.empty()) {
        bad(d, "empty bus name");
    }
    while (dot != std::string::npos) {
        auto next = text.find('.', dot + 1);
        auto part = text.substr(dot + 1, next == std::string::npos ? std::string::npos : next - dot - 1);
        auto v = to_number(part);
        if (!v || *v < 0 || *v > 3 || std::floor(*v) != *v) {
            bad(d, "unsupported node '" + part + "' on bus '" + ref.id + "'");
        }
        if (*v != 0) {
            ref.nodes.push_back(static_cast<int>(*v));
        }
        dot = next;
    }
    return ref;
}

std::vector<Phase> phases_of(const Directive& d, const BusRef& ref, std::size_t count)
{
    std::vector<Phase> out;
    if (ref.nodes.empty()) {
        for (std::size_t i = 0; i < count; ++i) {
            out.push_back(static_cast<Phase>(i));
        }
    } else {
        for (int n : ref.nodes) {
            out.push_back(static_cast<Phase>(n - 1));
        }
    }
    PhaseSet set;
    for (auto p : out) {
        if (set.contains(p)) {
            bad(d, "repeated node on bus '" + ref.id + "'");
        }
        set.insert(p);
    }
    return out;
}

PhaseSet to_set(const std::vector<Phase>& phases)
{
    PhaseSet s;
    for (auto p : phases) {
        s.insert(p);
    }
    return s;
}

std::size_t count_prop(const Directive& d, std::size_t fallback)
{
    double v = number(d, "phases", static_cast<double>(fallback));
    if (v < 1 || v > 3 || std::floor(v) != v) {
        bad(d, "phases must be 1, 2 or 3");
    }
    return static_cast<std::size_t>(v);
}

double meters_per(const std::string& units)
{
    static const std::map<std::string, double> table = {
        {"mi", 1609.344}, {"kft", 304.8}, {"ft", 0.3048}, {"km", 1000.0}, {"m", 1.0}, {"cm", 0.01}, {"in", 0.0254},
    };
    auto it = table.find(units);
    return it == table.end() ? 0.0 : it->second;
}

/// Per-unit-length series impedance and self capacitance of a line or linecode.
struct Impedance {
    std::vector<std::vector<cplx>> z;   // ohm per unit length
    std::vector<double> c_self_nf;      // nF per unit length
    std::string units = "none";
    double base_freq = 60.0;
};

bool has_own_impedance(const Directive& d)
{
    for (const char* k : {"rmatrix", "xmatrix", "r1", "x1", "r0", "x0"}) {
        if (d.get(k)) {
            return true;
        }
    }
    return false;
}

Impedance impedance_of(const Directive& d, std::size_t n)
{
    Impedance imp;
    imp.units = lower(unwrap(d.get("units").value_or("none")));
    imp.base_freq = number(d, "basefreq", 60.0);
    imp.z.assign(n, std::vector<cplx>(n));
    imp.c_self_nf.assign(n, 0.0);
    if (d.get("rmatrix") || d.get("xmatrix")) {
        if (!d.get("rmatrix") || !d.get("xmatrix")) {
            bad(d, "rmatrix and xmatrix must be given together");
        }
        auto r = matrix(d, "rmatrix", n);
        auto x = matrix(d, "xmatrix", n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < n; ++k) {
                imp.z[i][k] = {r[i][k], x[i][k]};
            }
        }
    } else {
        const cplx z1{number(d, "r1"), number(d, "x1")};
        const cplx z0{number(d, "r0", z1.real()), number(d, "x0", z1.imag())};
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < n; ++k) {
                imp.z[i][k] = i == k ? (2.0 * z1 + z0) / 3.0 : (z0 - z1) / 3.0;
            }
        }
    }
    if (d.get("cmatrix")) {
        auto c = matrix(d, "cmatrix", n);
        for (std::size_t i = 0; i < n; ++i) {
            imp.c_self_nf[i] = c[i][i];
        }
    } else if (d.get("c1")) {
        const double c1 = number(d, "c1");
        const double c0 = number(d, "c0", c1);
        std::fill(imp.c_self_nf.begin(), imp.c_self_nf.end(), (2.0 * c1 + c0) / 3.0);
    }
    return imp;
}

bool truthy(const std::optional<std::string>& v)
{
    if (!v) {
        return false;
    }
    auto s = lower(unwrap(*v));
    return s == "y" || s == "yes" || s == "true" || s == "t";
}

struct TransformerInfo {
    double kv_from = 0.0; // line-to-line
    double kv_to = 0.0;
    double step = pf::kDefaultTapStep;
};

class Builder {
public:
    BuiltCircuit run(const std::vector<Directive>& directives)
    {
        for (const auto& d : directives) {
            switch (d.kind) {
            case DirectiveKind::Circuit: circuit(d); break;
            case DirectiveKind::LineCode: linecodes_[d.name] = &d; break;
            case DirectiveKind::Line: line(d); break;
            case DirectiveKind::Load: load(d); break;
            case DirectiveKind::Capacitor: shunt(d, out_.circuit.capacitors); break;
            case DirectiveKind::Reactor: shunt(d, out_.circuit.reactors); break;
            case DirectiveKind::Transformer: transformer(d); break;
            case DirectiveKind::RegControl: regcontrol(d); break;
            case DirectiveKind::LoadShape: loadshape(d); break;
            case DirectiveKind::Redirect:
                throw Error(ErrorCode::UnresolvedRedirect, "unexpanded redirect '" + d.name + "'");
            case DirectiveKind::Set:
            case DirectiveKind::Solve: break;
            }
        }
        if (!have_circuit_) {
            throw Error(ErrorCode::ParseError, "no 'New Circuit' statement found");
        }
        assemble_buses();
        try {
            pf::validate(out_.circuit);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::NotRadial) {
                throw Error(ErrorCode::NonRadialCircuit, e.what());
            }
            throw Error(ErrorCode::ParseError, e.what());
        }
        return std::move(out_);
    }

private:
    void touch(const std::string& bus, PhaseSet phases)
    {
        auto [it, inserted] = bus_phases_.emplace(bus, phases);
        if (!inserted) {
            it->second = it->second | phases;
        } else {
            bus_order_.push_back(bus);
        }
    }

    void circuit(const Directive& d)
    {
        if (have_circuit_) {
            bad(d, "only one circuit per package");
        }
        have_circuit_ = true;
        auto& c = out_.circuit;
        c.name = d.name;
        const auto n = count_prop(d, 3);
        auto ref = bus_ref(d, d.get("bus1").value_or("sourcebus"));
        c.source.bus = ref.id;
        c.source.phases = to_set(phases_of(d, ref, n));
        c.source.base_kv = number(d, "basekv", 115.0);
        c.source.pu = number(d, "pu", 1.0);
        c.source.angle_deg = number(d, "angle", 0.0);
        if (d.get("basemva")) {
            c.base_kva = number(d, "basemva") * 1000.0;
        }
        c.base_kva = number(d, "basekva", c.base_kva);
        touch(ref.id, c.source.phases);
    }

    void line(const Directive& d)
    {
        auto from = bus_ref(d, d.get("bus1").value_or(""));
        auto to = bus_ref(d, d.get("bus2").value_or(""));
        const Directive* code = nullptr;
        if (auto name = d.get("linecode")) {
            auto it = linecodes_.find(lower(unwrap(*name)));
            if (it == linecodes_.end()) {
                throw Error(ErrorCode::UndefinedLineCode, d.source + ":" + std::to_string(d.line) +
                                                              ": undefined linecode '" + *name + "'");
            }
            code = it->second;
        }
        std::size_t n = code != nullptr ? count_prop(*code, 3) : 3;
        if (code != nullptr && code->get("nphases")) {
            n = static_cast<std::size_t>(number(*code, "nphases"));
        }
        n = count_prop(d, from.nodes.empty() ? n : from.nodes.size());
        auto order = phases_of(d, from, n);
        if (order.size() != n) {
            bad(d, "bus1 nodes do not match the phase count");
        }
        auto to_order = phases_of(d, to, n);
        if (to_set(to_order) != to_set(order)) {
            bad(d, "bus1 and bus2 connect different phases");
        }

        pf::LineBranch b;
        b.id = d.name;
        b.from_bus = from.id;
        b.to_bus = to.id;
        b.phases = to_set(order);

        const bool is_switch = truthy(d.get("switch"));
        Impedance imp;
        double length = number(d, "length", is_switch ? 0.001 : 1.0);
        if (has_own_impedance(d)) {
            imp = impedance_of(d, n);
        } else if (code != nullptr) {
            imp = impedance_of(*code, n);
            const auto line_units = lower(unwrap(d.get("units").value_or("none")));
            const double lm = meters_per(line_units);
            const double cm = meters_per(imp.units);
            if (lm > 0.0 && cm > 0.0) {
                length *= lm / cm;
            }
        } else if (is_switch) {
            imp.z.assign(n, std::vector<cplx>(n));
            imp.c_self_nf.assign(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                imp.z[i][i] = {1.0, 1.0};
            }
        } else {
            bad(d, "no impedance data (linecode, matrices or sequence values)");
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < n; ++k) {
                b.z_ohm(order[i], order[k]) = imp.z[i][k] * length;
            }
            b.shunt_b[pf::index(order[i])] = 2.0 * std::numbers::pi * imp.base_freq * imp.c_self_nf[i] * 1e-9 * length;
        }
        touch(b.from_bus, b.phases);
        touch(b.to_bus, b.phases);
        out_.circuit.lines.push_back(std::move(b));
    }

    void load(const Directive& d)
    {
        pf::LoadSpec ld;
        ld.id = d.name;
        auto ref = bus_ref(d, d.get("bus1").value_or(""));
        ld.bus = ref.id;
        const auto conn = lower(unwrap(d.get("conn").value_or("wye")));
        if (conn == "delta" || conn == "d" || conn == "ll") {
            ld.connection = pf::Connection::Delta;
        } else if (conn == "wye" || conn == "y" || conn == "ln") {
            ld.connection = pf::Connection::Wye;
        } else {
            bad(d, "unknown connection '" + conn + "'");
        }
        const auto n = count_prop(d, 3);
        std::size_t nodes = n;
        if (ld.connection == pf::Connection::Delta && n == 1) {
            nodes = 2;
        }
        auto ph = phases_of(d, ref, nodes);
        if (ph.size() != nodes) {
            bad(d, "bus nodes do not match the phase count");
        }
        ld.phases = to_set(ph);
        ld.kw = number(d, "kw");
        if (d.get("kvar")) {
            ld.kvar = number(d, "kvar");
        } else {
            const double pf_value = number(d, "pf", 0.88);
            if (pf_value == 0.0 || std::abs(pf_value) > 1.0) {
                bad(d, "power factor must be in (0, 1]");
            }
            ld.kvar = std::abs(ld.kw) * std::tan(std::acos(std::abs(pf_value))) * (pf_value < 0 ? -1.0 : 1.0);
        }
        if (auto model = d.get("model"); model && unwrap(*model) != "1") {
            out_.warnings.push_back("load '" + ld.id + "': model=" + *model + " treated as constant power");
        }
        for (const char* key : {"daily", "yearly", "duty"}) {
            if (auto shape = d.get(key)) {
                ld.shape_ref = lower(unwrap(*shape));
            }
        }
        touch(ld.bus, ld.phases);
        out_.circuit.loads.push_back(std::move(ld));
    }

    void shunt(const Directive& d, std::vector<pf::ShuntBank>& banks)
    {
        pf::ShuntBank s;
        s.id = d.name;
        auto ref = bus_ref(d, d.get("bus1").value_or(""));
        s.bus = ref.id;
        const auto n = count_prop(d, 3);
        auto ph = phases_of(d, ref, n);
        if (ph.size() != n) {
            bad(d, "bus nodes do not match the phase count");
        }
        s.phases = to_set(ph);
        auto raw = d.get("kvar");
        if (!raw) {
            bad(d, "missing required property 'kvar'");
        }
        auto steps = number_list(d, *raw);
        s.kvar = 0.0;
        for (double v : steps) {
            s.kvar += v;
        }
        if (!(s.kvar > 0.0)) {
            bad(d, "kvar must be positive");
        }
        if (auto en = d.get("enabled")) {
            s.enabled = truthy(en);
        }
        touch(s.bus, s.phases);
        banks.push_back(std::move(s));
    }

    void transformer(const Directive& d)
    {
        const auto n = count_prop(d, 3);
        std::vector<std::string> buses(2);
        std::vector<double> kvs(2, 0.0);
        std::vector<double> kvas(2, 0.0);
        std::vector<double> r_pct(2, 0.0);
        int wdg = 0;
        for (const auto& [key, value] : d.properties) {
            if (key == "wdg") {
                auto v = to_number(unwrap(value));
                if (!v || (*v != 1 && *v != 2)) {
                    bad(d, "only two-winding transformers are supported");
                }
                wdg = static_cast<int>(*v) - 1;
            } else if (key == "bus") {
                buses[wdg] = value;
            } else if (key == "kv") {
                kvs[wdg] = number_list(d, value).at(0);
            } else if (key == "kva") {
                kvas[wdg] = number_list(d, value).at(0);
            } else if (key == "%r") {
                r_pct[wdg] = number_list(d, value).at(0);
            } else if (key == "buses") {
                auto words = word_list(value);
                if (words.size() != 2) {
                    bad(d, "buses must list two buses");
                }
                buses = words;
            } else if (key == "kvs" || key == "kvas" || key == "%rs") {
                auto vals = number_list(d, value);
                if (vals.size() != 2) {
                    bad(d, "'" + key + "' must have two entries");
                }
                (key == "kvs" ? kvs : key == "kvas" ? kvas : r_pct) = vals;
            } else if (key == "windings" && number(d, "windings") != 2) {
                bad(d, "only two-winding transformers are supported");
            }
        }
        if (buses[0].empty() || buses[1].empty() || kvs[0] <= 0 || kvs[1] <= 0 || kvas[0] <= 0) {
            bad(d, "needs two buses, positive kVs and a kVA rating");
        }
        auto from = bus_ref(d, buses[0]);
        auto to = bus_ref(d, buses[1]);
        auto order = phases_of(d, from, n);
        if (to_set(phases_of(d, to, n)) != to_set(order) || order.size() != n) {
            bad(d, "winding connections do not match the phase count");
        }
        const double ll = n == 1 ? std::sqrt(3.0) : 1.0; // single-phase units are rated line-to-neutral
        const double r_total = d.get("%loadloss") ? number(d, "%loadloss") : r_pct[0] + r_pct[1];
        const double x = number(d, "xhl", 7.0);
        const double zbase = kvs[0] * kvs[0] * 1000.0 / kvas[0];

        pf::LineBranch b;
        b.id = d.name;
        b.from_bus = from.id;
        b.to_bus = to.id;
        b.phases = to_set(order);
        for (auto p : order) {
            b.z_ohm(p, p) = cplx{r_total, x} / 100.0 * zbase;
        }
        b.to_base_kv = kvs[1] * ll;

        TransformerInfo info{kvs[0] * ll, kvs[1] * ll, pf::kDefaultTapStep};
        if (d.get("numtaps")) {
            const double taps = number(d, "numtaps");
            info.step = (number(d, "maxtap", 1.1) - number(d, "mintap", 0.9)) / taps;
        }
        transformers_[d.name] = info;
        touch(b.from_bus, b.phases);
        touch(b.to_bus, b.phases);
        out_.circuit.lines.push_back(std::move(b));
    }

    void regcontrol(const Directive& d)
    {
        auto target = lower(unwrap(d.get("transformer").value_or("")));
        auto it = transformers_.find(target);
        if (it == transformers_.end()) {
            bad(d, "references unknown transformer '" + target + "'");
        }
        for (const auto& r : out_.circuit.regulators) {
            if (r.branch_ref == target) {
                bad(d, "transformer '" + target + "' already has a regulator");
            }
        }
        pf::RegulatorSpec reg;
        reg.id = d.name;
        reg.branch_ref = target;
        reg.step_pu = it->second.step;
        if (auto taps = d.get("taps")) {
            auto values = number_list(d, *taps);
            if (values.size() != 3) {
                bad(d, "taps must list three values (phases a, b, c)");
            }
            for (std::size_t i = 0; i < 3; ++i) {
                reg.taps[i] = static_cast<int>(values[i]);
            }
        } else {
            reg.taps.fill(static_cast<int>(number(d, "tap", 0.0)));
        }
        for (int t : reg.taps) {
            if (t < pf::kMinTap || t > pf::kMaxTap) {
                throw Error(ErrorCode::TapOutOfRange, "regulator '" + reg.id + "' tap outside [-16, +16]");
            }
        }
        out_.circuit.regulators.push_back(reg);
    }

    void loadshape(const Directive& d)
    {
        shapes::LoadShape s;
        s.name = d.name;
        s.interval_hours = number(d, "interval", 1.0);
        auto mult = d.get("mult");
        if (!mult) {
            bad(d, "missing 'mult'");
        }
        s.multipliers = number_list(d, *mult);
        if (d.get("npts") && static_cast<std::size_t>(number(d, "npts")) != s.multipliers.size()) {
            bad(d, "npts does not match the number of multipliers");
        }
        try {
            shapes::check_shape(s);
        } catch (const Error& e) {
            bad(d, e.what());
        }
        out_.shapes.push_back(std::move(s));
    }

    /// Creates the bus list, propagates base kV from the source and orients
    /// every branch away from the source.
    void assemble_buses()
    {
        auto& c = out_.circuit;
        for (const auto& id : bus_order_) {
            c.buses.push_back(pf::Bus{id, bus_phases_.at(id), 0.0, std::nullopt});
        }
        std::map<std::string, std::vector<std::size_t>> adjacent;
        for (std::size_t k = 0; k < c.lines.size(); ++k) {
            adjacent[c.lines[k].from_bus].push_back(k);
            adjacent[c.lines[k].to_bus].push_back(k);
        }
        std::map<std::string, double> base{{c.source.bus, c.source.base_kv}};
        std::vector<bool> used(c.lines.size(), false);
        std::deque<std::string> queue{c.source.bus};
        while (!queue.empty()) {
            auto bus = queue.front();
            queue.pop_front();
            for (auto k : adjacent[bus]) {
                if (used[k]) {
                    continue;
                }
                used[k] = true;
                auto& l = c.lines[k];
                if (l.to_bus == bus) {
                    flip(l);
                }
                if (base.count(l.to_bus) != 0) {
                    continue; // loop; validate() reports it
                }
                double b = base.at(bus);
                if (auto t = transformers_.find(l.id); t != transformers_.end()) {
                    l.to_base_kv = b * t->second.kv_to / t->second.kv_from;
                    b = *l.to_base_kv;
                }
                base[l.to_bus] = b;
                queue.push_back(l.to_bus);
            }
        }
        for (auto& bus : c.buses) {
            auto it = base.find(bus.id);
            bus.base_kv = it == base.end() ? c.source.base_kv : it->second;
        }
    }

    void flip(pf::LineBranch& l)
    {
        std::swap(l.from_bus, l.to_bus);
        if (auto t = transformers_.find(l.id); t != transformers_.end()) {
            const double ratio = t->second.kv_to / t->second.kv_from;
            for (auto& row : l.z_ohm.m) {
                for (auto& z : row) {
                    z *= ratio * ratio;
                }
            }
            std::swap(t->second.kv_from, t->second.kv_to);
            if (out_.circuit.regulator_on(l.id) != nullptr) {
                throw Error(ErrorCode::ParseError, "regulator transformer '" + l.id + "' faces the source");
            }
        }
    }

    BuiltCircuit out_;
    bool have_circuit_ = false;
    std::map<std::string, const Directive*> linecodes_;
    std::map<std::string, TransformerInfo> transformers_;
    std::map<std::string, PhaseSet> bus_phases_;
    std::vector<std::string> bus_order_;
};

} // namespace

BuiltCircuit build_circuit(const std::vector<Directive>& directives)
{
    return Builder{}.run(directives);
}

} // namespace gridmcp::dss
