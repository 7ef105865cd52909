#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "mirrorsim/devices.hpp"
#include "mirrorsim/errors.hpp"

namespace mirrorsim {

// ---------------------------------------------------------------------------
// small string helpers
// ---------------------------------------------------------------------------

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i]))) {
            return false;
        }
    }
    return true;
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) tokens.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return tokens;
}

// ---------------------------------------------------------------------------
// values
// ---------------------------------------------------------------------------

/// Parse a number with an optional SI suffix (f p n u m k meg g t,
/// case-insensitive) and return it in SI base units. "meg" is 1e6, "m" 1e-3.
inline double parse_value(std::string_view token) {
    if (token.empty()) {
        throw Error("empty value token");
    }
    double magnitude = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, magnitude);
    if (ec != std::errc() || ptr == begin) {
        throw Error("unparsable value '" + std::string(token) + "'");
    }
    const std::string suffix = to_lower(std::string_view(ptr, static_cast<std::size_t>(end - ptr)));
    double multiplier = 1.0;
    if (!suffix.empty()) {
        if (suffix == "meg") {
            multiplier = 1e6;
        } else if (suffix.size() == 1) {
            switch (suffix[0]) {
                case 'f': multiplier = 1e-15; break;
                case 'p': multiplier = 1e-12; break;
                case 'n': multiplier = 1e-9; break;
                case 'u': multiplier = 1e-6; break;
                case 'm': multiplier = 1e-3; break;
                case 'k': multiplier = 1e3; break;
                case 'g': multiplier = 1e9; break;
                case 't': multiplier = 1e12; break;
                default:
                    throw Error("unknown SI suffix in '" + std::string(token) + "'");
            }
        } else {
            throw Error("unknown SI suffix in '" + std::string(token) + "'");
        }
    }
    const double value = magnitude * multiplier;
    if (!std::isfinite(value)) {
        throw Error("non-finite value '" + std::string(token) + "'");
    }
    return value;
}

/// Emit a value so that parse_value reads the identical double back.
inline std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// domain types
// ---------------------------------------------------------------------------

enum class DeviceKind { resistor, capacitor, vsource, isource, nmos, memristor };

inline std::string_view kind_keyword(DeviceKind k) {
    switch (k) {
        case DeviceKind::resistor: return "res";
        case DeviceKind::capacitor: return "cap";
        case DeviceKind::vsource: return "vsrc";
        case DeviceKind::isource: return "isrc";
        case DeviceKind::nmos: return "nmos";
        case DeviceKind::memristor: return "mem";
    }
    return "?";
}

struct ResistorParams {
    double resistance = 0.0;
    bool operator==(const ResistorParams&) const = default;
};

struct CapacitorParams {
    double capacitance = 0.0;
    bool operator==(const CapacitorParams&) const = default;
};

/// DC level or sinusoid. Phase is stored in degrees as written.
struct SourceWaveform {
    enum class Shape { dc, sine };
    Shape shape = Shape::dc;
    double level = 0.0;      // dc, V or A
    double offset = 0.0;     // sine
    double amplitude = 0.0;  // sine
    double frequency = 0.0;  // sine, Hz
    double phase_deg = 0.0;  // sine

    double value(double t) const {
        if (shape == Shape::dc) return level;
        return offset + amplitude * std::sin(2.0 * std::numbers::pi * frequency * t +
                                             phase_deg * std::numbers::pi / 180.0);
    }

    /// Value used for operating-point analyses: sine sources sit at their offset.
    double dc_value() const { return shape == Shape::dc ? level : offset; }

    bool operator==(const SourceWaveform&) const = default;
};

using DeviceParams =
    std::variant<ResistorParams, CapacitorParams, SourceWaveform, MosfetParams, MemristorParams>;

struct Device {
    std::string name;
    DeviceKind kind = DeviceKind::resistor;
    std::vector<std::string> terminals;  // 2 for R/C/V/I/mem, 3 (d g s) for nmos
    DeviceParams params;

    const ResistorParams& resistor() const { return std::get<ResistorParams>(params); }
    const CapacitorParams& capacitor() const { return std::get<CapacitorParams>(params); }
    const SourceWaveform& source() const { return std::get<SourceWaveform>(params); }
    const MosfetParams& mosfet() const { return std::get<MosfetParams>(params); }
    const MemristorParams& memristor() const { return std::get<MemristorParams>(params); }

    bool operator==(const Device&) const = default;
};

struct OpDirective {
    bool operator==(const OpDirective&) const = default;
};

struct DcSweepDirective {
    std::string device;  // swept device name
    std::string param;   // parameter key, upper-case canonical
    double start = 0.0;
    double stop = 0.0;
    double step = 0.0;
    bool operator==(const DcSweepDirective&) const = default;
};

struct TranDirective {
    double tstop = 0.0;
    int points_per_period = 1024;
    int periods = 10;
    bool uic = false;  // start from zero state instead of the operating point
    bool operator==(const TranDirective&) const = default;
};

struct ThdDirective {
    std::string observable;  // "v(node)", "i(device)" or bare node name
    double fundamental_hz = 0.0;
    int n_harmonics = 9;
    bool operator==(const ThdDirective&) const = default;
};

struct HparamDirective {
    std::string input_source;
    std::string output_source;
    bool operator==(const HparamDirective&) const = default;
};

using AnalysisDirective =
    std::variant<OpDirective, DcSweepDirective, TranDirective, ThdDirective, HparamDirective>;

struct Circuit {
    std::vector<std::string> nodes;  // insertion order, unique; "0" is ground
    std::vector<Device> devices;
    std::vector<AnalysisDirective> directives;

    bool has_node(std::string_view n) const {
        return std::find(nodes.begin(), nodes.end(), n) != nodes.end();
    }

    void add_node(std::string_view n) {
        if (!has_node(n)) nodes.emplace_back(n);
    }

    /// Register a device, adding its terminals to the node set.
    void add_device(Device d) {
        for (const auto& t : d.terminals) add_node(t);
        devices.push_back(std::move(d));
    }

    const Device* find_device(std::string_view name) const {
        for (const auto& d : devices) {
            if (iequals(d.name, name)) return &d;
        }
        return nullptr;
    }

    Device* find_device(std::string_view name) {
        for (auto& d : devices) {
            if (iequals(d.name, name)) return &d;
        }
        return nullptr;
    }

    bool operator==(const Circuit&) const = default;
};

// ---------------------------------------------------------------------------
// device parameter access by path (used by .dc sweeps and the experiment runner)
// ---------------------------------------------------------------------------

namespace detail {

inline double* param_slot(Device& d, std::string_view key) {
    const std::string k = to_lower(key);
    switch (d.kind) {
        case DeviceKind::resistor: {
            auto& p = std::get<ResistorParams>(d.params);
            if (k == "r" || k == "res" || k == "resistance") return &p.resistance;
            break;
        }
        case DeviceKind::capacitor: {
            auto& p = std::get<CapacitorParams>(d.params);
            if (k == "c" || k == "cap" || k == "capacitance") return &p.capacitance;
            break;
        }
        case DeviceKind::vsource:
        case DeviceKind::isource: {
            auto& p = std::get<SourceWaveform>(d.params);
            if (k == "dc" || k == "level") return &p.level;
            if (k == "offset") return &p.offset;
            if (k == "amp" || k == "amplitude") return &p.amplitude;
            if (k == "freq" || k == "frequency") return &p.frequency;
            if (k == "phase") return &p.phase_deg;
            break;
        }
        case DeviceKind::nmos: {
            auto& p = std::get<MosfetParams>(d.params);
            if (k == "w") return &p.w;
            if (k == "l") return &p.l;
            if (k == "lint") return &p.lint;
            if (k == "vt0") return &p.vt0;
            if (k == "kp") return &p.kp;
            if (k == "lambda") return &p.lambda;
            break;
        }
        case DeviceKind::memristor: {
            auto& p = std::get<MemristorParams>(d.params);
            if (k == "ron") return &p.r_on;
            if (k == "roff") return &p.r_off;
            if (k == "rinit") return &p.r_init;
            if (k == "d") return &p.d;
            if (k == "mu") return &p.mu_d;
            if (k == "vt") return &p.v_t;
            break;
        }
    }
    return nullptr;
}

} // namespace detail

inline double get_device_param(const Circuit& c, std::string_view device, std::string_view key) {
    const Device* d = c.find_device(device);
    if (!d) throw ValidationError("unknown device '" + std::string(device) + "'");
    if (d->kind == DeviceKind::memristor && iequals(key, "p")) {
        return static_cast<double>(std::get<MemristorParams>(d->params).p);
    }
    double* slot = detail::param_slot(*const_cast<Device*>(d), key);
    if (!slot) {
        throw ValidationError("device '" + d->name + "' has no parameter '" + std::string(key) + "'");
    }
    return *slot;
}

inline void validate_device(const Device& d);  // forward

inline void set_device_param(Circuit& c, std::string_view device, std::string_view key, double value) {
    Device* d = c.find_device(device);
    if (!d) throw ValidationError("unknown device '" + std::string(device) + "'");
    if (d->kind == DeviceKind::memristor && iequals(key, "p")) {
        const int p = static_cast<int>(std::lround(value));
        if (p != value) throw ValidationError("device '" + d->name + "': P must be an integer");
        std::get<MemristorParams>(d->params).p = p;
    } else {
        double* slot = detail::param_slot(*d, key);
        if (!slot) {
            throw ValidationError("device '" + d->name + "' has no parameter '" + std::string(key) + "'");
        }
        *slot = value;
    }
    validate_device(*d);
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

namespace detail {

inline void require(bool ok, const std::string& message) {
    if (!ok) throw ValidationError(message);
}

inline std::size_t terminal_count(DeviceKind k) {
    return k == DeviceKind::nmos ? 3u : 2u;
}

} // namespace detail

inline void validate_device(const Device& d) {
    using detail::require;
    const std::string id = "device '" + d.name + "': ";
    require(!d.name.empty(), "device with empty name");
    require(d.terminals.size() == detail::terminal_count(d.kind),
            id + "wrong terminal count for kind");
    switch (d.kind) {
        case DeviceKind::resistor: {
            const auto& p = d.resistor();
            require(std::isfinite(p.resistance) && p.resistance > 0.0,
                    id + "resistance must be finite and > 0");
            break;
        }
        case DeviceKind::capacitor: {
            const auto& p = d.capacitor();
            require(std::isfinite(p.capacitance) && p.capacitance > 0.0,
                    id + "capacitance must be finite and > 0");
            break;
        }
        case DeviceKind::vsource:
        case DeviceKind::isource: {
            const auto& p = d.source();
            if (p.shape == SourceWaveform::Shape::sine) {
                require(std::isfinite(p.frequency) && p.frequency > 0.0,
                        id + "sine frequency must be > 0");
                require(std::isfinite(p.amplitude) && p.amplitude >= 0.0,
                        id + "sine amplitude must be >= 0");
                require(std::isfinite(p.offset) && std::isfinite(p.phase_deg),
                        id + "sine parameters must be finite");
            } else {
                require(std::isfinite(p.level), id + "dc level must be finite");
            }
            break;
        }
        case DeviceKind::nmos: {
            const auto& p = d.mosfet();
            require(std::isfinite(p.w) && p.w > 0.0, id + "W must be > 0");
            require(std::isfinite(p.l) && std::isfinite(p.lint) && p.l_eff() > 0.0,
                    id + "effective length L - 2*LINT must be > 0");
            require(std::isfinite(p.kp) && p.kp > 0.0, id + "KP must be > 0");
            require(std::isfinite(p.lambda) && p.lambda >= 0.0, id + "LAMBDA must be >= 0");
            require(std::isfinite(p.vt0), id + "VT0 must be finite");
            break;
        }
        case DeviceKind::memristor: {
            const auto& p = d.memristor();
            require(std::isfinite(p.r_on) && std::isfinite(p.r_off) && std::isfinite(p.r_init),
                    id + "resistances must be finite");
            require(p.r_on > 0.0, id + "RON must be > 0");
            require(p.r_on < p.r_off, id + "RON must be < ROFF");
            require(p.r_init >= p.r_on && p.r_init <= p.r_off,
                    id + "RINIT must lie in [RON, ROFF]");
            require(std::isfinite(p.d) && p.d > 0.0, id + "D must be > 0");
            require(std::isfinite(p.mu_d) && p.mu_d > 0.0, id + "MU must be > 0");
            require(p.p >= 1, id + "P must be >= 1");
            require(std::isfinite(p.v_t) && p.v_t >= 0.0, id + "VT must be >= 0");
            break;
        }
    }
}

/// Full circuit check: ground, unique names, terminal/node consistency,
/// per-device parameter ranges, directive invariants, no floating nodes,
/// everything connected to ground. Returns the checked circuit.
inline Circuit validate(Circuit c) {
    using detail::require;

    require(!c.devices.empty(), "circuit has no devices");
    require(c.has_node("0"), "no ground node '0'");

    std::unordered_set<std::string> seen;
    for (const auto& d : c.devices) {
        validate_device(d);
        const std::string lname = to_lower(d.name);
        require(seen.insert(lname).second, "duplicate device name '" + d.name + "'");
        for (const auto& t : d.terminals) {
            require(c.has_node(t), "device '" + d.name + "' references unknown node '" + t + "'");
        }
    }

    // degree: a node touched by a single terminal has no current path
    std::unordered_map<std::string, int> degree;
    for (const auto& d : c.devices) {
        for (const auto& t : d.terminals) ++degree[t];
    }
    for (const auto& n : c.nodes) {
        require(degree[n] >= 2, "floating node '" + n + "'");
    }

    // connectivity to ground over device edges
    std::unordered_map<std::string, std::vector<const Device*>> adjacency;
    for (const auto& d : c.devices) {
        for (const auto& t : d.terminals) adjacency[t].push_back(&d);
    }
    std::unordered_set<std::string> reached{"0"};
    std::vector<std::string> frontier{"0"};
    while (!frontier.empty()) {
        const std::string n = std::move(frontier.back());
        frontier.pop_back();
        for (const Device* d : adjacency[n]) {
            for (const auto& t : d->terminals) {
                if (reached.insert(t).second) frontier.push_back(t);
            }
        }
    }
    for (const auto& n : c.nodes) {
        require(reached.contains(n), "node '" + n + "' is not connected to ground");
    }

    for (const auto& dir : c.directives) {
        if (const auto* dc = std::get_if<DcSweepDirective>(&dir)) {
            require(dc->step != 0.0, ".dc step must be nonzero");
            require((dc->stop - dc->start) / dc->step >= 0.0,
                    ".dc step direction does not reach stop");
            get_device_param(c, dc->device, dc->param);  // throws if unknown
        } else if (const auto* tr = std::get_if<TranDirective>(&dir)) {
            require(tr->tstop > 0.0, ".tran tstop must be > 0");
            require(tr->points_per_period >= 2, ".tran ppp must be >= 2");
            require(tr->periods >= 1, ".tran periods must be >= 1");
        } else if (const auto* th = std::get_if<ThdDirective>(&dir)) {
            require(th->fundamental_hz > 0.0, ".thd f0 must be > 0");
            require(th->n_harmonics >= 2, ".thd nh must be >= 2");
        } else if (const auto* hp = std::get_if<HparamDirective>(&dir)) {
            for (const auto& src : {hp->input_source, hp->output_source}) {
                const Device* d = c.find_device(src);
                require(d != nullptr, ".hparam references unknown device '" + src + "'");
                require(d->kind == DeviceKind::vsource,
                        ".hparam port '" + src + "' is not a voltage source");
            }
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// parser
// ---------------------------------------------------------------------------

namespace detail {

struct LogicalLine {
    std::size_t number = 0;  // 1-based source line of the first fragment
    std::string text;
};

inline std::vector<LogicalLine> logical_lines(std::string_view text) {
    std::vector<LogicalLine> lines;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        std::string_view raw = text.substr(pos, eol - pos);
        ++line_no;
        pos = eol + 1;
        while (!raw.empty() && (raw.back() == '\r' || raw.back() == ' ' || raw.back() == '\t')) {
            raw.remove_suffix(1);
        }
        std::size_t first = 0;
        while (first < raw.size() && std::isspace(static_cast<unsigned char>(raw[first]))) ++first;
        raw.remove_prefix(first);
        if (raw.empty()) continue;
        if (raw.front() == '*' || raw.front() == '#') continue;
        if (raw.front() == '+') {
            if (lines.empty()) {
                throw ParseError(line_no, "continuation line with nothing to continue");
            }
            lines.back().text += ' ';
            lines.back().text += raw.substr(1);
            continue;
        }
        lines.push_back({line_no, std::string(raw)});
        if (eol == text.size()) break;
    }
    return lines;
}

inline std::optional<std::pair<std::string, std::string>> split_key_value(std::string_view tok) {
    const std::size_t eq = tok.find('=');
    if (eq == std::string_view::npos || eq == 0) return std::nullopt;
    return std::make_pair(to_lower(tok.substr(0, eq)), std::string(tok.substr(eq + 1)));
}

inline double parse_value_at(std::string_view token, std::size_t line) {
    try {
        return parse_value(token);
    } catch (const Error& e) {
        throw ParseError(line, e.what());
    }
}

inline int parse_int_at(std::string_view token, std::size_t line, std::string_view what) {
    const double v = parse_value_at(token, line);
    const int i = static_cast<int>(std::lround(v));
    if (i != v) throw ParseError(line, std::string(what) + " must be an integer");
    return i;
}

inline SourceWaveform parse_source_spec(const std::vector<std::string>& tokens, std::size_t first,
                                        std::size_t line) {
    if (first >= tokens.size()) throw ParseError(line, "source needs a value or SIN(...)");
    std::string joined = tokens[first];
    for (std::size_t i = first + 1; i < tokens.size(); ++i) {
        joined += ' ';
        joined += tokens[i];
    }
    const std::string lowered = to_lower(joined);
    if (lowered.starts_with("sin(") || lowered.starts_with("sin (")) {
        if (joined.back() != ')') throw ParseError(line, "unterminated SIN(...)");
        const std::size_t open = joined.find('(');
        const std::string inner = joined.substr(open + 1, joined.size() - open - 2);
        const auto args = split_ws(inner);
        if (args.size() < 3 || args.size() > 4) {
            throw ParseError(line, "SIN expects (offset amplitude freq [phase])");
        }
        SourceWaveform w;
        w.shape = SourceWaveform::Shape::sine;
        w.offset = parse_value_at(args[0], line);
        w.amplitude = parse_value_at(args[1], line);
        w.frequency = parse_value_at(args[2], line);
        w.phase_deg = args.size() == 4 ? parse_value_at(args[3], line) : 0.0;
        return w;
    }
    std::size_t idx = first;
    if (iequals(tokens[idx], "dc")) {
        ++idx;
        if (idx >= tokens.size()) throw ParseError(line, "DC needs a value");
    }
    if (idx + 1 != tokens.size()) throw ParseError(line, "unexpected trailing tokens on source");
    SourceWaveform w;
    w.shape = SourceWaveform::Shape::dc;
    w.level = parse_value_at(tokens[idx], line);
    return w;
}

inline void check_name(const std::string& name, std::size_t line) {
    if (name.find_first_of(".=()") != std::string::npos) {
        throw ParseError(line, "illegal character in name '" + name + "'");
    }
}

inline Device parse_element(const std::vector<std::string>& tokens, std::size_t line) {
    Device d;
    d.name = tokens[0];
    check_name(d.name, line);

    static const std::unordered_map<std::string, DeviceKind> keywords = {
        {"res", DeviceKind::resistor}, {"cap", DeviceKind::capacitor},
        {"vsrc", DeviceKind::vsource}, {"isrc", DeviceKind::isource},
        {"nmos", DeviceKind::nmos},    {"mem", DeviceKind::memristor},
    };

    std::size_t cursor = 1;
    if (tokens.size() > 1) {
        const auto it = keywords.find(to_lower(tokens[1]));
        if (it != keywords.end()) {
            d.kind = it->second;
            cursor = 2;
        } else {
            switch (std::tolower(static_cast<unsigned char>(d.name[0]))) {
                case 'r': d.kind = DeviceKind::resistor; break;
                case 'c': d.kind = DeviceKind::capacitor; break;
                case 'v': d.kind = DeviceKind::vsource; break;
                case 'i': d.kind = DeviceKind::isource; break;
                default: throw ParseError(line, "unknown element kind for '" + d.name + "'");
            }
        }
    } else {
        throw ParseError(line, "element '" + d.name + "' has no terminals");
    }

    const std::size_t n_terminals = terminal_count(d.kind);
    if (tokens.size() < cursor + n_terminals) {
        throw ParseError(line, "element '" + d.name + "' needs " + std::to_string(n_terminals) +
                                   " nodes");
    }
    for (std::size_t i = 0; i < n_terminals; ++i) {
        const std::string& node = tokens[cursor + i];
        check_name(node, line);
        d.terminals.push_back(node);
    }
    cursor += n_terminals;

    switch (d.kind) {
        case DeviceKind::resistor:
        case DeviceKind::capacitor: {
            if (cursor + 1 != tokens.size()) {
                throw ParseError(line, "element '" + d.name + "' expects exactly one value");
            }
            const double v = parse_value_at(tokens[cursor], line);
            if (d.kind == DeviceKind::resistor) {
                d.params = ResistorParams{v};
            } else {
                d.params = CapacitorParams{v};
            }
            break;
        }
        case DeviceKind::vsource:
        case DeviceKind::isource:
            d.params = parse_source_spec(tokens, cursor, line);
            break;
        case DeviceKind::nmos: {
            MosfetParams p;
            bool have_w = false, have_l = false;
            for (std::size_t i = cursor; i < tokens.size(); ++i) {
                const auto kv = split_key_value(tokens[i]);
                if (!kv) throw ParseError(line, "expected key=value, got '" + tokens[i] + "'");
                const double v = parse_value_at(kv->second, line);
                if (kv->first == "w") { p.w = v; have_w = true; }
                else if (kv->first == "l") { p.l = v; have_l = true; }
                else if (kv->first == "lint") p.lint = v;
                else if (kv->first == "vt0") p.vt0 = v;
                else if (kv->first == "kp") p.kp = v;
                else if (kv->first == "lambda") p.lambda = v;
                else throw ParseError(line, "unknown nmos parameter '" + kv->first + "'");
            }
            if (!have_w || !have_l) {
                throw ParseError(line, "nmos '" + d.name + "' requires W= and L=");
            }
            d.params = p;
            break;
        }
        case DeviceKind::memristor: {
            MemristorParams p;
            bool have_on = false, have_off = false, have_init = false;
            for (std::size_t i = cursor; i < tokens.size(); ++i) {
                const auto kv = split_key_value(tokens[i]);
                if (!kv) throw ParseError(line, "expected key=value, got '" + tokens[i] + "'");
                if (kv->first == "p") {
                    p.p = parse_int_at(kv->second, line, "P");
                    continue;
                }
                const double v = parse_value_at(kv->second, line);
                if (kv->first == "ron") { p.r_on = v; have_on = true; }
                else if (kv->first == "roff") { p.r_off = v; have_off = true; }
                else if (kv->first == "rinit") { p.r_init = v; have_init = true; }
                else if (kv->first == "d") p.d = v;
                else if (kv->first == "mu") p.mu_d = v;
                else if (kv->first == "vt") p.v_t = v;
                else throw ParseError(line, "unknown mem parameter '" + kv->first + "'");
            }
            if (!have_on || !have_off || !have_init) {
                throw ParseError(line, "mem '" + d.name + "' requires RON=, ROFF= and RINIT=");
            }
            d.params = p;
            break;
        }
    }
    return d;
}

inline AnalysisDirective parse_directive(const std::vector<std::string>& tokens, std::size_t line) {
    const std::string head = to_lower(tokens[0]);
    if (head == ".op") {
        if (tokens.size() != 1) throw ParseError(line, ".op takes no arguments");
        return OpDirective{};
    }
    if (head == ".dc") {
        if (tokens.size() != 5) throw ParseError(line, ".dc expects <dev>.<param> start stop step");
        const std::size_t dot = tokens[1].find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == tokens[1].size()) {
            throw ParseError(line, ".dc parameter path must be <device>.<param>");
        }
        DcSweepDirective d;
        d.device = tokens[1].substr(0, dot);
        d.param = to_lower(tokens[1].substr(dot + 1));
        d.start = parse_value_at(tokens[2], line);
        d.stop = parse_value_at(tokens[3], line);
        d.step = parse_value_at(tokens[4], line);
        return d;
    }
    if (head == ".tran") {
        if (tokens.size() < 2) throw ParseError(line, ".tran expects tstop ppp= periods=");
        TranDirective t;
        t.tstop = parse_value_at(tokens[1], line);
        bool have_ppp = false, have_periods = false;
        for (std::size_t i = 2; i < tokens.size(); ++i) {
            if (iequals(tokens[i], "uic")) {
                t.uic = true;
                continue;
            }
            const auto kv = split_key_value(tokens[i]);
            if (!kv) throw ParseError(line, "expected key=value, got '" + tokens[i] + "'");
            if (kv->first == "ppp") { t.points_per_period = parse_int_at(kv->second, line, "ppp"); have_ppp = true; }
            else if (kv->first == "periods") { t.periods = parse_int_at(kv->second, line, "periods"); have_periods = true; }
            else throw ParseError(line, "unknown .tran option '" + kv->first + "'");
        }
        if (!have_ppp || !have_periods) throw ParseError(line, ".tran requires ppp= and periods=");
        return t;
    }
    if (head == ".thd") {
        if (tokens.size() != 4) throw ParseError(line, ".thd expects <observable> f0= nh=");
        ThdDirective t;
        t.observable = tokens[1];
        for (std::size_t i = 2; i < tokens.size(); ++i) {
            const auto kv = split_key_value(tokens[i]);
            if (!kv) throw ParseError(line, "expected key=value, got '" + tokens[i] + "'");
            if (kv->first == "f0") t.fundamental_hz = parse_value_at(kv->second, line);
            else if (kv->first == "nh") t.n_harmonics = parse_int_at(kv->second, line, "nh");
            else throw ParseError(line, "unknown .thd option '" + kv->first + "'");
        }
        return t;
    }
    if (head == ".hparam") {
        if (tokens.size() != 3) throw ParseError(line, ".hparam expects in=<vsrc> out=<vsrc>");
        HparamDirective h;
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            const auto kv = split_key_value(tokens[i]);
            if (!kv) throw ParseError(line, "expected key=value, got '" + tokens[i] + "'");
            if (kv->first == "in") h.input_source = kv->second;
            else if (kv->first == "out") h.output_source = kv->second;
            else throw ParseError(line, "unknown .hparam option '" + kv->first + "'");
        }
        if (h.input_source.empty() || h.output_source.empty()) {
            throw ParseError(line, ".hparam requires both in= and out=");
        }
        return h;
    }
    throw ParseError(line, "unknown directive '" + tokens[0] + "'");
}

} // namespace detail

/// Parse netlist text into a validated Circuit. Device order follows source
/// order; every value is converted to SI base units here.
inline Circuit parse_netlist(std::string_view text) {
    Circuit c;
    std::unordered_set<std::string> names;
    for (const auto& line : detail::logical_lines(text)) {
        const auto tokens = split_ws(line.text);
        if (tokens.empty()) continue;
        if (tokens[0][0] == '.') {
            c.directives.push_back(detail::parse_directive(tokens, line.number));
        } else {
            Device d = detail::parse_element(tokens, line.number);
            if (!names.insert(to_lower(d.name)).second) {
                throw ParseError(line.number, "duplicate device name '" + d.name + "'");
            }
            c.add_device(std::move(d));
        }
    }
    return validate(std::move(c));
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

/// Canonical netlist text; parse_netlist(serialize(c)) == c field-by-field.
inline std::string serialize(const Circuit& c) {
    std::string out;
    auto emit = [&out](const std::string& s) {
        out += s;
        out += '\n';
    };
    for (const auto& d : c.devices) {
        std::string line = d.name;
        line += ' ';
        line += kind_keyword(d.kind);
        for (const auto& t : d.terminals) {
            line += ' ';
            line += t;
        }
        switch (d.kind) {
            case DeviceKind::resistor:
                line += ' ' + format_value(d.resistor().resistance);
                break;
            case DeviceKind::capacitor:
                line += ' ' + format_value(d.capacitor().capacitance);
                break;
            case DeviceKind::vsource:
            case DeviceKind::isource: {
                const auto& s = d.source();
                if (s.shape == SourceWaveform::Shape::dc) {
                    line += ' ' + format_value(s.level);
                } else {
                    line += " SIN(" + format_value(s.offset) + ' ' + format_value(s.amplitude) +
                            ' ' + format_value(s.frequency) + ' ' + format_value(s.phase_deg) + ')';
                }
                break;
            }
            case DeviceKind::nmos: {
                const auto& p = d.mosfet();
                line += " W=" + format_value(p.w) + " L=" + format_value(p.l) +
                        " LINT=" + format_value(p.lint) + " VT0=" + format_value(p.vt0) +
                        " KP=" + format_value(p.kp) + " LAMBDA=" + format_value(p.lambda);
                break;
            }
            case DeviceKind::memristor: {
                const auto& p = d.memristor();
                line += " RON=" + format_value(p.r_on) + " ROFF=" + format_value(p.r_off) +
                        " RINIT=" + format_value(p.r_init) + " D=" + format_value(p.d) +
                        " MU=" + format_value(p.mu_d) + " P=" + std::to_string(p.p) +
                        " VT=" + format_value(p.v_t);
                break;
            }
        }
        emit(line);
    }
    for (const auto& dir : c.directives) {
        if (std::holds_alternative<OpDirective>(dir)) {
            emit(".op");
        } else if (const auto* dc = std::get_if<DcSweepDirective>(&dir)) {
            emit(".dc " + dc->device + "." + dc->param + ' ' + format_value(dc->start) + ' ' +
                 format_value(dc->stop) + ' ' + format_value(dc->step));
        } else if (const auto* tr = std::get_if<TranDirective>(&dir)) {
            std::string line = ".tran " + format_value(tr->tstop) +
                               " ppp=" + std::to_string(tr->points_per_period) +
                               " periods=" + std::to_string(tr->periods);
            if (tr->uic) line += " uic";
            emit(line);
        } else if (const auto* th = std::get_if<ThdDirective>(&dir)) {
            emit(".thd " + th->observable + " f0=" + format_value(th->fundamental_hz) +
                 " nh=" + std::to_string(th->n_harmonics));
        } else if (const auto* hp = std::get_if<HparamDirective>(&dir)) {
            emit(".hparam in=" + hp->input_source + " out=" + hp->output_source);
        }
    }
    return out;
}

} // namespace mirrorsim
