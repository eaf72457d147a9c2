#pragma once

// =============================================================================
// File formats.
//
// Grid description (JSON), all electrical quantities per-unit unless suffixed:
//   {
//     "base":     {"v_volts": 380, "s_watts": 1000},
//     "master":   {"id": 0, "v0_pu": 1.0},
//     "lines":    [{"from":0,"to":1,"r_ohm":36.1} |
//                  {"from":0,"to":1,"r_pu":0.25} |
//                  {"from":1,"to":2,"length_m":100,"r_per_m":0.0015}],
//     "terminals":[{"node":1,"p_pu":-0.6,"k_pu":0.05,"c_pu":2e-3}],
//     "shunts":   [{"node":2,"g_pu":0.5}],          // optional linear loads
//     "island":   false
//   }
// Unknown keys are rejected; all numbers must be finite.
//
// Scenario (JSON): see parse_scenario below. Trajectories export as CSV with
// header t,v1..vn,W,V,mask plus a JSON event log.
// =============================================================================

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcgrad/equilibrium.hpp"
#include "dcgrad/grid_model.hpp"
#include "dcgrad/roa.hpp"
#include "dcgrad/simulator.hpp"

namespace dcgrad {

using json = nlohmann::json;

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + ": expected a JSON object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known) throw ValidationError(where + ": unknown key \"" + item.key() + "\"");
    }
}

inline double finite_number(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ValidationError(where + ": missing key \"" + key + "\"");
    const json& value = obj.at(key);
    if (!value.is_number()) throw ValidationError(where + ": \"" + key + "\" must be a number");
    const double x = value.get<double>();
    if (!std::isfinite(x)) throw ValidationError(where + ": \"" + key + "\" must be finite");
    return x;
}

inline int integer_field(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ValidationError(where + ": missing key \"" + key + "\"");
    const json& value = obj.at(key);
    if (!value.is_number_integer())
        throw ValidationError(where + ": \"" + key + "\" must be an integer");
    return value.get<int>();
}

inline json parse_text(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& err) {
        throw ValidationError(source + ": JSON parse error: " + err.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace detail

/// 64-bit FNV-1a content hash, hex encoded.
inline std::string content_digest(const std::string& bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char byte : bytes) {
        hash ^= byte;
        hash *= 0x100000001b3ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016" PRIx64, hash);
    return buf;
}

inline GridModel parse_grid(const json& root, const std::string& source) {
    detail::check_keys(root, {"base", "master", "lines", "terminals", "shunts", "island"}, source);

    PerUnitBase base;
    if (root.contains("base")) {
        const json& jb = root.at("base");
        detail::check_keys(jb, {"v_volts", "s_watts"}, source + ": base");
        base.v_base = detail::finite_number(jb, "v_volts", source + ": base");
        base.s_base = detail::finite_number(jb, "s_watts", source + ": base");
    }

    if (!root.contains("master")) throw ValidationError(source + ": missing \"master\"");
    const json& jm = root.at("master");
    detail::check_keys(jm, {"id", "v0_pu"}, source + ": master");
    if (detail::integer_field(jm, "id", source + ": master") != 0)
        throw ValidationError(source + ": master id must be 0");
    const double v0 = detail::finite_number(jm, "v0_pu", source + ": master");

    if (!root.contains("lines") || !root.at("lines").is_array())
        throw ValidationError(source + ": \"lines\" must be an array");
    std::vector<Line> lines;
    int idx = 0;
    for (const json& jl : root.at("lines")) {
        const std::string where = source + ": lines[" + std::to_string(idx++) + "]";
        detail::check_keys(jl, {"from", "to", "r_ohm", "r_pu", "length_m", "r_per_m"}, where);
        Line line;
        line.from = detail::integer_field(jl, "from", where);
        line.to = detail::integer_field(jl, "to", where);
        const bool has_ohm = jl.contains("r_ohm");
        const bool has_pu = jl.contains("r_pu");
        const bool has_len = jl.contains("length_m") || jl.contains("r_per_m");
        if (has_ohm + has_pu + has_len != 1)
            throw ValidationError(where +
                                  ": specify exactly one of r_ohm, r_pu, or length_m+r_per_m");
        if (has_ohm) {
            line.resistance = detail::finite_number(jl, "r_ohm", where);
            line.unit = ResistanceUnit::Ohm;
        } else if (has_pu) {
            line.resistance = detail::finite_number(jl, "r_pu", where);
            line.unit = ResistanceUnit::PerUnit;
        } else {
            line.resistance = detail::finite_number(jl, "length_m", where) *
                              detail::finite_number(jl, "r_per_m", where);
            line.unit = ResistanceUnit::Ohm;
        }
        lines.push_back(line);
    }

    std::vector<Shunt> shunts;
    if (root.contains("shunts")) {
        if (!root.at("shunts").is_array())
            throw ValidationError(source + ": \"shunts\" must be an array");
        idx = 0;
        for (const json& js : root.at("shunts")) {
            const std::string where = source + ": shunts[" + std::to_string(idx++) + "]";
            detail::check_keys(js, {"node", "g_pu", "r_ohm"}, where);
            Shunt shunt;
            shunt.node = detail::integer_field(js, "node", where);
            if (js.contains("g_pu") == js.contains("r_ohm"))
                throw ValidationError(where + ": specify exactly one of g_pu or r_ohm");
            if (js.contains("g_pu"))
                shunt.g_pu = detail::finite_number(js, "g_pu", where);
            else
                shunt.g_pu = base.r_base() / detail::finite_number(js, "r_ohm", where);
            shunts.push_back(shunt);
        }
    }

    if (!root.contains("terminals") || !root.at("terminals").is_array())
        throw ValidationError(source + ": \"terminals\" must be an array");
    std::vector<TerminalParams> terminals;
    idx = 0;
    for (const json& jt : root.at("terminals")) {
        const std::string where = source + ": terminals[" + std::to_string(idx++) + "]";
        detail::check_keys(jt, {"node", "p_pu", "k_pu", "c_pu", "c_farad"}, where);
        TerminalParams term;
        term.node = detail::integer_field(jt, "node", where);
        term.p = detail::finite_number(jt, "p_pu", where);
        term.k = detail::finite_number(jt, "k_pu", where);
        if (jt.contains("c_pu") == jt.contains("c_farad"))
            throw ValidationError(where + ": specify exactly one of c_pu or c_farad");
        term.c = jt.contains("c_pu")
                     ? detail::finite_number(jt, "c_pu", where)
                     : detail::finite_number(jt, "c_farad", where) * base.r_base();
        terminals.push_back(term);
    }
    if (terminals.empty()) throw ValidationError(source + ": needs at least one terminal");

    bool island = false;
    if (root.contains("island")) {
        if (!root.at("island").is_boolean())
            throw ValidationError(source + ": \"island\" must be a boolean");
        island = root.at("island").get<bool>();
    }

    const Eigen::MatrixXd full = build_full_conductance(lines, base, shunts);
    std::vector<int> keep{0};
    for (const TerminalParams& term : terminals) {
        if (term.node >= full.rows())
            throw ValidationError(source + ": terminal node " + std::to_string(term.node) +
                                  " does not appear in any line");
        keep.push_back(term.node);
    }
    const Eigen::MatrixXd reduced = kron_reduce(full, keep);
    return assemble_model(reduced, terminals, v0, island, base);
}

inline GridModel load_grid_file(const std::string& path) {
    return parse_grid(detail::parse_text(detail::read_file(path), path), path);
}

/// Scenario JSON:
///   {
///     "t_end": 0.1,
///     "initial_v": [0.9, 0.35],                       // optional, default all-ones
///     "v0_schedule": [{"t":0.02,"v0_pu":0.2}],
///     "island_schedule": [{"t":0.05,"action":"open"}],
///     "overrides": [{"t":0.03,"node":2,"p_pu":-0.5,"k_pu":0.0}],
///     "protection": {"enabled":true,"v_min":[...],    // v_min optional: the
///                    "reconnect_v_pu":0.9,            // CLI fills it from the
///                    "lockout_s":1e-3},               // attraction estimate
///     "sag": {"v0_low_pu":0.2,"t_start":0.02,"t_end":0.07}
///   }
inline Scenario parse_scenario(const json& root, const std::string& source) {
    detail::check_keys(root,
                       {"t_end", "initial_v", "v0_schedule", "island_schedule", "overrides",
                        "protection", "sag"},
                       source);
    Scenario scenario;
    scenario.t_end = detail::finite_number(root, "t_end", source);

    if (root.contains("initial_v")) {
        const json& jv = root.at("initial_v");
        if (!jv.is_array()) throw ValidationError(source + ": \"initial_v\" must be an array");
        scenario.initial_v.resize(static_cast<Eigen::Index>(jv.size()));
        Eigen::Index i = 0;
        for (const json& x : jv) {
            if (!x.is_number() || !std::isfinite(x.get<double>()))
                throw ValidationError(source + ": initial_v entries must be finite numbers");
            scenario.initial_v[i++] = x.get<double>();
        }
    }
    if (root.contains("v0_schedule")) {
        int idx = 0;
        for (const json& js : root.at("v0_schedule")) {
            const std::string where = source + ": v0_schedule[" + std::to_string(idx++) + "]";
            detail::check_keys(js, {"t", "v0_pu"}, where);
            scenario.v0_schedule.push_back({detail::finite_number(js, "t", where),
                                            detail::finite_number(js, "v0_pu", where)});
        }
    }
    if (root.contains("island_schedule")) {
        int idx = 0;
        for (const json& js : root.at("island_schedule")) {
            const std::string where = source + ": island_schedule[" + std::to_string(idx++) + "]";
            detail::check_keys(js, {"t", "action"}, where);
            const std::string action = js.value("action", "");
            if (action != "open" && action != "close")
                throw ValidationError(where + ": action must be \"open\" or \"close\"");
            scenario.island_schedule.push_back(
                {detail::finite_number(js, "t", where), action == "open"});
        }
    }
    if (root.contains("overrides")) {
        int idx = 0;
        for (const json& js : root.at("overrides")) {
            const std::string where = source + ": overrides[" + std::to_string(idx++) + "]";
            detail::check_keys(js, {"t", "node", "p_pu", "k_pu"}, where);
            OverrideStep step;
            step.t = detail::finite_number(js, "t", where);
            step.node = detail::integer_field(js, "node", where);
            if (js.contains("p_pu")) step.p = detail::finite_number(js, "p_pu", where);
            if (js.contains("k_pu")) step.k = detail::finite_number(js, "k_pu", where);
            if (!step.p && !step.k)
                throw ValidationError(where + ": override must set p_pu and/or k_pu");
            scenario.overrides.push_back(step);
        }
    }
    if (root.contains("protection")) {
        const json& jp = root.at("protection");
        detail::check_keys(jp, {"enabled", "v_min", "reconnect_v_pu", "lockout_s"},
                           source + ": protection");
        if (jp.contains("enabled")) {
            if (!jp.at("enabled").is_boolean())
                throw ValidationError(source + ": protection.enabled must be a boolean");
            scenario.protection.enabled = jp.at("enabled").get<bool>();
        }
        if (jp.contains("v_min")) {
            const json& jv = jp.at("v_min");
            if (!jv.is_array())
                throw ValidationError(source + ": protection.v_min must be an array");
            scenario.protection.v_min.resize(static_cast<Eigen::Index>(jv.size()));
            Eigen::Index i = 0;
            for (const json& x : jv) scenario.protection.v_min[i++] = x.get<double>();
        }
        if (jp.contains("reconnect_v_pu"))
            scenario.protection.reconnect_v =
                detail::finite_number(jp, "reconnect_v_pu", source + ": protection");
        if (jp.contains("lockout_s"))
            scenario.protection.lockout =
                detail::finite_number(jp, "lockout_s", source + ": protection");
    }
    if (root.contains("sag")) {
        const json& js = root.at("sag");
        detail::check_keys(js, {"v0_low_pu", "t_start", "t_end"}, source + ": sag");
        SagSpec sag;
        sag.v0_low = detail::finite_number(js, "v0_low_pu", source + ": sag");
        sag.t_start = detail::finite_number(js, "t_start", source + ": sag");
        sag.t_end = detail::finite_number(js, "t_end", source + ": sag");
        if (!scenario.v0_schedule.empty())
            throw ValidationError(source + ": use either \"sag\" or \"v0_schedule\", not both");
        scenario.sag = sag;
    }
    return scenario;
}

inline Scenario load_scenario_file(const std::string& path) {
    return parse_scenario(detail::parse_text(detail::read_file(path), path), path);
}

// ---- serialization -------------------------------------------------------

inline json to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

inline json to_json(const EquilibriumResult& eq) {
    json trace = json::array();
    for (const IterationRecord& rec : eq.trace)
        trace.push_back({{"residual_inf", rec.residual_inf},
                         {"step_size", rec.step_size},
                         {"w", rec.w}});
    return {{"v_eq", to_json(eq.v_eq)},
            {"w_at_eq", eq.w_at_eq},
            {"residual_inf", eq.residual_inf},
            {"iterations", eq.iterations},
            {"hessian_lambda_min_at_eq", eq.hessian_lambda_min_at_eq},
            {"certified", eq.certified},
            {"trace", trace}};
}

inline json to_json(const RoaEstimate& estimate) {
    return {{"alpha", estimate.alpha},
            {"x_star", to_json(estimate.x_star)},
            {"v_min", to_json(estimate.v_min)},
            {"lambda_min_at_corner", estimate.lambda_min_at_corner},
            {"unbounded", estimate.unbounded}};
}

inline json to_json(const UniquenessReport& report) {
    json solutions = json::array();
    for (const Eigen::VectorXd& v : report.solutions) solutions.push_back(to_json(v));
    return {{"all_converged_to_same", report.all_converged_to_same},
            {"spread", report.spread},
            {"n_starts", report.n_starts},
            {"solutions", solutions}};
}

inline json events_to_json(const Trajectory& traj) {
    json arr = json::array();
    for (const Event& event : traj.events) {
        json entry = {{"t", event.t}, {"kind", to_string(event.kind)}};
        if (event.node >= 0) entry["node"] = event.node;
        if (std::isfinite(event.value)) entry["value"] = event.value;
        arr.push_back(entry);
    }
    return arr;
}

/// CSV header: t,v1..vn,W,V,mask. The mask column is an n-character string
/// of 1/0 flags, terminal order, 1 = connected.
inline std::string trajectory_to_csv(const Trajectory& traj) {
    std::ostringstream out;
    const Eigen::Index n = traj.samples.empty() ? 0 : traj.samples.front().v.size();
    out << "t";
    for (Eigen::Index i = 0; i < n; ++i) out << ",v" << (i + 1);
    out << ",W,V,mask\n";
    for (const Sample& sample : traj.samples) {
        out << detail::format_double(sample.t);
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << detail::format_double(sample.v[i]);
        out << ',' << detail::format_double(sample.w) << ',' << detail::format_double(sample.lyap)
            << ',';
        for (std::uint8_t flag : sample.connected) out << (flag ? '1' : '0');
        out << '\n';
    }
    return out.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path);
    out << content;
}

} // namespace dcgrad
