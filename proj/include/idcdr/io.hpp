#pragma once

// Case files (JSON) and small file helpers.
//
// Case schema, top level:
//   description        optional string
//   time_grid          {slots, slot_hours}
//   shortfall_penalty  optional number, $/kWh
//   idcs               list of data centers
//   workloads          optional list of {id, host, it_power_kw, termination_price}
//
// Each data center:
//   id, pue, nominal_power_kw, interactive_it_kw, dg_output_kw, electricity_price
//   ess                {max_energy_kwh, initial_energy_kwh, max_power_kw}
//   dr_price_lower, dr_price_upper
//   uncertainty        {electricity_price, dg_output, interactive_load}, each
//                      {sigma0, rho, and either lower/upper or relative_box}
//
// Per-slot fields accept a list of T numbers or one number for all slots.
// Unknown keys are rejected; errors name the file line of the offending key.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "case.hpp"
#include "errors.hpp"

namespace idcdr::io {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw InputError("write to '" + path + "' failed");
}

// Line of every value in a JSON text, keyed by a path such as
// "idcs[1].ess.max_power_kw". The text must already be valid JSON.
inline std::map<std::string, std::size_t> json_lines(std::string_view text) {
    std::map<std::string, std::size_t> lines;
    struct Frame {
        bool object;
        std::string path;
        std::size_t index;
        std::string key;
    };
    std::vector<Frame> stack;
    std::size_t line = 1;
    auto child = [&]() -> std::string {
        if (stack.empty()) return "";
        const auto& f = stack.back();
        if (f.object) return f.path.empty() ? f.key : f.path + "." + f.key;
        return f.path + "[" + std::to_string(f.index) + "]";
    };
    bool expect_key = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (ch == '\n') {
            ++line;
            continue;
        }
        if (ch == ' ' || ch == '\t' || ch == '\r' || ch == ':') continue;
        if (ch == '"') {
            std::string s;
            for (++i; i < text.size() && text[i] != '"'; ++i) {
                if (text[i] == '\\' && i + 1 < text.size()) {
                    s += text[++i];
                    continue;
                }
                s += text[i];
            }
            if (expect_key) {
                stack.back().key = s;
                expect_key = false;
                lines.emplace(child(), line);
            } else {
                lines.emplace(child(), line);
            }
            continue;
        }
        if (ch == '{' || ch == '[') {
            const std::string p = child();
            lines.emplace(p, line);
            stack.push_back({ch == '{', p, 0, ""});
            expect_key = ch == '{';
            continue;
        }
        if (ch == '}' || ch == ']') {
            if (!stack.empty()) stack.pop_back();
            continue;
        }
        if (ch == ',') {
            if (!stack.empty()) {
                if (stack.back().object) expect_key = true;
                else ++stack.back().index;
            }
            continue;
        }
        // Number, true, false, null.
        lines.emplace(child(), line);
        while (i + 1 < text.size() && std::string_view(",]}\n \t\r").find(text[i + 1]) == std::string_view::npos) ++i;
    }
    return lines;
}

namespace detail {

class CaseReader {
public:
    CaseReader(std::string source, std::string_view text) : source_(std::move(source)), lines_(json_lines(text)) {}

    [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
        // Walk up the path until a recorded position is found.
        std::string p = path;
        for (;;) {
            if (auto it = lines_.find(p); it != lines_.end())
                throw InputError(source_ + ":" + std::to_string(it->second) + ": " + (path.empty() ? "" : path + ": ") + msg);
            const auto cut = p.find_last_of(".[");
            if (cut == std::string::npos || p.empty()) break;
            p = p.substr(0, cut);
        }
        throw InputError(source_ + ": " + (path.empty() ? "" : path + ": ") + msg);
    }

    void keys(const nlohmann::json& j, const std::string& path, std::initializer_list<std::string_view> allowed) const {
        if (!j.is_object()) fail(path, "expected an object");
        for (const auto& [k, v] : j.items()) {
            bool ok = false;
            for (auto a : allowed) ok = ok || k == a;
            if (!ok) fail(join(path, k), "unknown key '" + k + "'");
        }
    }

    const nlohmann::json& at(const nlohmann::json& j, const std::string& path, const std::string& key) const {
        if (!j.contains(key)) fail(path, "missing key '" + key + "'");
        return j.at(key);
    }

    double number(const nlohmann::json& j, const std::string& path) const {
        if (!j.is_number()) fail(path, "expected a number");
        return j.get<double>();
    }

    std::string string(const nlohmann::json& j, const std::string& path) const {
        if (!j.is_string()) fail(path, "expected a string");
        return j.get<std::string>();
    }

    std::vector<double> series(const nlohmann::json& j, const std::string& path, std::size_t n) const {
        if (j.is_number()) return std::vector<double>(n, j.get<double>());
        if (!j.is_array()) fail(path, "expected a number or a list of " + std::to_string(n) + " numbers");
        if (j.size() != n)
            fail(path, "expected " + std::to_string(n) + " entries, found " + std::to_string(j.size()));
        std::vector<double> v;
        for (std::size_t i = 0; i < j.size(); ++i) v.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
        return v;
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

private:
    std::string source_;
    std::map<std::string, std::size_t> lines_;
};

} // namespace detail

inline IdcCase parse_case(std::string_view text, const std::string& source = "case") {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // Byte offset to line number.
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) line += text[i] == '\n';
        throw InputError(source + ":" + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
    }
    const detail::CaseReader r(source, text);
    using detail::CaseReader;
    r.keys(root, "", {"description", "time_grid", "shortfall_penalty", "idcs", "workloads"});
    if (root.contains("description")) (void)r.string(root["description"], "description");

    IdcCase c;
    const auto& tg = r.at(root, "", "time_grid");
    r.keys(tg, "time_grid", {"slots", "slot_hours"});
    const double slots = r.number(r.at(tg, "time_grid", "slots"), "time_grid.slots");
    if (!(slots >= 1) || slots != std::floor(slots) || slots > 1e6) r.fail("time_grid.slots", "must be a positive integer");
    c.grid.slots = static_cast<std::size_t>(slots);
    c.grid.slot_hours = r.number(r.at(tg, "time_grid", "slot_hours"), "time_grid.slot_hours");
    const std::size_t T = c.grid.slots;
    if (root.contains("shortfall_penalty")) c.shortfall_penalty = r.number(root["shortfall_penalty"], "shortfall_penalty");

    const auto& idcs = r.at(root, "", "idcs");
    if (!idcs.is_array() || idcs.empty()) r.fail("idcs", "expected a non-empty list");
    struct Box {
        std::vector<double> sigma0, rho, lower, upper;
    };
    std::vector<std::array<Box, 3>> boxes;
    for (std::size_t i = 0; i < idcs.size(); ++i) {
        const std::string p = "idcs[" + std::to_string(i) + "]";
        const auto& j = idcs[i];
        r.keys(j, p,
               {"id", "pue", "nominal_power_kw", "interactive_it_kw", "dg_output_kw", "electricity_price", "ess",
                "dr_price_lower", "dr_price_upper", "uncertainty"});
        IdcParams idc;
        idc.id = r.string(r.at(j, p, "id"), p + ".id");
        idc.pue = r.series(r.at(j, p, "pue"), p + ".pue", T);
        idc.nominal_power_kw = r.series(r.at(j, p, "nominal_power_kw"), p + ".nominal_power_kw", T);
        idc.interactive_it_kw = r.series(r.at(j, p, "interactive_it_kw"), p + ".interactive_it_kw", T);
        idc.dg_output_kw = r.series(r.at(j, p, "dg_output_kw"), p + ".dg_output_kw", T);
        idc.electricity_price = r.series(r.at(j, p, "electricity_price"), p + ".electricity_price", T);
        if (j.contains("ess")) {
            const auto& e = j["ess"];
            r.keys(e, p + ".ess", {"max_energy_kwh", "initial_energy_kwh", "max_power_kw"});
            idc.ess.max_energy_kwh = r.number(r.at(e, p + ".ess", "max_energy_kwh"), p + ".ess.max_energy_kwh");
            idc.ess.initial_energy_kwh =
                r.number(r.at(e, p + ".ess", "initial_energy_kwh"), p + ".ess.initial_energy_kwh");
            idc.ess.max_power_kw = r.number(r.at(e, p + ".ess", "max_power_kw"), p + ".ess.max_power_kw");
        }
        const auto lo = r.series(r.at(j, p, "dr_price_lower"), p + ".dr_price_lower", T);
        const auto hi = r.series(r.at(j, p, "dr_price_upper"), p + ".dr_price_upper", T);
        c.dr_price_lower.insert(c.dr_price_lower.end(), lo.begin(), lo.end());
        c.dr_price_upper.insert(c.dr_price_upper.end(), hi.begin(), hi.end());

        const auto& u = r.at(j, p, "uncertainty");
        const std::string up = p + ".uncertainty";
        r.keys(u, up, {"electricity_price", "dg_output", "interactive_load"});
        std::array<Box, 3> b;
        const std::vector<double>* forecast[3] = {&idc.electricity_price, &idc.dg_output_kw, &idc.interactive_it_kw};
        const char* names[3] = {"electricity_price", "dg_output", "interactive_load"};
        for (int q = 0; q < 3; ++q) {
            const std::string qp = up + "." + names[q];
            const auto& qj = r.at(u, up, names[q]);
            r.keys(qj, qp, {"sigma0", "rho", "lower", "upper", "relative_box"});
            b[q].sigma0 = r.series(r.at(qj, qp, "sigma0"), qp + ".sigma0", T);
            b[q].rho = qj.contains("rho") ? r.series(qj["rho"], qp + ".rho", T) : std::vector<double>(T, 0.0);
            if (qj.contains("relative_box")) {
                if (qj.contains("lower") || qj.contains("upper"))
                    r.fail(qp + ".relative_box", "give either relative_box or lower/upper, not both");
                const auto rel = r.series(qj["relative_box"], qp + ".relative_box", T);
                for (std::size_t t = 0; t < T; ++t) {
                    if (!(rel[t] >= 0.0)) r.fail(qp + ".relative_box", "must be >= 0");
                    const double f = (*forecast[q])[t];
                    b[q].lower.push_back(std::max(0.0, f * (1.0 - rel[t])));
                    b[q].upper.push_back(f * (1.0 + rel[t]));
                }
            } else {
                b[q].lower = r.series(r.at(qj, qp, "lower"), qp + ".lower", T);
                b[q].upper = r.series(r.at(qj, qp, "upper"), qp + ".upper", T);
            }
            for (std::size_t t = 0; t < T; ++t) {
                if (b[q].lower[t] > b[q].upper[t]) r.fail(qp, "empty box (lower > upper) at slot " + std::to_string(t + 1));
                const double f = (*forecast[q])[t];
                if (f < b[q].lower[t] || f > b[q].upper[t])
                    r.fail(qp, "forecast outside [lower, upper] at slot " + std::to_string(t + 1));
            }
        }
        boxes.push_back(std::move(b));
        c.idcs.push_back(std::move(idc));
    }
    sync_nominal(c);
    QuantityModel* models[3] = {&c.uncertainty.price, &c.uncertainty.dg, &c.uncertainty.load};
    for (int q = 0; q < 3; ++q)
        for (const auto& b : boxes) {
            models[q]->sigma0.insert(models[q]->sigma0.end(), b[q].sigma0.begin(), b[q].sigma0.end());
            models[q]->rho.insert(models[q]->rho.end(), b[q].rho.begin(), b[q].rho.end());
            models[q]->lower.insert(models[q]->lower.end(), b[q].lower.begin(), b[q].lower.end());
            models[q]->upper.insert(models[q]->upper.end(), b[q].upper.begin(), b[q].upper.end());
        }

    if (root.contains("workloads")) {
        const auto& ws = root["workloads"];
        if (!ws.is_array()) r.fail("workloads", "expected a list");
        for (std::size_t w = 0; w < ws.size(); ++w) {
            const std::string p = "workloads[" + std::to_string(w) + "]";
            r.keys(ws[w], p, {"id", "host", "it_power_kw", "termination_price"});
            FlexibleWorkload wl;
            wl.id = r.string(r.at(ws[w], p, "id"), p + ".id");
            wl.host = r.string(r.at(ws[w], p, "host"), p + ".host");
            wl.it_power_kw = r.series(r.at(ws[w], p, "it_power_kw"), p + ".it_power_kw", T);
            wl.termination_price = r.number(r.at(ws[w], p, "termination_price"), p + ".termination_price");
            bool known = false;
            for (const auto& idc : c.idcs) known = known || idc.id == wl.host;
            if (!known) r.fail(p + ".host", "unknown idc '" + wl.host + "'");
            c.workloads.push_back(std::move(wl));
        }
    }
    try {
        c.validate();
    } catch (const InputError& e) {
        throw InputError(source + ": " + e.what());
    }
    return c;
}

inline IdcCase load_case(const std::string& path) { return parse_case(read_file(path), path); }

// Canonical JSON form: every per-slot field written as a list.
inline nlohmann::ordered_json case_to_json(const IdcCase& c) {
    nlohmann::ordered_json j;
    j["time_grid"] = {{"slots", c.grid.slots}, {"slot_hours", c.grid.slot_hours}};
    j["shortfall_penalty"] = c.shortfall_penalty;
    auto& idcs = j["idcs"] = nlohmann::ordered_json::array();
    const std::size_t T = c.num_slots();
    auto slice = [&](const std::vector<double>& v, std::size_t i) {
        return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(i * T),
                                   v.begin() + static_cast<std::ptrdiff_t>((i + 1) * T));
    };
    for (std::size_t i = 0; i < c.num_idc(); ++i) {
        const auto& d = c.idcs[i];
        nlohmann::ordered_json e;
        e["id"] = d.id;
        e["pue"] = d.pue;
        e["nominal_power_kw"] = d.nominal_power_kw;
        e["interactive_it_kw"] = d.interactive_it_kw;
        e["dg_output_kw"] = d.dg_output_kw;
        e["electricity_price"] = d.electricity_price;
        e["ess"] = {{"max_energy_kwh", d.ess.max_energy_kwh},
                    {"initial_energy_kwh", d.ess.initial_energy_kwh},
                    {"max_power_kw", d.ess.max_power_kw}};
        e["dr_price_lower"] = slice(c.dr_price_lower, i);
        e["dr_price_upper"] = slice(c.dr_price_upper, i);
        auto& u = e["uncertainty"];
        const std::pair<const char*, const QuantityModel*> qs[] = {{"electricity_price", &c.uncertainty.price},
                                                                   {"dg_output", &c.uncertainty.dg},
                                                                   {"interactive_load", &c.uncertainty.load}};
        for (const auto& [name, q] : qs)
            u[name] = {{"sigma0", slice(q->sigma0, i)},
                       {"rho", slice(q->rho, i)},
                       {"lower", slice(q->lower, i)},
                       {"upper", slice(q->upper, i)}};
        idcs.push_back(std::move(e));
    }
    auto& ws = j["workloads"] = nlohmann::ordered_json::array();
    for (const auto& w : c.workloads)
        ws.push_back({{"id", w.id}, {"host", w.host}, {"it_power_kw", w.it_power_kw}, {"termination_price", w.termination_price}});
    return j;
}

} // namespace idcdr::io
