#pragma once

// Problem instance: time grid, data centers, flexible workloads, uncertainty
// box, and the DR price range. All per-slot series of a data center are
// stored idc-major in flat vectors: index(idc, t) = idc * T + t.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "hash.hpp"

namespace idcdr {

struct TimeGrid {
    std::size_t slots = 4;
    double slot_hours = 0.25;

    void validate() const {
        if (slots < 1) throw InputError("time grid: slot count must be >= 1");
        if (!(slot_hours > 0.0) || !std::isfinite(slot_hours)) throw InputError("time grid: slot duration must be > 0");
    }
};

struct EssParams {
    double max_energy_kwh = 0.0;
    double initial_energy_kwh = 0.0;
    double max_power_kw = 0.0;

    void validate(const std::string& where) const {
        if (!(max_energy_kwh >= 0.0)) throw InputError(where + ": ess max_energy_kwh must be >= 0");
        if (!(initial_energy_kwh >= 0.0) || initial_energy_kwh > max_energy_kwh)
            throw InputError(where + ": ess initial_energy_kwh must lie in [0, max_energy_kwh]");
        if (!(max_power_kw >= 0.0)) throw InputError(where + ": ess max_power_kw must be >= 0");
    }
};

struct IdcParams {
    std::string id;
    std::vector<double> pue;             // >= 1
    std::vector<double> nominal_power_kw;
    EssParams ess;
    std::vector<double> interactive_it_kw;  // forecast of P^in
    std::vector<double> dg_output_kw;       // forecast of P^G
    std::vector<double> electricity_price;  // forecast, $/kWh

    void validate(std::size_t slots) const {
        const std::string where = "idc '" + id + "'";
        if (id.empty()) throw InputError("idc: empty identifier");
        auto check = [&](const std::vector<double>& v, const char* name, double min) {
            if (v.size() != slots)
                throw InputError(where + ": " + name + " has " + std::to_string(v.size()) + " entries, expected " +
                                 std::to_string(slots));
            for (double x : v)
                if (!(x >= min) || !std::isfinite(x))
                    throw InputError(where + ": " + name + " entries must be finite and >= " + std::to_string(min));
        };
        check(pue, "pue", 1.0);
        check(nominal_power_kw, "nominal_power_kw", 0.0);
        check(interactive_it_kw, "interactive_it_kw", 0.0);
        check(dg_output_kw, "dg_output_kw", 0.0);
        check(electricity_price, "electricity_price", 0.0);
        ess.validate(where);
    }
};

struct FlexibleWorkload {
    std::string id;
    std::string host;                // IdcParams::id
    std::vector<double> it_power_kw; // per slot
    double termination_price = 0.0;  // $ per workload
};

enum class Quantity { electricity_price, dg_output, interactive_load };

inline const char* to_string(Quantity q) {
    switch (q) {
    case Quantity::electricity_price: return "electricity_price";
    case Quantity::dg_output: return "dg_output";
    case Quantity::interactive_load: return "interactive_load";
    }
    return "?";
}

// Distribution and box of one uncertain quantity over every (idc, t).
struct QuantityModel {
    std::vector<double> nominal;
    std::vector<double> sigma0;  // base relative standard deviation
    std::vector<double> rho;     // growth of relative deviation per slot
    std::vector<double> lower;
    std::vector<double> upper;
};

struct UncertaintyModel {
    QuantityModel price;
    QuantityModel dg;
    QuantityModel load;

    const QuantityModel& get(Quantity q) const {
        return q == Quantity::electricity_price ? price : q == Quantity::dg_output ? dg : load;
    }
    QuantityModel& get(Quantity q) {
        return q == Quantity::electricity_price ? price : q == Quantity::dg_output ? dg : load;
    }

    void validate(std::size_t dim) const {
        for (Quantity q : {Quantity::electricity_price, Quantity::dg_output, Quantity::interactive_load}) {
            const auto& m = get(q);
            const std::string where = std::string("uncertainty.") + to_string(q);
            for (const auto* v : {&m.nominal, &m.sigma0, &m.rho, &m.lower, &m.upper})
                if (v->size() != dim) throw InputError(where + ": vector length does not match idc x slot count");
            for (std::size_t k = 0; k < dim; ++k) {
                if (m.lower[k] > m.upper[k]) throw InputError(where + ": empty box (lower > upper)");
                if (m.nominal[k] < m.lower[k] || m.nominal[k] > m.upper[k])
                    throw InputError(where + ": nominal outside [lower, upper]");
                if (!(m.sigma0[k] >= 0.0)) throw InputError(where + ": sigma0 must be >= 0");
                if (!(m.rho[k] >= 0.0)) throw InputError(where + ": rho must be >= 0");
                if (m.lower[k] < 0.0) throw InputError(where + ": lower bound must be >= 0");
            }
        }
    }
};

// One concrete draw of the uncertain set.
struct ScenarioRealization {
    std::vector<double> price;
    std::vector<double> dg;
    std::vector<double> load;

    const std::vector<double>& get(Quantity q) const {
        return q == Quantity::electricity_price ? price : q == Quantity::dg_output ? dg : load;
    }
    std::vector<double>& get(Quantity q) {
        return q == Quantity::electricity_price ? price : q == Quantity::dg_output ? dg : load;
    }
    bool operator==(const ScenarioRealization&) const = default;
};

struct IdcCase {
    TimeGrid grid;
    std::vector<IdcParams> idcs;
    std::vector<FlexibleWorkload> workloads;
    UncertaintyModel uncertainty;
    std::vector<double> dr_price_lower;  // per (idc, t), $/kWh
    std::vector<double> dr_price_upper;
    double shortfall_penalty = 10.0;     // $/kWh of demand above nominal capacity

    std::size_t num_idc() const noexcept { return idcs.size(); }
    std::size_t num_slots() const noexcept { return grid.slots; }
    std::size_t dim() const noexcept { return idcs.size() * grid.slots; }
    std::size_t index(std::size_t idc, std::size_t t) const noexcept { return idc * grid.slots + t; }

    std::size_t idc_index(const std::string& id) const {
        for (std::size_t i = 0; i < idcs.size(); ++i)
            if (idcs[i].id == id) return i;
        throw InputError("unknown idc identifier '" + id + "'");
    }

    // Forecast profile as a realization.
    ScenarioRealization nominal() const {
        return {uncertainty.price.nominal, uncertainty.dg.nominal, uncertainty.load.nominal};
    }

    void validate() const {
        grid.validate();
        if (idcs.empty()) throw InputError("case: at least one idc required");
        for (std::size_t i = 0; i < idcs.size(); ++i) {
            idcs[i].validate(grid.slots);
            for (std::size_t j = 0; j < i; ++j)
                if (idcs[j].id == idcs[i].id) throw InputError("case: duplicate idc identifier '" + idcs[i].id + "'");
        }
        for (std::size_t w = 0; w < workloads.size(); ++w) {
            const auto& wl = workloads[w];
            const std::string where = "workload '" + wl.id + "'";
            if (wl.id.empty()) throw InputError("workload: empty identifier");
            for (std::size_t j = 0; j < w; ++j)
                if (workloads[j].id == wl.id) throw InputError("case: duplicate workload identifier '" + wl.id + "'");
            (void)idc_index(wl.host);
            if (wl.it_power_kw.size() != grid.slots) throw InputError(where + ": it_power_kw length must equal slot count");
            for (double p : wl.it_power_kw)
                if (!(p >= 0.0) || !std::isfinite(p)) throw InputError(where + ": it_power_kw entries must be >= 0");
            if (!(wl.termination_price >= 0.0)) throw InputError(where + ": termination_price must be >= 0");
        }
        uncertainty.validate(dim());
        for (std::size_t i = 0; i < idcs.size(); ++i)
            for (std::size_t t = 0; t < grid.slots; ++t) {
                const std::size_t k = index(i, t);
                if (uncertainty.price.nominal[k] != idcs[i].electricity_price[t] ||
                    uncertainty.dg.nominal[k] != idcs[i].dg_output_kw[t] ||
                    uncertainty.load.nominal[k] != idcs[i].interactive_it_kw[t])
                    throw InputError("case: uncertainty nominal values must equal the idc forecasts");
            }
        if (dr_price_lower.size() != dim() || dr_price_upper.size() != dim())
            throw InputError("case: dr price range must have one entry per (idc, slot)");
        for (std::size_t k = 0; k < dim(); ++k)
            if (!(dr_price_lower[k] >= 0.0) || dr_price_lower[k] > dr_price_upper[k])
                throw InputError("case: dr price range must satisfy 0 <= lower <= upper");
        // Serving demand from the grid must always be cheaper than leaving it unserved.
        double max_marginal = 0.0;
        for (std::size_t k = 0; k < dim(); ++k)
            max_marginal = std::max(max_marginal, uncertainty.price.upper[k] + dr_price_upper[k]);
        if (!(shortfall_penalty > max_marginal))
            throw InputError("case: shortfall_penalty must exceed the largest electricity price plus dr price");
    }
};

// Copies each idc's forecasts into the uncertainty model's nominal vectors.
inline void sync_nominal(IdcCase& c) {
    const std::size_t dim = c.dim();
    c.uncertainty.price.nominal.assign(dim, 0.0);
    c.uncertainty.dg.nominal.assign(dim, 0.0);
    c.uncertainty.load.nominal.assign(dim, 0.0);
    for (std::size_t i = 0; i < c.num_idc(); ++i)
        for (std::size_t t = 0; t < c.num_slots(); ++t) {
            const auto& idc = c.idcs[i];
            const std::size_t k = c.index(i, t);
            if (t < idc.electricity_price.size()) c.uncertainty.price.nominal[k] = idc.electricity_price[t];
            if (t < idc.dg_output_kw.size()) c.uncertainty.dg.nominal[k] = idc.dg_output_kw[t];
            if (t < idc.interactive_it_kw.size()) c.uncertainty.load.nominal[k] = idc.interactive_it_kw[t];
        }
}

// Content digest over every field that affects results.
inline std::uint64_t case_digest(const IdcCase& c) {
    Fnv1a h;
    h.str("idc-case/1").u64(c.grid.slots).f64(c.grid.slot_hours);
    h.u64(c.idcs.size());
    for (const auto& idc : c.idcs) {
        h.str(idc.id).u64(0);
        h.f64s(idc.pue).f64s(idc.nominal_power_kw).f64s(idc.interactive_it_kw).f64s(idc.dg_output_kw);
        h.f64s(idc.electricity_price);
        h.f64(idc.ess.max_energy_kwh).f64(idc.ess.initial_energy_kwh).f64(idc.ess.max_power_kw);
    }
    h.u64(c.workloads.size());
    for (const auto& w : c.workloads) h.str(w.id).u64(0).str(w.host).u64(0).f64s(w.it_power_kw).f64(w.termination_price);
    for (const auto* q : {&c.uncertainty.price, &c.uncertainty.dg, &c.uncertainty.load})
        h.f64s(q->nominal).f64s(q->sigma0).f64s(q->rho).f64s(q->lower).f64s(q->upper);
    h.f64s(c.dr_price_lower).f64s(c.dr_price_upper).f64(c.shortfall_penalty);
    return h.value();
}

} // namespace idcdr
