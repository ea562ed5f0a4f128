#pragma once

// Two-stage operation: first-stage decisions against a finite scenario set
// (epigraph form), then slot-by-slot recourse for a realized scenario.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "case.hpp"
#include "errors.hpp"
#include "hash.hpp"
#include "idc_model.hpp"
#include "lp.hpp"

namespace idcdr {

// ---------------------------------------------------------------------------
// Scenario sets

// a >= b in cost: at least b's price and load, at most b's DG everywhere.
inline bool dominates(const ScenarioRealization& a, const ScenarioRealization& b) {
    for (std::size_t k = 0; k < a.price.size(); ++k)
        if (a.price[k] < b.price[k] || a.load[k] < b.load[k] || a.dg[k] > b.dg[k]) return false;
    return true;
}

// Drops scenarios whose second-stage cost is pointwise dominated by another
// member; with non-negative prices such scenarios never bind the epigraph.
inline std::vector<ScenarioRealization> prune_dominated(std::span<const ScenarioRealization> set) {
    std::vector<ScenarioRealization> kept;
    for (std::size_t i = 0; i < set.size(); ++i) {
        bool drop = false;
        for (std::size_t j = 0; j < set.size() && !drop; ++j) {
            if (i == j || !dominates(set[j], set[i])) continue;
            // Identical members: keep the first one only.
            drop = !(set[j] == set[i]) || j < i;
        }
        if (!drop) kept.push_back(set[i]);
    }
    return kept;
}

// Box vertices when there are at most `budget` of them; otherwise the 8
// all-lower/all-upper crossings of the three quantities (worst case first),
// the nominal profile, and seeded uniform box samples up to the budget.
inline std::vector<ScenarioRealization> build_scenario_set(const IdcCase& c, std::size_t budget, std::uint64_t seed) {
    if (budget < 1) throw InputError("scenario set: budget must be >= 1");
    const auto& u = c.uncertainty;
    const std::size_t K = c.dim();
    constexpr Quantity quantities[] = {Quantity::electricity_price, Quantity::dg_output, Quantity::interactive_load};

    struct Coord {
        Quantity q;
        std::size_t k;
    };
    std::vector<Coord> wide;
    for (Quantity q : quantities)
        for (std::size_t k = 0; k < K; ++k)
            if (u.get(q).lower[k] < u.get(q).upper[k]) wide.push_back({q, k});

    std::vector<ScenarioRealization> out;
    const ScenarioRealization nominal = c.nominal();
    if (wide.size() < 63 && (std::uint64_t{1} << wide.size()) <= budget) {
        // Lower corner first, so the all-upper corner is last.
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << wide.size()); ++mask) {
            ScenarioRealization z = nominal;
            for (std::size_t b = 0; b < wide.size(); ++b) {
                const auto& m = u.get(wide[b].q);
                z.get(wide[b].q)[wide[b].k] = (mask >> b) & 1u ? m.upper[wide[b].k] : m.lower[wide[b].k];
            }
            out.push_back(std::move(z));
        }
        return out;
    }

    auto profile = [&](bool price_up, bool dg_up, bool load_up) {
        return ScenarioRealization{price_up ? u.price.upper : u.price.lower, dg_up ? u.dg.upper : u.dg.lower,
                                   load_up ? u.load.upper : u.load.lower};
    };
    out.push_back(profile(true, false, true));  // cost-worst corner
    out.push_back(nominal);
    for (int mask = 0; mask < 8; ++mask) {
        const bool price_up = mask & 1, dg_up = mask & 2, load_up = mask & 4;
        if (price_up && !dg_up && load_up) continue;
        out.push_back(profile(price_up, dg_up, load_up));
    }
    if (out.size() > budget) out.resize(budget);

    std::mt19937_64 rng(derive_seed(seed, 0x5ce4a710));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (out.size() < budget) {
        ScenarioRealization z = nominal;
        for (Quantity q : quantities) {
            const auto& m = u.get(q);
            for (std::size_t k = 0; k < K; ++k) z.get(q)[k] = m.lower[k] + unit(rng) * (m.upper[k] - m.lower[k]);
        }
        out.push_back(std::move(z));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Second stage

struct SlotDispatch {
    double grid_kw = 0.0;
    double dr_kw = 0.0;
    double curtailment_kw = 0.0;
    double shortfall_kw = 0.0;
    bool over_nominal = false;  // P^D + P^ESS - P^G exceeded P^Nomi
};

// Minimizer of P p - P^DR p^DR for one slot with the first stage fixed.
// `demand_kw` is P^D after terminations. Ties at zero DR price resolve to P^DR = 0.
inline SlotDispatch second_stage_closed_form(double demand_kw, double ess_kw, double dg_kw, double nominal_kw,
                                             double dr_price, double elec_price) {
    if (!(demand_kw >= 0.0) || !(dg_kw >= 0.0) || !(nominal_kw >= 0.0) || !(dr_price >= 0.0) || !(elec_price >= 0.0) ||
        !std::isfinite(ess_kw))
        throw InputError("second_stage_closed_form: inputs must be >= 0 (storage power may be signed)");
    if (demand_kw + ess_kw < 0.0) throw InputError("second_stage_closed_form: storage discharge exceeds demand");
    SlotDispatch d;
    const double net = demand_kw + ess_kw - dg_kw;
    d.curtailment_kw = std::max(0.0, -net);
    d.grid_kw = std::max(0.0, net);
    if (d.grid_kw > nominal_kw) {
        d.over_nominal = true;
        d.shortfall_kw = d.grid_kw - nominal_kw;
        d.grid_kw = nominal_kw;
    }
    d.dr_kw = dr_price > 0.0 ? std::max(0.0, nominal_kw - d.grid_kw) : 0.0;
    return d;
}

// Same slot problem solved as an LP.
inline SlotDispatch second_stage_slot_lp(double demand_kw, double ess_kw, double dg_kw, double nominal_kw,
                                         double dr_price, double elec_price, double shortfall_penalty,
                                         const lp::LpConfig& cfg = {}) {
    if (demand_kw + ess_kw < 0.0) throw InputError("second stage: storage discharge exceeds demand");
    using lp::Relation;
    lp::LinearProgram p;
    const auto grid = p.add_variable(elec_price, 0.0, nominal_kw, "p");
    const auto dr = p.add_variable(-dr_price, 0.0, dr_price > 0.0 ? nominal_kw : 0.0, "pdr");
    // DG is only curtailed when it exceeds the load it can serve.
    const auto curt = p.add_variable(0.0, 0.0, std::max(0.0, std::min(dg_kw, dg_kw - demand_kw - ess_kw)), "curt");
    const auto shortfall = p.add_variable(shortfall_penalty, 0.0, lp::infinity, "short");
    p.add_row({{grid, 1.0}, {shortfall, 1.0}, {curt, -1.0}}, Relation::equal, demand_kw + ess_kw - dg_kw, "balance");
    p.add_row({{grid, 1.0}, {dr, 1.0}}, Relation::less_equal, nominal_kw, "capacity");
    const auto s = lp::solve_lp(p, cfg);
    if (!s.optimal()) throw SolverError("second stage: slot program not optimal");
    SlotDispatch d;
    d.grid_kw = s.values[grid];
    d.dr_kw = s.values[dr];
    d.curtailment_kw = s.values[curt];
    d.shortfall_kw = s.values[shortfall];
    d.over_nominal = d.shortfall_kw > cfg.feasibility_tol;
    return d;
}

inline void check_first_stage_shape(const IdcCase& c, const FirstStageDecision& first) {
    if (first.terminate.size() != c.workloads.size() || first.ess_power_kw.size() != c.dim() ||
        first.ess_energy_kwh.size() != c.dim())
        throw InputError("first-stage decision does not match the case dimensions");
}

inline void check_realization_shape(const IdcCase& c, const ScenarioRealization& z) {
    if (z.price.size() != c.dim() || z.dg.size() != c.dim() || z.load.size() != c.dim())
        throw InputError("realization does not supply every (idc, slot)");
}

// Total demand P^D at (idc, t) under realization z.
inline double realized_demand(const IdcCase& c, const FirstStageDecision& first, const ScenarioRealization& z,
                              std::size_t idc, std::size_t t) {
    return total_power_demand(it_power_demand(c, idc, t, first.terminate, z), c.idcs[idc].pue[t]);
}

enum class SecondStageMethod { lp, closed_form };

inline SecondStageDecision solve_second_stage(const IdcCase& c, const FirstStageDecision& first,
                                              const ScenarioRealization& z, std::span<const double> dr_price,
                                              SecondStageMethod method = SecondStageMethod::lp,
                                              const lp::LpConfig& cfg = {}) {
    check_first_stage_shape(c, first);
    check_realization_shape(c, z);
    if (dr_price.size() != c.dim()) throw InputError("second stage: dr price vector has wrong length");
    SecondStageDecision out;
    const std::size_t K = c.dim();
    out.grid_power_kw.resize(K);
    out.dr_amount_kw.resize(K);
    out.curtailment_kw.resize(K);
    out.shortfall_kw.resize(K);
    for (std::size_t i = 0; i < c.num_idc(); ++i)
        for (std::size_t t = 0; t < c.num_slots(); ++t) {
            const std::size_t k = c.index(i, t);
            const double pd = realized_demand(c, first, z, i, t);
            const double nomi = c.idcs[i].nominal_power_kw[t];
            const SlotDispatch d =
                method == SecondStageMethod::lp
                    ? second_stage_slot_lp(pd, first.ess_power_kw[k], z.dg[k], nomi, dr_price[k], z.price[k],
                                           c.shortfall_penalty, cfg)
                    : second_stage_closed_form(pd, first.ess_power_kw[k], z.dg[k], nomi, dr_price[k], z.price[k]);
            out.grid_power_kw[k] = d.grid_kw;
            out.dr_amount_kw[k] = d.dr_kw;
            out.curtailment_kw[k] = d.curtailment_kw;
            out.shortfall_kw[k] = d.shortfall_kw;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Costs

inline double termination_cost(const IdcCase& c, const FirstStageDecision& first) {
    double cost = 0.0;
    for (std::size_t w = 0; w < c.workloads.size(); ++w) cost += first.terminate[w] * c.workloads[w].termination_price;
    return cost;
}

// sum dt (p P - p^DR P^DR + penalty * shortfall)
inline double second_stage_cost(const IdcCase& c, const SecondStageDecision& s, const ScenarioRealization& z,
                                std::span<const double> dr_price) {
    double cost = 0.0;
    for (std::size_t k = 0; k < c.dim(); ++k)
        cost += c.grid.slot_hours * (z.price[k] * s.grid_power_kw[k] - dr_price[k] * s.dr_amount_kw[k] +
                                     c.shortfall_penalty * s.shortfall_kw[k]);
    return cost;
}

// ---------------------------------------------------------------------------
// First stage

struct FirstStageOptions {
    std::size_t scenario_budget = 16;
    bool prune_dominated = true;
    lp::LpConfig lp;
};

struct FirstStagePlan {
    FirstStageDecision decision;
    std::vector<ScenarioRealization> scenarios;   // scenarios in the program
    std::vector<SecondStageDecision> recourse;     // per scenario, from the program
    double termination_cost = 0.0;
    double theta = 0.0;                            // worst-case second-stage cost
    double objective = 0.0;
    std::size_t branches = 0;
};

namespace detail {

inline std::string diagnose_infeasibility(const lp::MixedBinaryProgram& prog, const lp::LpConfig& cfg) {
    for (const char* family : {"ess_energy", "ess_discharge", "capacity", "balance", "epigraph"}) {
        lp::LinearProgram relaxed = prog.lp;
        std::erase_if(relaxed.constraints, [&](const lp::Constraint& row) { return row.name.starts_with(family); });
        if (relaxed.constraints.size() == prog.lp.constraints.size()) continue;
        if (lp::solve_lp(relaxed, cfg).status != lp::Status::infeasible) return family;
    }
    return "bounds";
}

} // namespace detail

inline FirstStagePlan solve_first_stage(const IdcCase& c, std::span<const double> dr_price,
                                        const FirstStageOptions& opt = {}, std::uint64_t seed = 0) {
    if (opt.scenario_budget < 1) throw InputError("solve_first_stage: scenario budget must be >= 1");
    FirstStagePlan plan;
    plan.scenarios = build_scenario_set(c, opt.scenario_budget, seed);
    if (opt.prune_dominated) plan.scenarios = prune_dominated(plan.scenarios);
    const FirstStageProgram fsp = build_first_stage_program(c, plan.scenarios, dr_price);
    const lp::LpSolution sol = lp::solve_milp(fsp.program, opt.lp);
    if (sol.status == lp::Status::infeasible) {
        const std::string family = detail::diagnose_infeasibility(fsp.program, opt.lp);
        throw ModelInfeasibleError(family, "first stage infeasible; first violated constraint family: " + family);
    }
    if (sol.status != lp::Status::optimal) throw SolverError("first stage: program unbounded");

    const auto& L = fsp.layout;
    auto& d = plan.decision;
    for (std::size_t v : L.terminate) d.terminate.push_back(sol.values[v] > 0.5 ? 1 : 0);
    for (std::size_t v : L.ess_power) d.ess_power_kw.push_back(sol.values[v]);
    // The trajectory is re-derived from the schedule so the cumulative identity is exact.
    d.ess_energy_kwh = ess_trajectory(c, d.ess_power_kw);
    for (std::size_t k = 0; k < c.dim(); ++k)
        d.ess_energy_kwh[k] = std::clamp(d.ess_energy_kwh[k], 0.0, c.idcs[k / c.num_slots()].ess.max_energy_kwh);

    for (std::size_t s = 0; s < plan.scenarios.size(); ++s) {
        SecondStageDecision r;
        for (std::size_t k = 0; k < c.dim(); ++k) {
            r.grid_power_kw.push_back(sol.values[L.grid[s][k]]);
            r.dr_amount_kw.push_back(sol.values[L.dr[s][k]]);
            r.curtailment_kw.push_back(sol.values[L.curtail[s][k]]);
            r.shortfall_kw.push_back(sol.values[L.shortfall[s][k]]);
        }
        plan.recourse.push_back(std::move(r));
    }
    plan.termination_cost = termination_cost(c, d);
    plan.theta = sol.values[L.theta];
    plan.objective = sol.objective;
    plan.branches = sol.branches;
    return plan;
}

// ---------------------------------------------------------------------------
// Outcome record

struct OperationOutcome {
    FirstStageDecision first;
    std::vector<ScenarioRealization> realizations;
    std::vector<SecondStageDecision> second;
    std::vector<double> dr_price;
    double first_stage_cost = 0.0;
    double second_stage_cost = 0.0;  // worst over the listed realizations
    double total = 0.0;
};

inline OperationOutcome make_outcome(const IdcCase& c, FirstStageDecision first,
                                     std::vector<ScenarioRealization> realizations,
                                     std::vector<SecondStageDecision> second, std::vector<double> dr_price) {
    if (realizations.size() != second.size() || realizations.empty())
        throw InputError("outcome: one second-stage decision per realization required");
    OperationOutcome o;
    o.first_stage_cost = termination_cost(c, first);
    o.second_stage_cost = -lp::infinity;
    for (std::size_t r = 0; r < second.size(); ++r)
        o.second_stage_cost = std::max(o.second_stage_cost, second_stage_cost(c, second[r], realizations[r], dr_price));
    o.total = o.first_stage_cost + o.second_stage_cost;
    o.first = std::move(first);
    o.realizations = std::move(realizations);
    o.second = std::move(second);
    o.dr_price = std::move(dr_price);
    return o;
}

inline nlohmann::ordered_json to_json(const FirstStageDecision& d) {
    return {{"terminate", d.terminate}, {"ess_power_kw", d.ess_power_kw}, {"ess_energy_kwh", d.ess_energy_kwh}};
}

inline nlohmann::ordered_json to_json(const SecondStageDecision& d) {
    return {{"grid_power_kw", d.grid_power_kw},
            {"dr_amount_kw", d.dr_amount_kw},
            {"curtailment_kw", d.curtailment_kw},
            {"shortfall_kw", d.shortfall_kw}};
}

inline nlohmann::ordered_json to_json(const OperationOutcome& o) {
    nlohmann::ordered_json j;
    j["first_stage"] = to_json(o.first);
    auto& sec = j["second_stage"] = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < o.second.size(); ++r) {
        auto rec = to_json(o.second[r]);
        rec["realization"] = {{"electricity_price", o.realizations[r].price},
                              {"dg_output_kw", o.realizations[r].dg},
                              {"interactive_it_kw", o.realizations[r].load}};
        sec.push_back(std::move(rec));
    }
    j["dr_price"] = o.dr_price;
    j["first_stage_cost"] = o.first_stage_cost;
    j["second_stage_cost"] = o.second_stage_cost;
    j["total"] = o.total;
    return j;
}

} // namespace idcdr
