#pragma once

// Power-level and workload-level model of data-center operation, and the
// scenario-epigraph program that couples them:
//
//   P^D   = P^IT * PUE
//   P     = P^D + P^ESS - P^G + curtailment - shortfall
//   0 <= P <= P^Nomi - P^DR
//   E_t   = E_initial + sum_{t' <= t} P^ESS_t' * dt,   0 <= E_t <= E_max
//   P^IT  = P^in + sum_wl P^fl_wl * (1 - v_wl)

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "case.hpp"
#include "errors.hpp"
#include "lp.hpp"

namespace idcdr {

// Workload terminations and the storage schedule, fixed before the horizon.
struct FirstStageDecision {
    std::vector<int> terminate;         // per workload, 1 = terminated
    std::vector<double> ess_power_kw;   // per (idc, t), positive = charging
    std::vector<double> ess_energy_kwh; // per (idc, t), end of slot
};

// Recourse after the uncertainty is revealed.
struct SecondStageDecision {
    std::vector<double> grid_power_kw;  // P
    std::vector<double> dr_amount_kw;   // P^DR
    std::vector<double> curtailment_kw; // DG not absorbed
    std::vector<double> shortfall_kw;   // demand above nominal capacity, not served from the grid
};

inline double total_power_demand(double it_power_kw, double pue) {
    if (!(it_power_kw >= 0.0)) throw InputError("total_power_demand: IT power must be >= 0");
    if (!(pue >= 1.0)) throw InputError("total_power_demand: PUE must be >= 1");
    return it_power_kw * pue;
}

// IT demand of `idc` at slot t with interactive load `interactive_kw`.
inline double it_power_demand(const IdcCase& c, std::size_t idc, std::size_t t, std::span<const int> terminate,
                              double interactive_kw) {
    if (idc >= c.num_idc() || t >= c.num_slots()) throw InputError("it_power_demand: index out of range");
    if (terminate.size() != c.workloads.size())
        throw InputError("it_power_demand: one termination indicator per workload required");
    double p = interactive_kw;
    for (std::size_t w = 0; w < c.workloads.size(); ++w) {
        const auto& wl = c.workloads[w];
        if (wl.host != c.idcs[idc].id) continue;
        p += wl.it_power_kw[t] * (1.0 - terminate[w]);
    }
    return p;
}

inline double it_power_demand(const IdcCase& c, std::size_t idc, std::size_t t, std::span<const int> terminate) {
    if (idc >= c.num_idc() || t >= c.num_slots()) throw InputError("it_power_demand: index out of range");
    return it_power_demand(c, idc, t, terminate, c.idcs[idc].interactive_it_kw[t]);
}

inline double it_power_demand(const IdcCase& c, std::size_t idc, std::size_t t, std::span<const int> terminate,
                              const ScenarioRealization& z) {
    if (idc >= c.num_idc() || t >= c.num_slots()) throw InputError("it_power_demand: index out of range");
    return it_power_demand(c, idc, t, terminate, z.load[c.index(idc, t)]);
}

// Variable indices of a first-stage program.
struct FirstStageLayout {
    std::vector<std::size_t> terminate;
    std::vector<std::size_t> ess_power;
    std::vector<std::size_t> ess_energy;
    // [scenario][k]
    std::vector<std::vector<std::size_t>> grid, dr, curtail, shortfall;
    std::size_t theta = 0;
};

struct FirstStageProgram {
    lp::MixedBinaryProgram program;
    FirstStageLayout layout;
};

// Energy trajectory implied by a charge schedule.
inline std::vector<double> ess_trajectory(const IdcCase& c, std::span<const double> ess_power_kw) {
    if (ess_power_kw.size() != c.dim()) throw InputError("ess_trajectory: one power entry per (idc, slot) required");
    std::vector<double> e(c.dim());
    for (std::size_t i = 0; i < c.num_idc(); ++i) {
        double acc = c.idcs[i].ess.initial_energy_kwh;
        for (std::size_t t = 0; t < c.num_slots(); ++t) {
            acc += ess_power_kw[c.index(i, t)] * c.grid.slot_hours;
            e[c.index(i, t)] = acc;
        }
    }
    return e;
}

// Scenario-epigraph form of the two-stage problem:
//   min  sum_wl v_wl p^WL + theta
//   s.t. theta >= sum_{idc,t} dt (p_s P_s - p^DR P^DR_s + penalty * shortfall_s)   for every scenario s
// plus the power, storage and capacity rows per scenario. Storage discharge is
// limited so that P^D + P^ESS >= 0 for every interactive load in the box.
inline FirstStageProgram build_first_stage_program(const IdcCase& c, std::span<const ScenarioRealization> scenarios,
                                                   std::span<const double> dr_price) {
    if (scenarios.empty()) throw InputError("build_first_stage_program: empty scenario set");
    if (dr_price.size() != c.dim()) throw InputError("build_first_stage_program: dr price vector has wrong length");
    for (double p : dr_price)
        if (!(p >= 0.0)) throw InputError("build_first_stage_program: dr prices must be >= 0");
    for (const auto& z : scenarios)
        if (z.price.size() != c.dim() || z.dg.size() != c.dim() || z.load.size() != c.dim())
            throw InputError("build_first_stage_program: scenario vector has wrong length");

    using lp::Relation;
    using lp::Term;
    const std::size_t T = c.num_slots(), K = c.dim(), S = scenarios.size();
    const double dt = c.grid.slot_hours;
    FirstStageProgram out;
    auto& prog = out.program;
    auto& lp = prog.lp;
    auto& L = out.layout;

    std::vector<std::size_t> host(c.workloads.size());
    for (std::size_t w = 0; w < c.workloads.size(); ++w) {
        host[w] = c.idc_index(c.workloads[w].host);
        L.terminate.push_back(
            lp.add_variable(c.workloads[w].termination_price, 0.0, 1.0, "v[" + c.workloads[w].id + "]"));
        prog.binaries.push_back(L.terminate.back());
    }
    auto tag = [&](std::size_t i, std::size_t t) { return c.idcs[i].id + "," + std::to_string(t + 1); };
    for (std::size_t i = 0; i < c.num_idc(); ++i)
        for (std::size_t t = 0; t < T; ++t) {
            const auto& ess = c.idcs[i].ess;
            L.ess_power.push_back(lp.add_variable(0.0, -ess.max_power_kw, ess.max_power_kw, "pess[" + tag(i, t) + "]"));
        }
    for (std::size_t i = 0; i < c.num_idc(); ++i)
        for (std::size_t t = 0; t < T; ++t)
            L.ess_energy.push_back(lp.add_variable(0.0, 0.0, c.idcs[i].ess.max_energy_kwh, "e[" + tag(i, t) + "]"));
    L.grid.resize(S);
    L.dr.resize(S);
    L.curtail.resize(S);
    L.shortfall.resize(S);
    for (std::size_t s = 0; s < S; ++s) {
        const auto& z = scenarios[s];
        const std::string sfx = "," + std::to_string(s) + "]";
        for (std::size_t i = 0; i < c.num_idc(); ++i)
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t k = c.index(i, t);
                const double nomi = c.idcs[i].nominal_power_kw[t];
                L.grid[s].push_back(lp.add_variable(0.0, 0.0, nomi, "p[" + tag(i, t) + sfx));
                L.dr[s].push_back(lp.add_variable(0.0, 0.0, dr_price[k] > 0.0 ? nomi : 0.0, "pdr[" + tag(i, t) + sfx));
                L.curtail[s].push_back(lp.add_variable(0.0, 0.0, z.dg[k], "curt[" + tag(i, t) + sfx));
                L.shortfall[s].push_back(lp.add_variable(0.0, 0.0, lp::infinity, "short[" + tag(i, t) + sfx));
            }
    }
    L.theta = lp.add_variable(1.0, -lp::infinity, lp::infinity, "theta");

    // Storage energy bookkeeping.
    for (std::size_t i = 0; i < c.num_idc(); ++i)
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<Term> row{{L.ess_energy[c.index(i, t)], 1.0}};
            for (std::size_t u = 0; u <= t; ++u) row.push_back({L.ess_power[c.index(i, u)], -dt});
            lp.add_row(row, Relation::equal, c.idcs[i].ess.initial_energy_kwh, "ess_energy[" + tag(i, t) + "]");
        }

    // Robust discharge limit against the lowest interactive load in the box.
    for (std::size_t i = 0; i < c.num_idc(); ++i)
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t k = c.index(i, t);
            if (c.idcs[i].ess.max_power_kw == 0.0) continue;
            const double pue = c.idcs[i].pue[t];
            std::vector<Term> row{{L.ess_power[k], 1.0}};
            double flex = 0.0;
            for (std::size_t w = 0; w < c.workloads.size(); ++w) {
                if (host[w] != i || c.workloads[w].it_power_kw[t] == 0.0) continue;
                row.push_back({L.terminate[w], -pue * c.workloads[w].it_power_kw[t]});
                flex += c.workloads[w].it_power_kw[t];
            }
            lp.add_row(row, Relation::greater_equal, -pue * (c.uncertainty.load.lower[k] + flex),
                       "ess_discharge[" + tag(i, t) + "]");
        }

    for (std::size_t s = 0; s < S; ++s) {
        const auto& z = scenarios[s];
        const std::string sfx = "," + std::to_string(s) + "]";
        std::vector<Term> epi{{L.theta, 1.0}};
        for (std::size_t i = 0; i < c.num_idc(); ++i)
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t k = c.index(i, t);
                const double pue = c.idcs[i].pue[t];
                // P + shortfall - P^ESS - curtail + PUE sum P^fl v = PUE (P^in + sum P^fl) - P^G
                std::vector<Term> bal{{L.grid[s][k], 1.0},
                                      {L.shortfall[s][k], 1.0},
                                      {L.ess_power[k], -1.0},
                                      {L.curtail[s][k], -1.0}};
                double flex = 0.0;
                for (std::size_t w = 0; w < c.workloads.size(); ++w) {
                    if (host[w] != i || c.workloads[w].it_power_kw[t] == 0.0) continue;
                    bal.push_back({L.terminate[w], pue * c.workloads[w].it_power_kw[t]});
                    flex += c.workloads[w].it_power_kw[t];
                }
                lp.add_row(bal, Relation::equal, pue * (z.load[k] + flex) - z.dg[k], "balance[" + tag(i, t) + sfx);
                lp.add_row({{L.grid[s][k], 1.0}, {L.dr[s][k], 1.0}}, Relation::less_equal,
                           c.idcs[i].nominal_power_kw[t], "capacity[" + tag(i, t) + sfx);
                epi.push_back({L.grid[s][k], -dt * z.price[k]});
                epi.push_back({L.dr[s][k], dt * dr_price[k]});
                epi.push_back({L.shortfall[s][k], -dt * c.shortfall_penalty});
            }
        lp.add_row(epi, Relation::greater_equal, 0.0, "epigraph[" + std::to_string(s) + "]");
    }
    return out;
}

} // namespace idcdr
