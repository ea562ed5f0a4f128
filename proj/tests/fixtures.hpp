#pragma once

#include <string>
#include <vector>

#include <idcdr/case.hpp>

namespace fixture {

// One or more identical data centers with flat forecasts and a symmetric
// relative box of half-width `box` around every nominal value.
inline idcdr::IdcCase flat_case(std::size_t idcs, std::size_t slots, double box = 0.0) {
    idcdr::IdcCase c;
    c.grid = {slots, 0.25};
    for (std::size_t i = 0; i < idcs; ++i) {
        idcdr::IdcParams p;
        p.id = "dc" + std::to_string(i + 1);
        p.pue.assign(slots, 1.5);
        p.nominal_power_kw.assign(slots, 400.0);
        p.interactive_it_kw.assign(slots, 100.0);
        p.dg_output_kw.assign(slots, 30.0);
        p.electricity_price.assign(slots, 0.1);
        c.idcs.push_back(p);
    }
    idcdr::sync_nominal(c);
    for (auto* q : {&c.uncertainty.price, &c.uncertainty.dg, &c.uncertainty.load}) {
        q->sigma0.assign(c.dim(), 0.05);
        q->rho.assign(c.dim(), 0.0);
        q->lower.resize(c.dim());
        q->upper.resize(c.dim());
        for (std::size_t k = 0; k < c.dim(); ++k) {
            q->lower[k] = q->nominal[k] * (1.0 - box);
            q->upper[k] = q->nominal[k] * (1.0 + box);
        }
    }
    c.dr_price_lower.assign(c.dim(), 0.0);
    c.dr_price_upper.assign(c.dim(), 0.5);
    c.shortfall_penalty = 10.0;
    return c;
}

inline idcdr::FlexibleWorkload workload(std::string id, std::string host, std::vector<double> power, double price) {
    return {std::move(id), std::move(host), std::move(power), price};
}

} // namespace fixture
