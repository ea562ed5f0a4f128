#pragma once

// Realization drawing, candidate price lattice, uncertainty-driven selection
// of price points, and dataset generation.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "case.hpp"
#include "errors.hpp"
#include "gpr.hpp"
#include "hash.hpp"
#include "parallel.hpp"
#include "robust_opt.hpp"

namespace idcdr {

using PricePoint = std::vector<double>;

// ---------------------------------------------------------------------------
// Realizations

// Standard deviation of entry k (slot t, zero based) of a quantity.
inline double horizon_sd(const QuantityModel& q, std::size_t k, std::size_t t) {
    return q.nominal[k] * q.sigma0[k] * (1.0 + q.rho[k] * static_cast<double>(t));
}

inline ScenarioRealization draw_realization(const UncertaintyModel& model, const TimeGrid& grid, std::uint64_t seed) {
    grid.validate();
    const std::size_t dim = model.price.nominal.size();
    if (dim % grid.slots != 0) throw InputError("draw_realization: vector length is not a multiple of the slot count");
    for (Quantity qk : {Quantity::electricity_price, Quantity::dg_output, Quantity::interactive_load}) {
        const auto& q = model.get(qk);
        for (const auto* v : {&q.nominal, &q.sigma0, &q.rho, &q.lower, &q.upper})
            if (v->size() != dim) throw InputError("draw_realization: inconsistent vector lengths");
        for (std::size_t k = 0; k < dim; ++k)
            if (q.lower[k] > q.upper[k])
                throw InputError(std::string("draw_realization: empty box for ") + to_string(qk));
    }
    std::mt19937_64 rng(seed);
    ScenarioRealization z;
    for (Quantity qk : {Quantity::electricity_price, Quantity::dg_output, Quantity::interactive_load}) {
        const auto& q = model.get(qk);
        auto& out = z.get(qk);
        out.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            const double sd = horizon_sd(q, k, k % grid.slots);
            if (!(sd > 0.0)) {
                out[k] = std::clamp(q.nominal[k], q.lower[k], q.upper[k]);
                continue;
            }
            std::normal_distribution<double> n(q.nominal[k], sd);
            double x = n(rng);
            for (int attempt = 1; attempt < 100 && (x < q.lower[k] || x > q.upper[k]); ++attempt) x = n(rng);
            out[k] = std::clamp(x, q.lower[k], q.upper[k]);
        }
    }
    return z;
}

inline ScenarioRealization draw_realization(const IdcCase& c, std::uint64_t seed) {
    return draw_realization(c.uncertainty, c.grid, seed);
}

// ---------------------------------------------------------------------------
// Candidate lattice

struct CandidateGridSpec {
    std::size_t levels = 5;   // per dimension, endpoints included
    std::size_t cap = 4096;   // larger lattices are subsampled

    void validate() const {
        if (levels < 2) throw InputError("candidate grid: at least 2 levels per dimension required");
        if (cap < 1) throw InputError("candidate grid: cap must be >= 1");
    }
};

// Uniform lattice over [lower, upper]. Points are listed in lexicographic
// lattice order (first coordinate slowest); when the lattice exceeds the cap a
// seeded subset of distinct points is kept in that same order.
inline std::vector<PricePoint> candidate_lattice(std::span<const double> lower, std::span<const double> upper,
                                                 const CandidateGridSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (lower.size() != upper.size() || lower.empty()) throw InputError("candidate grid: bad price box");
    const std::size_t d = lower.size();
    auto point = [&](const std::vector<std::size_t>& digits) {
        PricePoint p(d);
        for (std::size_t j = 0; j < d; ++j)
            p[j] = lower[j] + (upper[j] - lower[j]) * static_cast<double>(digits[j]) / static_cast<double>(spec.levels - 1);
        return p;
    };
    // Lattice size, saturating.
    std::size_t total = 1;
    bool big = false;
    for (std::size_t j = 0; j < d && !big; ++j) {
        if (total > std::numeric_limits<std::size_t>::max() / spec.levels) big = true;
        else total *= spec.levels;
    }
    std::vector<PricePoint> out;
    if (!big && total <= spec.cap) {
        std::vector<std::size_t> digits(d, 0);
        for (std::size_t n = 0; n < total; ++n) {
            out.push_back(point(digits));
            for (std::size_t j = d; j-- > 0;) {
                if (++digits[j] < spec.levels) break;
                digits[j] = 0;
            }
        }
        return out;
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> lvl(0, spec.levels - 1);
    std::set<std::vector<std::size_t>> chosen;
    while (chosen.size() < spec.cap) {
        std::vector<std::size_t> digits(d);
        for (auto& x : digits) x = lvl(rng);
        chosen.insert(std::move(digits));
    }
    for (const auto& digits : chosen) out.push_back(point(digits));
    return out;
}

inline std::vector<PricePoint> candidate_lattice(const IdcCase& c, const CandidateGridSpec& spec, std::uint64_t seed) {
    return candidate_lattice(c.dr_price_lower, c.dr_price_upper, spec, seed);
}

// ---------------------------------------------------------------------------
// Acquisition

inline Eigen::MatrixXd to_matrix(std::span<const PricePoint> points) {
    const std::size_t d = points.empty() ? 0 : points[0].size();
    Eigen::MatrixXd X(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != d) throw InputError("price points have inconsistent lengths");
        for (std::size_t j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i][j];
    }
    return X;
}

// Index of the candidate maximizing sum over outputs of beta*mean + sqrt(var).
inline std::size_t select_candidate(std::span<const gpr::GprModel> models, std::span<const PricePoint> candidates,
                                    double beta = 0.0) {
    if (candidates.empty()) throw InputError("next_price_point: no candidates");
    if (models.empty()) throw InputError("next_price_point: no models");
    if (!(beta >= 0.0)) throw InputError("next_price_point: beta must be >= 0");
    for (const auto& m : models)
        if (m.size() != models[0].size() || m.dim() != models[0].dim() || m.inputs() != models[0].inputs())
            throw InputError("next_price_point: models must share the same training inputs");
    if (models[0].size() == 0) return 0;
    const Eigen::MatrixXd Q = to_matrix(candidates);
    Eigen::VectorXd score = Eigen::VectorXd::Zero(Q.rows());
    for (const auto& m : models) {
        const auto [mean, var] = m.predict(Q);
        score += beta * mean + var.cwiseSqrt();
    }
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < score.size(); ++i)
        if (score(i) > score(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
    return best;
}

inline PricePoint next_price_point(std::span<const gpr::GprModel> models, std::span<const PricePoint> candidates,
                                   double beta = 0.0) {
    return candidates[select_candidate(models, candidates, beta)];
}

// Kernel that drives price selection during generation. Inputs are scaled to
// the unit box before the kernel is applied.
struct DesignKernel {
    double length_scale = 0.5;
    double noise = 1e-6;  // relative to the unit signal variance

    gpr::KernelSpec spec() const {
        gpr::KernelSpec s;
        s.family = gpr::KernelFamily::squared_exponential;
        s.signal_variance = 1.0;
        s.length_scales = {length_scale};
        return s;
    }
};

inline std::vector<PricePoint> to_unit_box(std::span<const PricePoint> points, std::span<const double> lower,
                                           std::span<const double> upper) {
    std::vector<PricePoint> out(points.begin(), points.end());
    for (auto& p : out) {
        if (p.size() != lower.size()) throw InputError("price point length does not match the price box");
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double w = upper[j] - lower[j];
            p[j] = w > 0.0 ? (p[j] - lower[j]) / w : 0.0;
        }
    }
    return out;
}

// Greedy posterior-variance selection with a fixed kernel. Selecting a point
// and refitting is done incrementally: a pivoted Cholesky of the candidate
// covariance, one column per selected point. Returns candidate indices in
// selection order; the result is the same sequence as calling
// select_candidate with beta = 0 after each refit.
inline std::vector<std::size_t> select_design(std::span<const PricePoint> unit_candidates, std::size_t m,
                                              const DesignKernel& kern) {
    if (unit_candidates.empty()) throw InputError("select_design: no candidates");
    const Eigen::MatrixXd Z = to_matrix(unit_candidates);
    const Eigen::Index C = Z.rows();
    const gpr::KernelSpec spec = kern.spec();
    Eigen::VectorXd resid(C);
    for (Eigen::Index c = 0; c < C; ++c) {
        const Eigen::VectorXd z = Z.row(c).transpose();
        resid(c) = gpr::kernel_eval(spec, std::span<const double>(z.data(), z.size()),
                                    std::span<const double>(z.data(), z.size()));
    }
    Eigen::MatrixXd L(C, static_cast<Eigen::Index>(m));
    std::vector<std::size_t> picks;
    picks.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        std::size_t p = 0;
        if (j > 0)
            for (Eigen::Index c = 1; c < C; ++c)
                if (std::max(resid(c), 0.0) > std::max(resid(static_cast<Eigen::Index>(p)), 0.0))
                    p = static_cast<std::size_t>(c);
        picks.push_back(p);
        const auto pi = static_cast<Eigen::Index>(p);
        const auto J = static_cast<Eigen::Index>(j);
        Eigen::VectorXd col = gpr::gram(spec, Z, Z.row(pi));
        if (J > 0) col.noalias() -= L.leftCols(J) * L.row(pi).head(J).transpose();
        col /= std::sqrt(std::max(resid(pi), 0.0) + kern.noise);
        L.col(J) = col;
        resid -= col.cwiseAbs2();
    }
    return picks;
}

// ---------------------------------------------------------------------------
// Sample sets

struct SampleSet {
    std::vector<std::string> input_labels;   // one per (idc, t)
    std::vector<std::string> output_labels;
    std::vector<PricePoint> prices;
    std::vector<std::vector<double>> amounts;
    std::vector<std::uint64_t> seeds;
    std::uint64_t master_seed = 0;
    std::string case_digest;

    std::size_t size() const noexcept { return prices.size(); }
    std::size_t input_dim() const noexcept { return input_labels.size(); }
    std::size_t output_dim() const noexcept { return output_labels.size(); }

    Eigen::MatrixXd inputs() const { return to_matrix(prices); }
    Eigen::MatrixXd outputs() const { return to_matrix(amounts); }

    void validate() const {
        if (prices.size() != amounts.size() || prices.size() != seeds.size())
            throw InputError("sample set: column groups have different lengths");
        for (std::size_t i = 0; i < size(); ++i)
            if (prices[i].size() != input_dim() || amounts[i].size() != output_dim())
                throw InputError("sample set: row " + std::to_string(i) + " has the wrong number of columns");
    }

    std::uint64_t sample_digest(std::size_t i) const {
        Fnv1a h;
        h.f64s(prices[i]).f64s(amounts[i]).u64(seeds[i]);
        return h.value();
    }

    std::uint64_t digest() const {
        Fnv1a h;
        h.u64(size()).u64(input_dim()).u64(output_dim());
        for (const auto& s : input_labels) h.str(s).u64(0);
        for (const auto& s : output_labels) h.str(s).u64(0);
        for (std::size_t i = 0; i < size(); ++i) h.u64(sample_digest(i));
        return h.value();
    }
};

inline std::vector<std::string> slot_labels(const IdcCase& c, std::string_view prefix) {
    std::vector<std::string> out;
    for (const auto& idc : c.idcs)
        for (std::size_t t = 0; t < c.num_slots(); ++t)
            out.push_back(std::string(prefix) + "_" + idc.id + "_t" + std::to_string(t + 1));
    return out;
}

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
        throw InputError(where + ": not a number: '" + std::string(s) + "'");
    return v;
}

inline std::string to_csv(const SampleSet& set) {
    set.validate();
    std::string out;
    for (const auto& l : set.input_labels) out += l + ",";
    for (const auto& l : set.output_labels) out += l + ",";
    out += "seed\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (double v : set.prices[i]) out += format_double(v) + ",";
        for (double v : set.amounts[i]) out += format_double(v) + ",";
        out += std::to_string(set.seeds[i]) + "\n";
    }
    return out;
}

// Parses a sample CSV. Price columns are the ones before the first column
// whose name starts with "amount"; the last column is the seed.
inline SampleSet parse_csv(std::string_view text) {
    SampleSet set;
    std::istringstream in{std::string(text)};
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> f;
        std::size_t start = 0;
        for (;;) {
            const auto pos = s.find(',', start);
            f.push_back(s.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return f;
    };
    if (!std::getline(in, line)) throw InputError("samples csv line 1: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line);
    if (header.size() < 3 || header.back() != "seed") throw InputError("samples csv line 1: last column must be 'seed'");
    std::size_t n_in = 0;
    while (n_in + 1 < header.size() && !header[n_in].starts_with("amount")) ++n_in;
    const std::size_t n_out = header.size() - 1 - n_in;
    if (n_in == 0 || n_out == 0) throw InputError("samples csv line 1: expected price columns then amount columns");
    for (std::size_t j = 0; j < n_in; ++j) {
        if (!header[j].starts_with("price")) throw InputError("samples csv line 1: unexpected column '" + header[j] + "'");
        set.input_labels.push_back(header[j]);
    }
    for (std::size_t j = n_in; j < n_in + n_out; ++j) set.output_labels.push_back(header[j]);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split(line);
        const std::string where = "samples csv line " + std::to_string(lineno);
        if (f.size() != header.size())
            throw InputError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                             std::to_string(f.size()));
        PricePoint p(n_in);
        std::vector<double> a(n_out);
        for (std::size_t j = 0; j < n_in; ++j) p[j] = parse_double(f[j], where);
        for (std::size_t j = 0; j < n_out; ++j) a[j] = parse_double(f[n_in + j], where);
        std::uint64_t seed = 0;
        const auto& s = f.back();
        const auto r = std::from_chars(s.data(), s.data() + s.size(), seed);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw InputError(where + ": bad seed '" + s + "'");
        set.prices.push_back(std::move(p));
        set.amounts.push_back(std::move(a));
        set.seeds.push_back(seed);
    }
    return set;
}

// ---------------------------------------------------------------------------
// Generation

struct GenerateOptions {
    std::size_t samples = 100;
    CandidateGridSpec grid;
    DesignKernel design;
    FirstStageOptions first;
    SecondStageMethod second = SecondStageMethod::lp;
    std::size_t workers = 1;
};

inline nlohmann::ordered_json to_json(const GenerateOptions& o) {
    return {{"samples", o.samples},
            {"grid_levels", o.grid.levels},
            {"grid_cap", o.grid.cap},
            {"design_length_scale", o.design.length_scale},
            {"design_noise", o.design.noise},
            {"scenario_budget", o.first.scenario_budget},
            {"prune_dominated", o.first.prune_dominated},
            {"second_stage", o.second == SecondStageMethod::lp ? "lp" : "closed_form"}};
}

// Everything computed for one sample.
struct SampleRecord {
    FirstStagePlan plan;
    ScenarioRealization realization;
    SecondStageDecision second;
};

inline SampleRecord generate_sample(const IdcCase& c, std::span<const double> price, std::uint64_t sample_seed,
                                    const GenerateOptions& opt = {}) {
    SampleRecord r;
    r.plan = solve_first_stage(c, price, opt.first, derive_seed(sample_seed, 1));
    r.realization = draw_realization(c, derive_seed(sample_seed, 2));
    r.second = solve_second_stage(c, r.plan.decision, r.realization, price, opt.second, opt.first.lp);
    return r;
}

// Price points for a dataset: greedy uncertainty selection over the lattice.
inline std::vector<PricePoint> design_prices(const IdcCase& c, const GenerateOptions& opt, std::uint64_t seed) {
    const auto candidates = candidate_lattice(c, opt.grid, derive_seed(seed, 0xca9d1da7e5ULL));
    const auto unit = to_unit_box(candidates, c.dr_price_lower, c.dr_price_upper);
    const auto picks = select_design(unit, opt.samples, opt.design);
    std::vector<PricePoint> out;
    out.reserve(picks.size());
    for (std::size_t p : picks) out.push_back(candidates[p]);
    return out;
}

// The price sequence depends only on the lattice and the design kernel, so it
// is computed up front; samples are then solved in parallel, each from its
// own seed, and stored by index.
inline SampleSet generate_dataset(const IdcCase& c, const GenerateOptions& opt, std::uint64_t seed) {
    c.validate();
    if (opt.samples < 1) throw InputError("generate_dataset: sample count must be >= 1");
    SampleSet set;
    set.input_labels = slot_labels(c, "price");
    set.output_labels = slot_labels(c, "amount");
    set.master_seed = seed;
    set.case_digest = hex_digest(case_digest(c));
    set.prices = design_prices(c, opt, seed);
    set.amounts.resize(opt.samples);
    set.seeds.resize(opt.samples);
    for (std::size_t i = 0; i < opt.samples; ++i) set.seeds[i] = derive_seed(seed, i);
    parallel_for(opt.samples, opt.workers, [&](std::size_t i) {
        try {
            set.amounts[i] = generate_sample(c, set.prices[i], set.seeds[i], opt).second.dr_amount_kw;
        } catch (const SampleError&) {
            throw;
        } catch (const Error& e) {
            throw SampleError(i, e.what());
        }
    });
    return set;
}

inline nlohmann::ordered_json manifest(const SampleSet& set, const GenerateOptions& opt) {
    return {{"kind", "sample_set"},
            {"case_digest", set.case_digest},
            {"master_seed", set.master_seed},
            {"samples", set.size()},
            {"inputs", set.input_labels},
            {"outputs", set.output_labels},
            {"data_digest", hex_digest(set.digest())},
            {"options", to_json(opt)}};
}

} // namespace idcdr
