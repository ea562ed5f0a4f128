#pragma once

// Dense two-phase simplex and a depth-first branch-and-bound for programs
// with a handful of binary variables. Sized for tens to a few hundred
// variables; everything is dense.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace idcdr::lp {

inline constexpr double infinity = std::numeric_limits<double>::infinity();

enum class Relation { less_equal, equal, greater_equal };

enum class Status { optimal, infeasible, unbounded };

inline const char* to_string(Status s) {
    switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    }
    return "?";
}

// Every tolerance used by the solvers lives here.
struct LpConfig {
    double feasibility_tol = 1e-7;  // constraint residual accepted at an optimum
    double optimality_tol = 1e-9;   // reduced-cost threshold for entering columns
    double pivot_tol = 1e-9;        // smallest usable pivot magnitude
    double bound_tol = 1e-9;        // snapping distance onto variable bounds
    double integrality_tol = 1e-6;  // binary treated as integral within this
    double gap_tol = 1e-6;          // absolute best-bound pruning gap
    std::size_t degenerate_streak = 50;  // switch to Bland's rule after this many
    std::size_t max_pivots = 100000;
    std::size_t max_binaries = 32;
    std::size_t max_nodes = 1u << 20;
};

struct Constraint {
    std::vector<double> coeffs;
    Relation relation = Relation::less_equal;
    double rhs = 0.0;
    std::string name;
};

struct Term {
    std::size_t var;
    double coeff;
};

// minimize objective . x  s.t. constraints, lower <= x <= upper.
struct LinearProgram {
    std::vector<double> objective;
    std::vector<Constraint> constraints;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<std::string> names;

    std::size_t num_vars() const noexcept { return objective.size(); }

    std::size_t add_variable(double cost, double lo, double hi, std::string name = {}) {
        objective.push_back(cost);
        lower.push_back(lo);
        upper.push_back(hi);
        names.push_back(std::move(name));
        return objective.size() - 1;
    }

    // Sparse convenience; the stored row is dense over the current variables.
    void add_row(std::initializer_list<Term> terms, Relation rel, double rhs, std::string name = {}) {
        add_row(std::vector<Term>(terms), rel, rhs, std::move(name));
    }
    void add_row(const std::vector<Term>& terms, Relation rel, double rhs, std::string name = {}) {
        Constraint c;
        c.coeffs.assign(num_vars(), 0.0);
        for (const auto& t : terms) {
            if (t.var >= num_vars()) throw InputError("add_row: variable index out of range");
            c.coeffs[t.var] += t.coeff;
        }
        c.relation = rel;
        c.rhs = rhs;
        c.name = std::move(name);
        constraints.push_back(std::move(c));
    }

    void validate() const {
        const std::size_t n = num_vars();
        if (lower.size() != n || upper.size() != n)
            throw InputError("linear program: bound vectors do not match objective length");
        for (std::size_t j = 0; j < n; ++j) {
            if (std::isnan(objective[j]) || std::isnan(lower[j]) || std::isnan(upper[j]))
                throw InputError("linear program: NaN in variable " + std::to_string(j));
            if (lower[j] > upper[j])
                throw InputError("linear program: lower > upper for variable " + std::to_string(j));
            if (lower[j] == infinity || upper[j] == -infinity)
                throw InputError("linear program: empty bound range for variable " + std::to_string(j));
        }
        for (std::size_t i = 0; i < constraints.size(); ++i) {
            const auto& c = constraints[i];
            if (c.coeffs.size() != n)
                throw InputError("linear program: row " + std::to_string(i) + " has " +
                                 std::to_string(c.coeffs.size()) + " coefficients, expected " +
                                 std::to_string(n));
            if (!std::isfinite(c.rhs)) throw InputError("linear program: non-finite rhs in row " + std::to_string(i));
        }
    }
};

struct MixedBinaryProgram {
    LinearProgram lp;
    std::vector<std::size_t> binaries;

    void validate() const {
        lp.validate();
        for (std::size_t b : binaries) {
            if (b >= lp.num_vars()) throw InputError("mixed-binary program: binary index out of range");
            if (lp.lower[b] < 0.0 || lp.upper[b] > 1.0)
                throw InputError("mixed-binary program: binary variable bounds outside [0,1]");
        }
    }
};

struct LpSolution {
    Status status = Status::infeasible;
    std::vector<double> values;
    double objective = 0.0;
    std::size_t pivots = 0;
    std::size_t nodes = 0;     // branch-and-bound nodes solved
    std::size_t branches = 0;  // branching decisions taken

    bool optimal() const noexcept { return status == Status::optimal; }
};

// Largest constraint violation and bound violation of x in prog.
struct Residuals {
    double constraint = 0.0;
    double bound = 0.0;
};

inline Residuals residuals(const LinearProgram& prog, const std::vector<double>& x) {
    Residuals r;
    for (const auto& c : prog.constraints) {
        double lhs = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) lhs += c.coeffs[j] * x[j];
        double v = 0.0;
        switch (c.relation) {
        case Relation::less_equal: v = lhs - c.rhs; break;
        case Relation::greater_equal: v = c.rhs - lhs; break;
        case Relation::equal: v = std::abs(lhs - c.rhs); break;
        }
        r.constraint = std::max(r.constraint, v);
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        r.bound = std::max(r.bound, prog.lower[j] - x[j]);
        r.bound = std::max(r.bound, x[j] - prog.upper[j]);
    }
    return r;
}

namespace detail {

// x_orig = offset + sign * y[col] - y[neg_col]
struct ColumnMap {
    double offset = 0.0;
    double sign = 1.0;
    int col = -1;
    int neg_col = -1;
};

class Simplex {
public:
    Simplex(const LinearProgram& prog, const std::vector<double>& lo, const std::vector<double>& hi,
            const LpConfig& cfg)
        : prog_(prog), cfg_(cfg) {
        build(lo, hi);
    }

    LpSolution run() {
        LpSolution sol;
        if (trivially_infeasible_) {
            sol.status = Status::infeasible;
            return sol;
        }
        if (m_ > 0) {
            // Phase 1: minimize the sum of artificials.
            std::vector<double> cost(ncols_, 0.0);
            for (int j = nstruct_; j < ncols_; ++j)
                if (is_artificial(j)) cost[static_cast<std::size_t>(j)] = 1.0;
            set_costs(cost);
            if (iterate(false) == Status::unbounded) throw SolverError("simplex: phase 1 reported unbounded");
            const double scale = 1.0 + max_abs_rhs_;
            if (-obj_row_value() > cfg_.feasibility_tol * scale) {
                sol.status = Status::infeasible;
                sol.pivots = pivots_;
                return sol;
            }
            drive_out_artificials();
        }
        std::vector<double> cost(ncols_, 0.0);
        for (int j = 0; j < nstruct_; ++j) cost[static_cast<std::size_t>(j)] = cstd_[static_cast<std::size_t>(j)];
        set_costs(cost);
        if (iterate(true) == Status::unbounded) {
            sol.status = Status::unbounded;
            sol.pivots = pivots_;
            return sol;
        }
        sol.status = Status::optimal;
        sol.values = extract();
        sol.pivots = pivots_;
        return sol;
    }

private:
    const LinearProgram& prog_;
    const LpConfig& cfg_;

    std::vector<ColumnMap> map_;
    int nstruct_ = 0;  // structural columns (y)
    int ncols_ = 0;    // structural + slack + artificial
    int first_art_ = 0;
    int m_ = 0;
    std::vector<double> cstd_;  // phase-2 cost on structural columns
    std::vector<double> A_;     // original standard-form matrix, m x ncols (without artificials used)
    std::vector<double> b_;
    std::vector<double> T_;     // tableau, (m+1) x (ncols+1); last row is the objective row
    std::vector<int> basis_;
    std::vector<bool> row_alive_;
    std::size_t pivots_ = 0;
    double max_abs_rhs_ = 0.0;
    bool trivially_infeasible_ = false;

    int stride() const { return ncols_ + 1; }
    double& t(int r, int c) { return T_[static_cast<std::size_t>(r * stride() + c)]; }
    double& rhs(int r) { return t(r, ncols_); }
    double obj_row_value() { return t(m_, ncols_); }
    bool is_artificial(int j) const { return j >= first_art_; }

    void build(const std::vector<double>& lo, const std::vector<double>& hi) {
        const std::size_t n = prog_.num_vars();
        map_.resize(n);
        struct BoundRow {
            int col;
            double ub;
        };
        std::vector<BoundRow> bound_rows;
        for (std::size_t j = 0; j < n; ++j) {
            auto& mj = map_[j];
            const double l = lo[j], u = hi[j];
            if (std::isfinite(l) && l == u) {
                mj.offset = l;
                continue;
            }
            if (std::isfinite(l)) {
                mj.offset = l;
                mj.col = nstruct_++;
                if (std::isfinite(u)) bound_rows.push_back({mj.col, u - l});
            } else if (std::isfinite(u)) {
                mj.offset = u;
                mj.sign = -1.0;
                mj.col = nstruct_++;
            } else {
                mj.col = nstruct_++;
                mj.neg_col = nstruct_++;
            }
        }
        cstd_.assign(static_cast<std::size_t>(nstruct_), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const auto& mj = map_[j];
            if (mj.col >= 0) cstd_[static_cast<std::size_t>(mj.col)] += prog_.objective[j] * mj.sign;
            if (mj.neg_col >= 0) cstd_[static_cast<std::size_t>(mj.neg_col)] -= prog_.objective[j];
        }

        // Rows: structural coefficients, slack sign (0 for equality), rhs.
        struct Row {
            std::vector<double> a;
            double slack;
            double rhs;
        };
        std::vector<Row> rows;
        rows.reserve(prog_.constraints.size() + bound_rows.size());
        for (const auto& c : prog_.constraints) {
            Row r{std::vector<double>(static_cast<std::size_t>(nstruct_), 0.0), 0.0, c.rhs};
            bool any = false;
            for (std::size_t j = 0; j < n; ++j) {
                const double a = c.coeffs[j];
                if (a == 0.0) continue;
                const auto& mj = map_[j];
                r.rhs -= a * mj.offset;
                if (mj.col >= 0) {
                    r.a[static_cast<std::size_t>(mj.col)] += a * mj.sign;
                    any = true;
                }
                if (mj.neg_col >= 0) r.a[static_cast<std::size_t>(mj.neg_col)] -= a;
            }
            r.slack = c.relation == Relation::less_equal ? 1.0 : c.relation == Relation::greater_equal ? -1.0 : 0.0;
            if (!any) {
                // Row over fixed variables only: check it directly.
                const double tol = cfg_.feasibility_tol * (1.0 + std::abs(c.rhs));
                const bool ok = c.relation == Relation::less_equal      ? r.rhs >= -tol
                                : c.relation == Relation::greater_equal ? r.rhs <= tol
                                                                        : std::abs(r.rhs) <= tol;
                if (!ok) trivially_infeasible_ = true;
                continue;
            }
            rows.push_back(std::move(r));
        }
        for (const auto& br : bound_rows) {
            Row r{std::vector<double>(static_cast<std::size_t>(nstruct_), 0.0), 1.0, br.ub};
            r.a[static_cast<std::size_t>(br.col)] = 1.0;
            rows.push_back(std::move(r));
        }
        m_ = static_cast<int>(rows.size());

        int nslack = 0;
        for (auto& r : rows) {
            if (r.slack != 0.0) ++nslack;
            if (r.rhs < 0.0) {
                for (auto& a : r.a) a = -a;
                r.slack = -r.slack;
                r.rhs = -r.rhs;
            }
        }
        int nart = 0;
        for (const auto& r : rows)
            if (r.slack != 1.0) ++nart;
        first_art_ = nstruct_ + nslack;
        ncols_ = first_art_ + nart;

        A_.assign(static_cast<std::size_t>(m_) * static_cast<std::size_t>(ncols_), 0.0);
        b_.assign(static_cast<std::size_t>(m_), 0.0);
        T_.assign(static_cast<std::size_t>(m_ + 1) * static_cast<std::size_t>(stride()), 0.0);
        basis_.assign(static_cast<std::size_t>(m_), -1);
        row_alive_.assign(static_cast<std::size_t>(m_), true);
        int slack_col = nstruct_, art_col = first_art_;
        for (int i = 0; i < m_; ++i) {
            const auto& r = rows[static_cast<std::size_t>(i)];
            auto a = [&](int c) -> double& { return A_[static_cast<std::size_t>(i * ncols_ + c)]; };
            for (int j = 0; j < nstruct_; ++j) a(j) = r.a[static_cast<std::size_t>(j)];
            if (r.slack != 0.0) {
                a(slack_col) = r.slack;
                if (r.slack == 1.0) basis_[static_cast<std::size_t>(i)] = slack_col;
                ++slack_col;
            }
            if (r.slack != 1.0) {
                a(art_col) = 1.0;
                basis_[static_cast<std::size_t>(i)] = art_col;
                ++art_col;
            }
            b_[static_cast<std::size_t>(i)] = r.rhs;
            max_abs_rhs_ = std::max(max_abs_rhs_, std::abs(r.rhs));
            for (int c = 0; c < ncols_; ++c) t(i, c) = a(c);
            rhs(i) = r.rhs;
        }
    }

    void set_costs(const std::vector<double>& cost) {
        for (int c = 0; c <= ncols_; ++c) t(m_, c) = c < ncols_ ? cost[static_cast<std::size_t>(c)] : 0.0;
        for (int i = 0; i < m_; ++i) {
            if (!row_alive_[static_cast<std::size_t>(i)]) continue;
            const double cb = cost[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])];
            if (cb == 0.0) continue;
            for (int c = 0; c <= ncols_; ++c) t(m_, c) -= cb * t(i, c);
        }
    }

    void pivot(int r, int c) {
        const int w = stride();
        double* pr = &T_[static_cast<std::size_t>(r * w)];
        const double inv = 1.0 / pr[c];
        for (int k = 0; k < w; ++k) pr[k] *= inv;
        pr[c] = 1.0;
        for (int i = 0; i <= m_; ++i) {
            if (i == r) continue;
            double* pi = &T_[static_cast<std::size_t>(i * w)];
            const double f = pi[c];
            if (f == 0.0) continue;
            for (int k = 0; k < w; ++k) pi[k] -= f * pr[k];
            pi[c] = 0.0;
        }
        basis_[static_cast<std::size_t>(r)] = c;
        ++pivots_;
        if (pivots_ > cfg_.max_pivots) throw SolverError("simplex: pivot limit exceeded");
    }

    Status iterate(bool bar_artificials) {
        std::size_t streak = 0;
        bool bland = false;
        for (;;) {
            int enter = -1;
            double best = -cfg_.optimality_tol;
            for (int c = 0; c < ncols_; ++c) {
                if (bar_artificials && is_artificial(c)) continue;
                const double d = t(m_, c);
                if (d < best) {
                    enter = c;
                    if (bland) break;
                    best = d;
                }
            }
            if (enter < 0) return Status::optimal;

            int leave = -1;
            double min_ratio = infinity, leave_piv = 0.0;
            for (int i = 0; i < m_; ++i) {
                if (!row_alive_[static_cast<std::size_t>(i)]) continue;
                const double a = t(i, enter);
                if (a <= cfg_.pivot_tol) continue;
                const double ratio = std::max(0.0, rhs(i)) / a;
                if (leave < 0 || ratio < min_ratio - 1e-12) {
                    leave = i;
                    min_ratio = ratio;
                    leave_piv = a;
                } else if (ratio <= min_ratio + 1e-12) {
                    const bool take = bland ? basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]
                                            : a > leave_piv;
                    if (take) {
                        leave = i;
                        min_ratio = std::min(min_ratio, ratio);
                        leave_piv = a;
                    }
                }
            }
            if (leave < 0) return Status::unbounded;
            if (min_ratio <= 1e-12) {
                if (++streak >= cfg_.degenerate_streak) bland = true;
            } else {
                streak = 0;
                bland = false;
            }
            pivot(leave, enter);
        }
    }

    void drive_out_artificials() {
        for (int i = 0; i < m_; ++i) {
            if (!is_artificial(basis_[static_cast<std::size_t>(i)])) continue;
            int best_c = -1;
            double best_a = cfg_.pivot_tol;
            for (int c = 0; c < first_art_; ++c) {
                const double a = std::abs(t(i, c));
                if (a > best_a) {
                    best_a = a;
                    best_c = c;
                }
            }
            if (best_c >= 0) {
                pivot(i, best_c);
            } else {
                row_alive_[static_cast<std::size_t>(i)] = false;  // redundant row
            }
        }
    }

    std::vector<double> extract() {
        std::vector<double> y(static_cast<std::size_t>(ncols_), 0.0);
        std::vector<int> rows, cols;
        for (int i = 0; i < m_; ++i) {
            if (!row_alive_[static_cast<std::size_t>(i)]) continue;
            rows.push_back(i);
            cols.push_back(basis_[static_cast<std::size_t>(i)]);
            y[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] = std::max(0.0, rhs(i));
        }
        // Recompute the basic solution from the original data to shed tableau round-off.
        const int k = static_cast<int>(rows.size());
        if (k > 0) {
            Eigen::MatrixXd B(k, k);
            Eigen::VectorXd rb(k);
            for (int r = 0; r < k; ++r) {
                for (int c = 0; c < k; ++c)
                    B(r, c) = A_[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)] * ncols_ +
                                                          cols[static_cast<std::size_t>(c)])];
                rb(r) = b_[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])];
            }
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
            const Eigen::VectorXd xb = lu.solve(rb);
            const double err = (B * xb - rb).lpNorm<Eigen::Infinity>();
            bool usable = xb.allFinite() && err <= 1e-10 * (1.0 + max_abs_rhs_);
            for (int r = 0; r < k && usable; ++r)
                if (xb(r) < -cfg_.feasibility_tol) usable = false;
            if (usable)
                for (int r = 0; r < k; ++r) y[static_cast<std::size_t>(cols[static_cast<std::size_t>(r)])] = std::max(0.0, xb(r));
        }
        std::vector<double> x(map_.size());
        for (std::size_t j = 0; j < map_.size(); ++j) {
            const auto& mj = map_[j];
            double v = mj.offset;
            if (mj.col >= 0) v += mj.sign * y[static_cast<std::size_t>(mj.col)];
            if (mj.neg_col >= 0) v -= y[static_cast<std::size_t>(mj.neg_col)];
            x[j] = v;
        }
        return x;
    }
};

inline LpSolution solve_bounded(const LinearProgram& prog, const std::vector<double>& lo,
                                const std::vector<double>& hi, const LpConfig& cfg) {
    Simplex s(prog, lo, hi, cfg);
    LpSolution sol = s.run();
    if (!sol.optimal()) return sol;
    for (std::size_t j = 0; j < sol.values.size(); ++j) {
        double& v = sol.values[j];
        if (v < lo[j]) {
            if (lo[j] - v > 1e3 * cfg.bound_tol * (1.0 + std::abs(lo[j])))
                throw SolverError("simplex: bound violation after solve");
            v = lo[j];
        }
        if (v > hi[j]) {
            if (v - hi[j] > 1e3 * cfg.bound_tol * (1.0 + std::abs(hi[j])))
                throw SolverError("simplex: bound violation after solve");
            v = hi[j];
        }
    }
    double obj = 0.0;
    for (std::size_t j = 0; j < sol.values.size(); ++j) obj += prog.objective[j] * sol.values[j];
    sol.objective = obj;
    return sol;
}

} // namespace detail

inline LpSolution solve_lp(const LinearProgram& prog, const LpConfig& cfg = {}) {
    prog.validate();
    LpSolution sol = detail::solve_bounded(prog, prog.lower, prog.upper, cfg);
    if (sol.optimal()) {
        double scale = 1.0;
        for (const auto& c : prog.constraints) scale = std::max(scale, std::abs(c.rhs));
        if (residuals(prog, sol.values).constraint > cfg.feasibility_tol * scale)
            throw SolverError("simplex: residual above tolerance at reported optimum");
    }
    return sol;
}

// Depth-first branch-and-bound; branches on the most fractional binary
// (lowest index on ties), nearest-rounding child first.
inline LpSolution solve_milp(const MixedBinaryProgram& prog, const LpConfig& cfg = {}) {
    prog.validate();
    if (prog.binaries.size() > cfg.max_binaries)
        throw CapacityError("solve_milp: " + std::to_string(prog.binaries.size()) + " binaries exceeds limit of " +
                            std::to_string(cfg.max_binaries));
    const auto& lp = prog.lp;

    struct Node {
        std::vector<double> lo, hi;
    };
    std::vector<Node> stack;
    {
        Node root{lp.lower, lp.upper};
        for (std::size_t b : prog.binaries) {
            root.lo[b] = std::ceil(root.lo[b] - cfg.integrality_tol);
            root.hi[b] = std::floor(root.hi[b] + cfg.integrality_tol);
            if (root.lo[b] > root.hi[b]) {
                LpSolution none;
                none.status = Status::infeasible;
                return none;
            }
        }
        stack.push_back(std::move(root));
    }

    LpSolution best;
    best.status = Status::infeasible;
    double best_obj = infinity;
    std::size_t nodes = 0, branches = 0, pivots = 0;

    while (!stack.empty()) {
        Node node = std::move(stack.back());
        stack.pop_back();
        if (++nodes > cfg.max_nodes) throw SolverError("solve_milp: node limit exceeded");
        LpSolution rel = detail::solve_bounded(lp, node.lo, node.hi, cfg);
        pivots += rel.pivots;
        if (rel.status == Status::infeasible) continue;
        if (rel.status == Status::unbounded) {
            rel.nodes = nodes;
            rel.branches = branches;
            return rel;
        }
        if (rel.objective >= best_obj - cfg.gap_tol) continue;

        std::optional<std::size_t> branch_var;
        double best_frac = cfg.integrality_tol;
        for (std::size_t b : prog.binaries) {
            const double x = rel.values[b];
            const double frac = std::min(x - std::floor(x), std::ceil(x) - x);
            if (frac > best_frac) {
                best_frac = frac;
                branch_var = b;
            }
        }
        if (!branch_var) {
            // Integral within tolerance: fix exactly and re-solve for a clean point.
            Node fixed = node;
            for (std::size_t b : prog.binaries) fixed.lo[b] = fixed.hi[b] = std::round(rel.values[b]);
            LpSolution clean = detail::solve_bounded(lp, fixed.lo, fixed.hi, cfg);
            pivots += clean.pivots;
            if (clean.optimal() && clean.objective < best_obj) {
                best_obj = clean.objective;
                best = std::move(clean);
            }
            continue;
        }
        ++branches;
        const std::size_t b = *branch_var;
        Node down = node, up = std::move(node);
        down.hi[b] = 0.0;
        up.lo[b] = 1.0;
        if (rel.values[b] >= 0.5) {
            stack.push_back(std::move(down));
            stack.push_back(std::move(up));
        } else {
            stack.push_back(std::move(up));
            stack.push_back(std::move(down));
        }
    }
    best.nodes = nodes;
    best.branches = branches;
    best.pivots = pivots;
    if (best.optimal()) {
        double scale = 1.0;
        for (const auto& c : lp.constraints) scale = std::max(scale, std::abs(c.rhs));
        if (residuals(lp, best.values).constraint > cfg.feasibility_tol * scale)
            throw SolverError("solve_milp: residual above tolerance at incumbent");
    }
    return best;
}

// Human-readable listing for troubleshooting; not a stable format.
inline std::string to_lp_string(const MixedBinaryProgram& prog) {
    const auto& lp = prog.lp;
    auto name = [&](std::size_t j) {
        return j < lp.names.size() && !lp.names[j].empty() ? lp.names[j] : "x" + std::to_string(j);
    };
    auto linear = [&](const std::vector<double>& a) {
        std::ostringstream os;
        bool first = true;
        for (std::size_t j = 0; j < a.size(); ++j) {
            if (a[j] == 0.0) continue;
            os << (first ? (a[j] < 0 ? "-" : "") : (a[j] < 0 ? " - " : " + "));
            if (std::abs(a[j]) != 1.0) os << std::abs(a[j]) << ' ';
            os << name(j);
            first = false;
        }
        if (first) os << '0';
        return os.str();
    };
    std::ostringstream os;
    os.precision(12);
    os << "minimize\n  obj: " << linear(lp.objective) << "\nsubject to\n";
    for (std::size_t i = 0; i < lp.constraints.size(); ++i) {
        const auto& c = lp.constraints[i];
        const char* rel = c.relation == Relation::less_equal ? "<=" : c.relation == Relation::equal ? "=" : ">=";
        os << "  " << (c.name.empty() ? "c" + std::to_string(i) : c.name) << ": " << linear(c.coeffs) << ' ' << rel
           << ' ' << c.rhs << '\n';
    }
    os << "bounds\n";
    for (std::size_t j = 0; j < lp.num_vars(); ++j) os << "  " << lp.lower[j] << " <= " << name(j) << " <= " << lp.upper[j] << '\n';
    if (!prog.binaries.empty()) {
        os << "binary\n ";
        for (std::size_t b : prog.binaries) os << ' ' << name(b);
        os << '\n';
    }
    os << "end\n";
    return os.str();
}

inline std::string to_lp_string(const LinearProgram& prog) { return to_lp_string(MixedBinaryProgram{prog, {}}); }

} // namespace idcdr::lp
