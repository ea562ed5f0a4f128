#pragma once

// Exact Gaussian process regression with a zero (or empirical-mean) prior:
//
//   mean(x) = m0 + k(x, X) (K + s2 I)^-1 (y - m0)
//   var(x)  = k(x, x) + s2 - k(x, X) (K + s2 I)^-1 k(X, x)
//
// K + s2 I is factored once by Cholesky; predictions reuse the factor.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "errors.hpp"
#include "hash.hpp"

namespace idcdr::gpr {

enum class KernelFamily { squared_exponential, exponential, matern32, matern52, rational_quadratic, linear };

inline constexpr KernelFamily all_families[] = {KernelFamily::squared_exponential, KernelFamily::exponential,
                                                KernelFamily::matern32,            KernelFamily::matern52,
                                                KernelFamily::rational_quadratic,  KernelFamily::linear};

inline const char* to_string(KernelFamily f) {
    switch (f) {
    case KernelFamily::squared_exponential: return "se";
    case KernelFamily::exponential: return "exponential";
    case KernelFamily::matern32: return "matern32";
    case KernelFamily::matern52: return "matern52";
    case KernelFamily::rational_quadratic: return "rq";
    case KernelFamily::linear: return "linear";
    }
    return "?";
}

inline KernelFamily parse_family(std::string_view name) {
    for (KernelFamily f : all_families)
        if (name == to_string(f)) return f;
    if (name == "squared_exponential" || name == "rbf") return KernelFamily::squared_exponential;
    if (name == "rational_quadratic") return KernelFamily::rational_quadratic;
    throw InputError("unknown kernel family '" + std::string(name) +
                     "' (expected se, exponential, matern32, matern52, rq, linear)");
}

inline bool is_stationary(KernelFamily f) { return f != KernelFamily::linear; }

struct KernelSpec {
    KernelFamily family = KernelFamily::squared_exponential;
    double signal_variance = 1.0;
    std::vector<double> length_scales{1.0};  // one shared scale, or one per input dimension
    double alpha = 1.0;                      // rational quadratic shape
    double offset = 0.0;                     // linear kernel offset

    void validate() const {
        if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
            throw InputError("kernel: signal variance must be > 0");
        if (length_scales.empty()) throw InputError("kernel: at least one length scale required");
        for (double l : length_scales)
            if (!(l > 0.0) || !std::isfinite(l)) throw InputError("kernel: length scales must be > 0");
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("kernel: alpha must be > 0");
        if (!std::isfinite(offset)) throw InputError("kernel: offset must be finite");
    }

    bool operator==(const KernelSpec&) const = default;
};

namespace detail {

inline double scaled_sq_dist(const KernelSpec& s, const double* a, const double* b, std::size_t d) {
    double r2 = 0.0;
    if (s.length_scales.size() == 1) {
        for (std::size_t i = 0; i < d; ++i) r2 += (a[i] - b[i]) * (a[i] - b[i]);
        return r2 / (s.length_scales[0] * s.length_scales[0]);
    }
    for (std::size_t i = 0; i < d; ++i) {
        const double z = (a[i] - b[i]) / s.length_scales[i];
        r2 += z * z;
    }
    return r2;
}

inline double eval(const KernelSpec& s, const double* a, const double* b, std::size_t d) {
    const double sf2 = s.signal_variance;
    switch (s.family) {
    case KernelFamily::squared_exponential: return sf2 * std::exp(-0.5 * scaled_sq_dist(s, a, b, d));
    case KernelFamily::exponential: return sf2 * std::exp(-std::sqrt(scaled_sq_dist(s, a, b, d)));
    case KernelFamily::matern32: {
        const double r = std::sqrt(3.0 * scaled_sq_dist(s, a, b, d));
        return sf2 * (1.0 + r) * std::exp(-r);
    }
    case KernelFamily::matern52: {
        const double r2 = scaled_sq_dist(s, a, b, d);
        const double r = std::sqrt(5.0 * r2);
        return sf2 * (1.0 + r + 5.0 * r2 / 3.0) * std::exp(-r);
    }
    case KernelFamily::rational_quadratic:
        return sf2 * std::pow(1.0 + scaled_sq_dist(s, a, b, d) / (2.0 * s.alpha), -s.alpha);
    case KernelFamily::linear: {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += (a[i] - s.offset) * (b[i] - s.offset);
        return sf2 * dot;
    }
    }
    return 0.0;
}

inline void check_dims(const KernelSpec& s, std::size_t d) {
    if (s.length_scales.size() != 1 && s.length_scales.size() != d)
        throw InputError("kernel: length-scale count does not match input dimension");
}

} // namespace detail

inline double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> x2) {
    if (x.size() != x2.size()) throw InputError("kernel_eval: input dimension mismatch");
    detail::check_dims(spec, x.size());
    return detail::eval(spec, x.data(), x2.data(), x.size());
}

// Gram matrix between the rows of A and the rows of B.
inline Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    if (A.cols() != B.cols()) throw InputError("gram: input dimension mismatch");
    const auto d = static_cast<std::size_t>(A.cols());
    detail::check_dims(spec, d);
    // Row-major copies keep each point contiguous.
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMat a = A, b = B;
    Eigen::MatrixXd K(A.rows(), B.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) K(i, j) = detail::eval(spec, a.row(i).data(), b.row(j).data(), d);
    return K;
}

// Diagonal jitter escalation used when K + s2 I fails to factor.
struct JitterPolicy {
    bool enabled = true;
    double initial_relative = 1e-10;  // times the mean diagonal
    int max_doublings = 8;

    static JitterPolicy none() { return {false, 0.0, 0}; }
};

struct FitOptions {
    bool center_outputs = false;  // prior mean = empirical mean of y
    JitterPolicy jitter;
};

class GprModel {
public:
    static GprModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelSpec& spec, double noise,
                        const FitOptions& opt = {}) {
        spec.validate();
        if (X.rows() != y.size()) throw InputError("gpr fit: number of inputs and outputs differ");
        if (!(noise >= 0.0) || !std::isfinite(noise)) throw InputError("gpr fit: noise variance must be >= 0");
        if (X.cols() < 1) throw InputError("gpr fit: input dimension must be >= 1");
        if (!X.allFinite() || !y.allFinite()) throw InputError("gpr fit: non-finite training data");
        detail::check_dims(spec, static_cast<std::size_t>(X.cols()));

        GprModel m;
        m.spec_ = spec;
        m.noise_ = noise;
        m.X_ = X;
        m.y_ = y;
        const auto n = y.size();
        if (n > 0) {
            const double mean = y.mean();
            const double var = (y.array() - mean).square().sum() / static_cast<double>(n);
            if (opt.center_outputs) m.offset_ = mean;
            m.scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        if (n == 0) return m;

        Eigen::MatrixXd K = gram(spec, X, X);
        K.diagonal().array() += noise;
        const double mean_diag = K.diagonal().mean();
        double jitter = 0.0;
        int attempt = 0;
        for (;;) {
            Eigen::MatrixXd Kj = K;
            Kj.diagonal().array() += jitter;
            Eigen::LLT<Eigen::MatrixXd> llt(Kj);
            if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0) {
                m.L_ = llt.matrixL();
                break;
            }
            if (!opt.jitter.enabled || attempt > opt.jitter.max_doublings)
                throw ConditioningError(jitter, "gpr fit: covariance not positive definite (final jitter " +
                                                    std::to_string(jitter) + ")");
            jitter = attempt == 0 ? opt.jitter.initial_relative * std::max(mean_diag, 1e-300) : 2.0 * jitter;
            ++attempt;
        }
        m.jitter_ = jitter;
        const Eigen::VectorXd r = y.array() - m.offset_;
        m.weights_ = m.L_.triangularView<Eigen::Lower>().solve(r);
        m.L_.triangularView<Eigen::Lower>().transpose().solveInPlace(m.weights_);
        return m;
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(y_.size()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(X_.cols()); }
    const KernelSpec& kernel() const noexcept { return spec_; }
    double noise() const noexcept { return noise_; }
    double jitter() const noexcept { return jitter_; }
    double output_offset() const noexcept { return offset_; }
    double output_scale() const noexcept { return scale_; }
    const Eigen::MatrixXd& inputs() const noexcept { return X_; }
    const Eigen::VectorXd& outputs() const noexcept { return y_; }
    const Eigen::MatrixXd& factor() const noexcept { return L_; }
    const Eigen::VectorXd& weights() const noexcept { return weights_; }

    double predict_mean(std::span<const double> x) const {
        const Eigen::VectorXd k = cross(x);
        return offset_ + (size() == 0 ? 0.0 : k.dot(weights_));
    }

    double predict_var(std::span<const double> x) const {
        const Eigen::VectorXd k = cross(x);
        const double prior = detail::eval(spec_, x.data(), x.data(), x.size()) + noise_;
        if (size() == 0) return std::max(0.0, prior);
        const Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(k);
        return std::max(0.0, prior - v.squaredNorm());
    }

    // Mean and variance at every row of Q.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> predict(const Eigen::MatrixXd& Q) const {
        if (static_cast<std::size_t>(Q.cols()) != dim()) throw InputError("gpr predict: input dimension mismatch");
        Eigen::VectorXd mean = Eigen::VectorXd::Constant(Q.rows(), offset_);
        Eigen::VectorXd var(Q.rows());
        using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        const RowMat q = Q;
        for (Eigen::Index i = 0; i < Q.rows(); ++i)
            var(i) = detail::eval(spec_, q.row(i).data(), q.row(i).data(), dim()) + noise_;
        if (size() > 0) {
            const Eigen::MatrixXd Kxq = gram(spec_, X_, Q);  // m x n
            mean.noalias() += Kxq.transpose() * weights_;
            const Eigen::MatrixXd V = L_.triangularView<Eigen::Lower>().solve(Kxq);
            var -= V.colwise().squaredNorm().transpose();
        }
        var = var.cwiseMax(0.0);
        return {mean, var};
    }

    double log_marginal_likelihood() const {
        if (size() == 0) throw InputError("log_marginal_likelihood: model has no training data");
        const Eigen::VectorXd r = y_.array() - offset_;
        const double fit = r.dot(weights_);
        const double logdet = 2.0 * L_.diagonal().array().log().sum();
        return -0.5 * fit - 0.5 * logdet - 0.5 * static_cast<double>(size()) * std::log(2.0 * std::numbers::pi);
    }

    // Digest of the training data (inputs then outputs, bitwise).
    std::uint64_t data_digest() const {
        Fnv1a h;
        h.u64(static_cast<std::uint64_t>(X_.rows())).u64(static_cast<std::uint64_t>(X_.cols()));
        for (Eigen::Index i = 0; i < X_.rows(); ++i)
            for (Eigen::Index j = 0; j < X_.cols(); ++j) h.f64(X_(i, j));
        for (Eigen::Index i = 0; i < y_.size(); ++i) h.f64(y_(i));
        return h.value();
    }

private:
    KernelSpec spec_;
    double noise_ = 0.0;
    double jitter_ = 0.0;
    double offset_ = 0.0;
    double scale_ = 1.0;
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd L_;
    Eigen::VectorXd weights_;

    Eigen::VectorXd cross(std::span<const double> x) const {
        if (x.size() != dim()) throw InputError("gpr predict: input dimension mismatch");
        Eigen::VectorXd k(X_.rows());
        for (Eigen::Index i = 0; i < X_.rows(); ++i) {
            const Eigen::VectorXd row = X_.row(i).transpose();
            k(i) = detail::eval(spec_, row.data(), x.data(), x.size());
        }
        return k;
    }
};

// ---------------------------------------------------------------------------
// Hyperparameter search

struct HyperOptions {
    bool per_dimension = false;     // one length scale per input dimension
    std::size_t starts = 3;         // seeded random starts, plus one centred start
    std::size_t max_evals = 150;    // per start
    std::size_t subsample = 200;    // search runs on at most this many points
};

struct HyperFit {
    KernelSpec spec;
    double noise = 0.0;
    double log_likelihood = 0.0;  // on the search subsample
};

namespace detail {

// Nelder-Mead on a box [0,1]^n; points outside are clamped and penalized.
template <class F>
std::pair<std::vector<double>, double> nelder_mead(F&& f, std::vector<double> x0, double step, std::size_t max_evals) {
    const std::size_t n = x0.size();
    auto clamped = [&](std::vector<double> x) {
        double pen = 0.0;
        for (double& v : x) {
            const double c = std::clamp(v, 0.0, 1.0);
            pen += (v - c) * (v - c);
            v = c;
        }
        const double fx = f(x);
        return std::isfinite(fx) ? fx + 1e3 * pen : std::numeric_limits<double>::infinity();
    };
    std::vector<std::vector<double>> simplex{x0};
    for (std::size_t i = 0; i < n; ++i) {
        auto x = x0;
        x[i] += x[i] + step <= 1.0 ? step : -step;
        simplex.push_back(std::move(x));
    }
    std::vector<double> fv;
    std::size_t evals = 0;
    for (const auto& x : simplex) {
        fv.push_back(clamped(x));
        ++evals;
    }
    std::vector<std::size_t> order(n + 1);
    while (evals < max_evals) {
        for (std::size_t i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order[0], worst = order[n], second = order[n - 1];
        double spread = 0.0;
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t k = 0; k < n; ++k) spread = std::max(spread, std::abs(simplex[order[i]][k] - simplex[best][k]));
        if (std::isfinite(fv[worst]) && std::abs(fv[worst] - fv[best]) < 1e-7 * (1.0 + std::abs(fv[best])) &&
            spread < 1e-4)
            break;
        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[order[i]][k] / static_cast<double>(n);
        auto along = [&](double t) {
            std::vector<double> x(n);
            for (std::size_t k = 0; k < n; ++k) x[k] = centroid[k] + t * (simplex[worst][k] - centroid[k]);
            return x;
        };
        auto xr = along(-1.0);
        const double fr = clamped(xr);
        ++evals;
        if (fr < fv[best]) {
            auto xe = along(-2.0);
            const double fe = clamped(xe);
            ++evals;
            if (fe < fr) {
                simplex[worst] = std::move(xe);
                fv[worst] = fe;
            } else {
                simplex[worst] = std::move(xr);
                fv[worst] = fr;
            }
        } else if (fr < fv[second]) {
            simplex[worst] = std::move(xr);
            fv[worst] = fr;
        } else {
            const bool outside = fr < fv[worst];
            auto xc = along(outside ? -0.5 : 0.5);
            const double fc = clamped(xc);
            ++evals;
            if (fc < std::min(fr, fv[worst])) {
                simplex[worst] = std::move(xc);
                fv[worst] = fc;
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    auto& x = simplex[order[i]];
                    for (std::size_t k = 0; k < n; ++k) x[k] = simplex[best][k] + 0.5 * (x[k] - simplex[best][k]);
                    fv[order[i]] = clamped(x);
                    ++evals;
                }
            }
        }
    }
    const auto it = std::min_element(fv.begin(), fv.end());
    auto x = simplex[static_cast<std::size_t>(it - fv.begin())];
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
    return {x, *it};
}

struct Range {
    double lo, hi;  // in the search coordinate (log for scales, linear for the offset)
    bool log;
    double at(double z) const {
        const double v = lo + z * (hi - lo);
        return log ? std::exp(v) : v;
    }
};

} // namespace detail

// Maximizes the log marginal likelihood over the family's hyperparameters.
// Search box (relative to the output variance v and the input range r):
// signal variance in [1e-4, 1e4] v, length scales in [0.01, 100] r, noise in
// [1e-8, 1] v, rational-quadratic alpha in [0.05, 50], linear offset within
// five ranges of the data. The prior mean is the empirical mean of y.
inline HyperFit fit_hyperparameters(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, KernelFamily family,
                                    std::uint64_t seed, const HyperOptions& opt = {}) {
    if (X.rows() != y.size()) throw InputError("fit_hyperparameters: number of inputs and outputs differ");
    if (y.size() < 2) throw InputError("fit_hyperparameters: at least two samples required");
    const auto m = static_cast<std::size_t>(y.size());
    const auto d = static_cast<std::size_t>(X.cols());

    // Seeded subsample for the search.
    Eigen::MatrixXd Xs = X;
    Eigen::VectorXd ys = y;
    if (m > opt.subsample && opt.subsample >= 2) {
        std::vector<std::size_t> idx(m);
        for (std::size_t i = 0; i < m; ++i) idx[i] = i;
        std::mt19937_64 rng(derive_seed(seed, 0x5b5a));
        for (std::size_t i = 0; i < opt.subsample; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, m - 1);
            std::swap(idx[i], idx[pick(rng)]);
        }
        std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(opt.subsample));
        Xs.resize(static_cast<Eigen::Index>(opt.subsample), X.cols());
        ys.resize(static_cast<Eigen::Index>(opt.subsample));
        for (std::size_t i = 0; i < opt.subsample; ++i) {
            Xs.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
            ys(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(idx[i]));
        }
    }

    const double mean = y.mean();
    double vy = (y.array() - mean).square().mean();
    if (!(vy > 0.0)) vy = 1.0;
    std::vector<double> span(d);
    double range = 0.0, xmin = X.minCoeff(), xmax = X.maxCoeff();
    for (std::size_t j = 0; j < d; ++j) {
        span[j] = X.col(static_cast<Eigen::Index>(j)).maxCoeff() - X.col(static_cast<Eigen::Index>(j)).minCoeff();
        if (!(span[j] > 0.0)) span[j] = 1.0;
        range = std::max(range, span[j]);
    }

    const bool linear = family == KernelFamily::linear;
    const bool rq = family == KernelFamily::rational_quadratic;
    const std::size_t nls = linear ? 0 : (opt.per_dimension ? d : 1);
    std::vector<detail::Range> box;
    if (linear) {
        // Linear kernel variance is per squared input unit.
        const double base = vy / (range * range * static_cast<double>(d));
        box.push_back({std::log(1e-4 * base), std::log(1e4 * base), true});
    } else {
        box.push_back({std::log(1e-4 * vy), std::log(1e4 * vy), true});
    }
    for (std::size_t j = 0; j < nls; ++j) {
        const double r = opt.per_dimension ? span[j] : range;
        box.push_back({std::log(0.01 * r), std::log(100.0 * r), true});
    }
    box.push_back({std::log(1e-8 * vy), std::log(vy), true});
    if (rq) box.push_back({std::log(0.05), std::log(50.0), true});
    if (linear) box.push_back({xmin - 5.0 * range, xmax + 5.0 * range, false});

    auto decode = [&](const std::vector<double>& z) {
        HyperFit h;
        h.spec.family = family;
        std::size_t i = 0;
        h.spec.signal_variance = box[i].at(z[i]);
        ++i;
        if (linear) {
            h.spec.length_scales = {1.0};
        } else {
            h.spec.length_scales.clear();
            for (std::size_t j = 0; j < nls; ++j, ++i) h.spec.length_scales.push_back(box[i].at(z[i]));
        }
        h.noise = box[i].at(z[i]);
        ++i;
        if (rq) h.spec.alpha = box[i].at(z[i]);
        if (linear) h.spec.offset = box[i].at(z[i]);
        return h;
    };
    FitOptions fo;
    fo.center_outputs = true;
    fo.jitter = JitterPolicy::none();
    auto objective = [&](const std::vector<double>& z) {
        const HyperFit h = decode(z);
        try {
            return -GprModel::fit(Xs, ys, h.spec, h.noise, fo).log_marginal_likelihood();
        } catch (const ConditioningError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    std::vector<std::vector<double>> starts;
    {
        // Centred start: signal = v, length = 0.3 r (log-midpoint region), noise = 1e-2 v, offset = data minimum.
        std::vector<double> z(box.size());
        for (std::size_t i = 0; i < box.size(); ++i) z[i] = 0.5;
        if (!linear)
            for (std::size_t j = 0; j < nls; ++j) z[1 + j] = (std::log(0.3) - std::log(0.01)) / (std::log(100.0) - std::log(0.01));
        z[1 + nls] = (std::log(1e-2) - std::log(1e-8)) / (0.0 - std::log(1e-8));
        if (linear) z.back() = (xmin - box.back().lo) / (box.back().hi - box.back().lo);
        starts.push_back(std::move(z));
    }
    std::mt19937_64 rng(derive_seed(seed, 0x57a7));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 0; s < opt.starts; ++s) {
        std::vector<double> z(box.size());
        for (double& v : z) v = unit(rng);
        starts.push_back(std::move(z));
    }

    std::optional<HyperFit> best;
    double best_f = std::numeric_limits<double>::infinity();
    for (const auto& z0 : starts) {
        auto [z, f] = detail::nelder_mead(objective, z0, 0.1, opt.max_evals);
        if (std::isfinite(f) && f < best_f) {
            best_f = f;
            best = decode(z);
            best->log_likelihood = -f;
        }
    }
    if (!best) throw ConditioningError(0.0, "fit_hyperparameters: every start failed to factor the covariance");
    return *best;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const KernelSpec& s) {
    return {{"family", to_string(s.family)},
            {"signal_variance", s.signal_variance},
            {"length_scales", s.length_scales},
            {"alpha", s.alpha},
            {"offset", s.offset}};
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
    KernelSpec s;
    s.family = parse_family(j.at("family").get<std::string>());
    s.signal_variance = j.at("signal_variance").get<double>();
    s.length_scales = j.at("length_scales").get<std::vector<double>>();
    s.alpha = j.at("alpha").get<double>();
    s.offset = j.at("offset").get<double>();
    s.validate();
    return s;
}

} // namespace idcdr::gpr
