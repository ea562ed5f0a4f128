#pragma once

// Price-amount curve: one GP per output over the shared price inputs, plus
// queries with 95% bands, slices for plotting, error metrics and splits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "errors.hpp"
#include "gpr.hpp"
#include "hash.hpp"
#include "parallel.hpp"
#include "sampling.hpp"
#include "tree.hpp"

namespace idcdr {

inline constexpr double band_z = 1.96;

struct CurveModel {
    gpr::KernelFamily family = gpr::KernelFamily::squared_exponential;
    std::uint64_t seed = 0;
    std::vector<std::string> input_labels;
    std::vector<std::string> output_labels;
    std::vector<gpr::GprModel> models;  // one per output
    std::string training_digest;        // SampleSet digest of the training data
    std::vector<std::uint64_t> training_samples;  // per-sample digests

    std::size_t input_dim() const noexcept { return input_labels.size(); }
    std::size_t output_dim() const noexcept { return output_labels.size(); }

    bool trained_on(std::uint64_t sample_digest) const {
        return std::binary_search(training_samples.begin(), training_samples.end(), sample_digest);
    }
};

struct CurveOptions {
    gpr::HyperOptions hyper;
    std::size_t workers = 1;
};

inline CurveModel fit_curve(const SampleSet& samples, gpr::KernelFamily family, std::uint64_t seed,
                            const CurveOptions& opt = {}) {
    samples.validate();
    if (samples.size() < 4) throw InputError("fit_curve: at least 4 samples required");
    CurveModel cm;
    cm.family = family;
    cm.seed = seed;
    cm.input_labels = samples.input_labels;
    cm.output_labels = samples.output_labels;
    cm.training_digest = hex_digest(samples.digest());
    for (std::size_t i = 0; i < samples.size(); ++i) cm.training_samples.push_back(samples.sample_digest(i));
    std::sort(cm.training_samples.begin(), cm.training_samples.end());
    const Eigen::MatrixXd X = samples.inputs();
    const Eigen::MatrixXd Y = samples.outputs();
    std::vector<std::optional<gpr::GprModel>> fitted(samples.output_dim());
    parallel_for(samples.output_dim(), opt.workers, [&](std::size_t j) {
        const Eigen::VectorXd y = Y.col(static_cast<Eigen::Index>(j));
        try {
            const auto h = gpr::fit_hyperparameters(X, y, family, derive_seed(seed, j), opt.hyper);
            gpr::FitOptions fo;
            fo.center_outputs = true;
            fitted[j] = gpr::GprModel::fit(X, y, h.spec, h.noise, fo);
        } catch (const ConditioningError& e) {
            throw ConditioningError(e.final_jitter(), "output " + std::to_string(j) + " (" +
                                                          samples.output_labels[j] + "): " + e.what());
        }
    });
    for (auto& m : fitted) cm.models.push_back(std::move(*m));
    return cm;
}

struct CurveQueryResult {
    std::vector<double> mean;
    std::vector<double> variance;
    std::vector<double> lower;
    std::vector<double> upper;
};

inline CurveQueryResult query_curve(const CurveModel& m, std::span<const double> p) {
    if (p.size() != m.input_dim())
        throw InputError("query: price vector has " + std::to_string(p.size()) + " entries, expected " +
                         std::to_string(m.input_dim()));
    CurveQueryResult r;
    for (const auto& g : m.models) {
        const double mu = g.predict_mean(p), var = g.predict_var(p), half = band_z * std::sqrt(var);
        r.mean.push_back(mu);
        r.variance.push_back(var);
        r.lower.push_back(mu - half);
        r.upper.push_back(mu + half);
    }
    return r;
}

// Means and variances at many points: rows of P, columns = outputs.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> query_batch(const CurveModel& m, const Eigen::MatrixXd& P) {
    if (static_cast<std::size_t>(P.cols()) != m.input_dim()) throw InputError("query: input dimension mismatch");
    Eigen::MatrixXd mean(P.rows(), static_cast<Eigen::Index>(m.output_dim()));
    Eigen::MatrixXd var(P.rows(), static_cast<Eigen::Index>(m.output_dim()));
    for (std::size_t j = 0; j < m.models.size(); ++j) {
        auto [mu, v] = m.models[j].predict(P);
        mean.col(static_cast<Eigen::Index>(j)) = mu;
        var.col(static_cast<Eigen::Index>(j)) = v;
    }
    return {mean, var};
}

// ---------------------------------------------------------------------------
// Metrics

inline constexpr const char* error_metric_definition =
    "100 * sqrt(sum over samples and outputs of (predicted - actual)^2) / "
    "sqrt(sum over samples and outputs of actual^2)";

// Normalized RMS error in percent; nullopt for an empty set.
inline std::optional<double> error_pct(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& actual) {
    if (predicted.rows() != actual.rows() || predicted.cols() != actual.cols())
        throw InputError("error metric: prediction and target shapes differ");
    if (actual.size() == 0) return std::nullopt;
    const double denom = actual.norm();
    if (denom == 0.0) return predicted.norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return 100.0 * (predicted - actual).norm() / denom;
}

struct ErrorMetrics {
    std::optional<double> within_pct;
    std::optional<double> out_pct;
    std::size_t within_count = 0;
    std::size_t out_count = 0;
};

// Splits eval_set by membership in the model's training samples, then
// applies `predict` (rows of prices -> rows of amounts) to each part.
template <class Predict>
ErrorMetrics error_metrics_with(const CurveModel& m, const SampleSet& eval_set, Predict&& predict) {
    eval_set.validate();
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < eval_set.size(); ++i)
        (m.trained_on(eval_set.sample_digest(i)) ? in : out).push_back(i);
    auto part = [&](const std::vector<std::size_t>& rows) -> std::optional<double> {
        if (rows.empty()) return std::nullopt;
        Eigen::MatrixXd P(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(eval_set.input_dim()));
        Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(eval_set.output_dim()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t j = 0; j < eval_set.input_dim(); ++j)
                P(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = eval_set.prices[rows[r]][j];
            for (std::size_t j = 0; j < eval_set.output_dim(); ++j)
                A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = eval_set.amounts[rows[r]][j];
        }
        return error_pct(predict(P), A);
    };
    ErrorMetrics e;
    e.within_pct = part(in);
    e.out_pct = part(out);
    e.within_count = in.size();
    e.out_count = out.size();
    return e;
}

inline ErrorMetrics error_metrics(const CurveModel& m, const SampleSet& eval_set) {
    if (eval_set.input_dim() != m.input_dim() || eval_set.output_dim() != m.output_dim())
        throw InputError("error metrics: sample set does not match the model dimensions");
    return error_metrics_with(m, eval_set, [&](const Eigen::MatrixXd& P) { return query_batch(m, P).first; });
}

// Seeded split into a training part (fraction `train`) and a held-out part.
// Both keep the original sample order.
inline std::pair<SampleSet, SampleSet> split_samples(const SampleSet& s, double train, std::uint64_t seed) {
    s.validate();
    if (!(train > 0.0 && train < 1.0)) throw InputError("split: training fraction must lie in (0, 1)");
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, 0x5911));
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(rng)]);
    }
    const auto n_train = static_cast<std::size_t>(std::llround(train * static_cast<double>(s.size())));
    std::vector<char> in_train(s.size(), 0);
    for (std::size_t k = 0; k < n_train; ++k) in_train[idx[k]] = 1;
    SampleSet a, b;
    for (auto* part : {&a, &b}) {
        part->input_labels = s.input_labels;
        part->output_labels = s.output_labels;
        part->master_seed = s.master_seed;
        part->case_digest = s.case_digest;
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        SampleSet& dst = in_train[i] ? a : b;
        dst.prices.push_back(s.prices[i]);
        dst.amounts.push_back(s.amounts[i]);
        dst.seeds.push_back(s.seeds[i]);
    }
    return {a, b};
}

// Fraction of held-out (sample, output) values inside the 95% band.
inline double band_coverage(const CurveModel& m, const SampleSet& eval_set) {
    const auto [mean, var] = query_batch(m, eval_set.inputs());
    const Eigen::MatrixXd A = eval_set.outputs();
    std::size_t inside = 0;
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            const double half = band_z * std::sqrt(var(i, j));
            if (A(i, j) >= mean(i, j) - half && A(i, j) <= mean(i, j) + half) ++inside;
        }
    return A.size() ? static_cast<double>(inside) / static_cast<double>(A.size()) : 0.0;
}

// ---------------------------------------------------------------------------
// Slices

struct SliceSpec {
    std::vector<std::size_t> free_dims;                   // 1 or 2 input indices
    std::vector<std::pair<std::size_t, double>> fixed;    // explicit values for other inputs
    std::size_t points = 21;                              // per free dimension
    std::optional<std::pair<double, double>> range;       // free range; default = training range
};

struct SliceRow {
    std::vector<double> free_values;
    CurveQueryResult result;
    double total_mean = 0.0, total_lower = 0.0, total_upper = 0.0;
};

struct Slice {
    std::vector<std::size_t> free_dims;
    PricePoint base;  // values of every input; free entries overwritten per row
    std::vector<SliceRow> rows;
};

// Inputs that are neither free nor fixed take the midpoint of the training range.
inline Slice slice_curve(const CurveModel& m, const SliceSpec& spec) {
    const std::size_t d = m.input_dim();
    if (spec.free_dims.empty() || spec.free_dims.size() > 2)
        throw InputError("slice: one or two free dimensions required");
    if (spec.points < 1) throw InputError("slice: at least one grid point required");
    std::set<std::size_t> free(spec.free_dims.begin(), spec.free_dims.end());
    if (free.size() != spec.free_dims.size()) throw InputError("slice: free dimensions repeat");
    for (std::size_t f : free)
        if (f >= d) throw InputError("slice: free dimension out of range");
    std::set<std::size_t> fixed_seen;
    for (const auto& [k, v] : spec.fixed) {
        if (k >= d) throw InputError("slice: fixed dimension out of range");
        if (free.count(k)) throw InputError("slice: dimension " + m.input_labels[k] + " is both fixed and free");
        if (!fixed_seen.insert(k).second) throw InputError("slice: dimension fixed twice");
        if (!std::isfinite(v)) throw InputError("slice: fixed value must be finite");
    }
    if (m.models.empty() || m.models[0].size() == 0) throw InputError("slice: model has no training data");
    const Eigen::MatrixXd& X = m.models[0].inputs();
    Slice s;
    s.free_dims = spec.free_dims;
    s.base.resize(d);
    for (std::size_t k = 0; k < d; ++k)
        s.base[k] = 0.5 * (X.col(static_cast<Eigen::Index>(k)).minCoeff() + X.col(static_cast<Eigen::Index>(k)).maxCoeff());
    for (const auto& [k, v] : spec.fixed) s.base[k] = v;

    auto axis = [&](std::size_t k) {
        double lo = X.col(static_cast<Eigen::Index>(k)).minCoeff(), hi = X.col(static_cast<Eigen::Index>(k)).maxCoeff();
        if (spec.range) std::tie(lo, hi) = *spec.range;
        std::vector<double> v;
        if (spec.points == 1) return std::vector<double>{0.5 * (lo + hi)};
        for (std::size_t i = 0; i < spec.points; ++i)
            v.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(spec.points - 1));
        return v;
    };
    const auto a0 = axis(spec.free_dims[0]);
    const auto a1 = spec.free_dims.size() == 2 ? axis(spec.free_dims[1]) : std::vector<double>{0.0};
    for (double v0 : a0)
        for (double v1 : a1) {
            PricePoint p = s.base;
            SliceRow row;
            p[spec.free_dims[0]] = v0;
            row.free_values.push_back(v0);
            if (spec.free_dims.size() == 2) {
                p[spec.free_dims[1]] = v1;
                row.free_values.push_back(v1);
            }
            row.result = query_curve(m, p);
            double var = 0.0;
            for (std::size_t j = 0; j < m.output_dim(); ++j) {
                row.total_mean += row.result.mean[j];
                var += row.result.variance[j];
            }
            row.total_lower = row.total_mean - band_z * std::sqrt(var);
            row.total_upper = row.total_mean + band_z * std::sqrt(var);
            s.rows.push_back(std::move(row));
        }
    return s;
}

inline std::string slice_csv(const CurveModel& m, const Slice& s) {
    std::string out;
    out += "# slice of a price-amount curve model, training digest " + m.training_digest + "\n";
    for (std::size_t k = 0; k < m.input_dim(); ++k) {
        if (std::find(s.free_dims.begin(), s.free_dims.end(), k) != s.free_dims.end()) continue;
        out += "# fixed " + m.input_labels[k] + " = " + format_double(s.base[k]) + "\n";
    }
    for (std::size_t f : s.free_dims) out += m.input_labels[f] + ",";
    for (const auto& l : m.output_labels) out += "mean_" + l + ",lower_" + l + ",upper_" + l + ",";
    out += "total_mean,total_lower,total_upper\n";
    for (const auto& r : s.rows) {
        for (double v : r.free_values) out += format_double(v) + ",";
        for (std::size_t j = 0; j < m.output_dim(); ++j)
            out += format_double(r.result.mean[j]) + "," + format_double(r.result.lower[j]) + "," +
                   format_double(r.result.upper[j]) + ",";
        out += format_double(r.total_mean) + "," + format_double(r.total_lower) + "," + format_double(r.total_upper) +
               "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rank correlation

inline std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

// Spearman correlation with average ranks for ties; 0 when either side is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("spearman: length mismatch");
    if (a.size() < 2) return 0.0;
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size()), mean = (n + 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - mean) * (rb[i] - mean);
        saa += (ra[i] - mean) * (ra[i] - mean);
        sbb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
// Model file

inline nlohmann::ordered_json to_json(const CurveModel& m) {
    nlohmann::ordered_json j;
    j["kind"] = "curve_model";
    j["format"] = 1;
    j["family"] = gpr::to_string(m.family);
    j["seed"] = m.seed;
    j["training_digest"] = m.training_digest;
    j["inputs"] = m.input_labels;
    j["outputs"] = m.output_labels;
    std::vector<std::string> digests;
    for (auto d : m.training_samples) digests.push_back(hex_digest(d));
    j["training_samples"] = digests;
    auto& models = j["models"] = nlohmann::ordered_json::array();
    for (const auto& g : m.models) {
        nlohmann::ordered_json e;
        e["kernel"] = gpr::to_json(g.kernel());
        e["noise"] = g.noise();
        e["output_offset"] = g.output_offset();
        e["output_scale"] = g.output_scale();
        e["jitter"] = g.jitter();
        e["data_digest"] = hex_digest(g.data_digest());
        models.push_back(std::move(e));
    }
    // Training data, needed to rebuild the factorization.
    const Eigen::MatrixXd& X = m.models.at(0).inputs();
    auto& xs = j["train_inputs"] = nlohmann::ordered_json::array();
    auto& ys = j["train_outputs"] = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        std::vector<double> row;
        for (Eigen::Index k = 0; k < X.cols(); ++k) row.push_back(X(i, k));
        xs.push_back(row);
        std::vector<double> out;
        for (const auto& g : m.models) out.push_back(g.outputs()(i));
        ys.push_back(out);
    }
    return j;
}

inline std::uint64_t parse_hex(const std::string& s, const std::string& what) {
    if (s.size() != 16) throw InputError("model file: bad " + what + " digest");
    std::uint64_t v = 0;
    for (char ch : s) {
        v <<= 4;
        if (ch >= '0' && ch <= '9') v |= static_cast<std::uint64_t>(ch - '0');
        else if (ch >= 'a' && ch <= 'f') v |= static_cast<std::uint64_t>(ch - 'a' + 10);
        else throw InputError("model file: bad " + what + " digest");
    }
    return v;
}

// Rebuilds a model from its file record. Hyperparameters are taken verbatim;
// the factorization is recomputed with the recorded jitter as the start.
inline CurveModel curve_from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind").get<std::string>() != "curve_model") throw InputError("model file: not a curve model");
        if (j.at("format").get<int>() != 1) throw InputError("model file: unsupported format version");
        CurveModel m;
        m.family = gpr::parse_family(j.at("family").get<std::string>());
        m.seed = j.at("seed").get<std::uint64_t>();
        m.training_digest = j.at("training_digest").get<std::string>();
        m.input_labels = j.at("inputs").get<std::vector<std::string>>();
        m.output_labels = j.at("outputs").get<std::vector<std::string>>();
        for (const auto& d : j.at("training_samples")) m.training_samples.push_back(parse_hex(d.get<std::string>(), "sample"));
        std::sort(m.training_samples.begin(), m.training_samples.end());
        const auto xs = j.at("train_inputs").get<std::vector<std::vector<double>>>();
        const auto ys = j.at("train_outputs").get<std::vector<std::vector<double>>>();
        if (xs.size() != ys.size()) throw InputError("model file: training input and output counts differ");
        const std::size_t d = m.input_labels.size(), q = m.output_labels.size();
        Eigen::MatrixXd X(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(d));
        Eigen::MatrixXd Y(static_cast<Eigen::Index>(ys.size()), static_cast<Eigen::Index>(q));
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (xs[i].size() != d || ys[i].size() != q) throw InputError("model file: training row has the wrong length");
            for (std::size_t k = 0; k < d; ++k) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = xs[i][k];
            for (std::size_t k = 0; k < q; ++k) Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = ys[i][k];
        }
        const auto& models = j.at("models");
        if (models.size() != q) throw InputError("model file: model count does not match output count");
        for (std::size_t k = 0; k < q; ++k) {
            const auto& e = models[k];
            const auto spec = gpr::kernel_from_json(e.at("kernel"));
            gpr::FitOptions fo;
            fo.center_outputs = true;
            auto g = gpr::GprModel::fit(X, Y.col(static_cast<Eigen::Index>(k)), spec, e.at("noise").get<double>(), fo);
            if (g.output_offset() != e.at("output_offset").get<double>() || g.jitter() != e.at("jitter").get<double>())
                throw InputError("model file: output " + m.output_labels[k] + " does not reproduce its recorded fit");
            if (hex_digest(g.data_digest()) != e.at("data_digest").get<std::string>())
                throw InputError("model file: training data digest mismatch for output " + m.output_labels[k]);
            m.models.push_back(std::move(g));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("model file: ") + e.what());
    }
}

} // namespace idcdr
