#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <idcdr/curve.hpp>

using namespace idcdr;

namespace {

// n samples on [0,1]^2 with outputs f0 = 3 + 2 x0 - x1 and f1 = 10 x0 x1,
// plus optional Gaussian noise.
SampleSet synthetic(std::size_t n, std::uint64_t seed, double noise = 0.0) {
    SampleSet s;
    s.input_labels = {"price_a", "price_b"};
    s.output_labels = {"amount_a", "amount_b"};
    s.master_seed = seed;
    s.case_digest = "0000000000000000";
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> e(0.0, noise > 0 ? noise : 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = u(rng), b = u(rng);
        const double na = noise > 0 ? e(rng) : 0.0, nb = noise > 0 ? e(rng) : 0.0;
        s.prices.push_back({a, b});
        s.amounts.push_back({3 + 2 * a - b + na, 10 * a * b + nb});
        s.seeds.push_back(derive_seed(seed, i));
    }
    return s;
}

CurveOptions quick() {
    CurveOptions o;
    o.hyper.starts = 1;
    o.hyper.max_evals = 80;
    return o;
}

} // namespace

TEST(Curve, ConstantOutputsPredictConstant) {
    auto s = synthetic(12, 1);
    for (auto& a : s.amounts) a = {7.0, 7.0};
    const auto m = fit_curve(s, gpr::KernelFamily::squared_exponential, 3, quick());
    const double p[2] = {0.3, 0.9};
    const auto r = query_curve(m, p);
    EXPECT_NEAR(r.mean[0], 7.0, 1e-9);
    EXPECT_NEAR(r.mean[1], 7.0, 1e-9);
}

TEST(Curve, FitIsDeterministic) {
    const auto s = synthetic(40, 2, 0.05);
    CurveOptions one = quick(), two = quick();
    two.workers = 2;
    const auto a = fit_curve(s, gpr::KernelFamily::matern52, 9, one);
    const auto b = fit_curve(s, gpr::KernelFamily::matern52, 9, two);
    for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_EQ(a.models[j].kernel(), b.models[j].kernel());
        EXPECT_EQ(a.models[j].noise(), b.models[j].noise());
    }
}

TEST(Curve, SmoothTruthOutOfSampleError) {
    const auto train = synthetic(100, 4);
    const auto test = synthetic(200, 5);
    const auto m = fit_curve(train, gpr::KernelFamily::squared_exponential, 1);
    const auto e = error_metrics(m, test);
    EXPECT_EQ(e.within_count, 0u);
    EXPECT_EQ(e.out_count, 200u);
    ASSERT_TRUE(e.out_pct);
    EXPECT_LT(*e.out_pct, 5.0);
    EXPECT_FALSE(e.within_pct);
}

TEST(Curve, BandIsSymmetric) {
    const auto s = synthetic(30, 6, 0.1);
    const auto m = fit_curve(s, gpr::KernelFamily::rational_quadratic, 2, quick());
    const double p[2] = {0.5, 0.1};
    const auto r = query_curve(m, p);
    for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_GT(r.variance[j], 0.0);
        EXPECT_NEAR(r.upper[j] - r.mean[j], r.mean[j] - r.lower[j], 1e-12);
        EXPECT_NEAR(r.upper[j] - r.mean[j], 1.96 * std::sqrt(r.variance[j]), 1e-12);
    }
}

TEST(Curve, QueryRejectsWrongLength) {
    const auto m = fit_curve(synthetic(10, 7), gpr::KernelFamily::linear, 1, quick());
    const double p[3] = {0.1, 0.2, 0.3};
    EXPECT_THROW(query_curve(m, p), InputError);
}

TEST(Curve, ErrorPctEdgeCases) {
    Eigen::MatrixXd a(2, 2);
    a << 1, 2, 3, 4;
    EXPECT_EQ(*error_pct(a, a), 0.0);
    EXPECT_NEAR(*error_pct(Eigen::MatrixXd::Zero(2, 2), a), 100.0, 1e-12);
    // 100 * sqrt(1 + 4) / sqrt(30)
    Eigen::MatrixXd p = a;
    p(0, 0) += 1;
    p(1, 1) -= 2;
    EXPECT_NEAR(*error_pct(p, a), 100.0 * std::sqrt(5.0 / 30.0), 1e-12);
    EXPECT_FALSE(error_pct(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2)));
    EXPECT_THROW(error_pct(Eigen::MatrixXd(1, 2), a), InputError);
}

TEST(Curve, WithinAndOutSeparated) {
    const auto s = synthetic(60, 8, 0.05);
    const auto [train, held] = split_samples(s, 0.75, 3);
    EXPECT_EQ(train.size(), 45u);
    EXPECT_EQ(held.size(), 15u);
    const auto m = fit_curve(train, gpr::KernelFamily::squared_exponential, 1, quick());
    const auto e = error_metrics(m, s);
    EXPECT_EQ(e.within_count, 45u);
    EXPECT_EQ(e.out_count, 15u);
    ASSERT_TRUE(e.within_pct && e.out_pct);
    // Same numbers when each part is scored alone.
    EXPECT_DOUBLE_EQ(*error_metrics(m, train).within_pct, *e.within_pct);
    EXPECT_DOUBLE_EQ(*error_metrics(m, held).out_pct, *e.out_pct);
}

TEST(Curve, SplitIsSeededDisjointAndOrdered) {
    const auto s = synthetic(50, 9);
    const auto [a1, b1] = split_samples(s, 0.6, 11);
    const auto [a2, b2] = split_samples(s, 0.6, 11);
    const auto [a3, b3] = split_samples(s, 0.6, 12);
    EXPECT_EQ(a1.seeds, a2.seeds);
    EXPECT_NE(a1.seeds, a3.seeds);
    std::vector<std::uint64_t> merged = a1.seeds;
    merged.insert(merged.end(), b1.seeds.begin(), b1.seeds.end());
    std::sort(merged.begin(), merged.end());
    std::vector<std::uint64_t> all = s.seeds;
    std::sort(all.begin(), all.end());
    EXPECT_EQ(merged, all);
    // Original order kept: positions in s increase.
    auto pos = [&](std::uint64_t v) { return std::find(s.seeds.begin(), s.seeds.end(), v) - s.seeds.begin(); };
    for (std::size_t i = 1; i < a1.size(); ++i) EXPECT_LT(pos(a1.seeds[i - 1]), pos(a1.seeds[i]));
    EXPECT_THROW(split_samples(s, 1.0, 1), InputError);
}

TEST(Curve, SliceShapeAndCsv) {
    const auto s = synthetic(30, 10);
    const auto m = fit_curve(s, gpr::KernelFamily::squared_exponential, 1, quick());
    SliceSpec one;
    one.free_dims = {0};
    one.fixed = {{1, 0.25}};
    one.points = 11;
    const auto sl = slice_curve(m, one);
    ASSERT_EQ(sl.rows.size(), 11u);
    EXPECT_EQ(sl.base[1], 0.25);
    for (const auto& r : sl.rows) {
        const double p[2] = {r.free_values[0], 0.25};
        const auto q = query_curve(m, p);
        EXPECT_EQ(q.mean, r.result.mean);
        EXPECT_NEAR(r.total_mean, q.mean[0] + q.mean[1], 1e-12);
        EXPECT_LE(r.total_lower, r.total_mean);
        EXPECT_GE(r.total_upper, r.total_mean);
    }
    const std::string csv = slice_csv(m, sl);
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 2u + 1u + 11u);
    EXPECT_EQ(lines[0][0], '#');
    EXPECT_EQ(lines[1], "# fixed price_b = 0.25");
    EXPECT_EQ(lines[2],
              "price_a,mean_amount_a,lower_amount_a,upper_amount_a,mean_amount_b,lower_amount_b,upper_amount_b,"
              "total_mean,total_lower,total_upper");
    EXPECT_EQ(std::count(lines[3].begin(), lines[3].end(), ','), 9);

    SliceSpec two;
    two.free_dims = {1, 0};
    two.points = 4;
    const auto s2 = slice_curve(m, two);
    EXPECT_EQ(s2.rows.size(), 16u);
    EXPECT_EQ(s2.rows[1].free_values.size(), 2u);
}

TEST(Curve, SliceDefaultsToTrainingMidpoint) {
    const auto s = synthetic(20, 12);
    const auto m = fit_curve(s, gpr::KernelFamily::exponential, 1, quick());
    SliceSpec sp;
    sp.free_dims = {0};
    const auto sl = slice_curve(m, sp);
    double lo = 1e9, hi = -1e9;
    for (const auto& p : s.prices) {
        lo = std::min(lo, p[1]);
        hi = std::max(hi, p[1]);
    }
    EXPECT_DOUBLE_EQ(sl.base[1], 0.5 * (lo + hi));
    EXPECT_EQ(sl.rows.size(), 21u);
}

TEST(Curve, SliceValidation) {
    const auto m = fit_curve(synthetic(10, 13), gpr::KernelFamily::squared_exponential, 1, quick());
    SliceSpec sp;
    EXPECT_THROW(slice_curve(m, sp), InputError);
    sp.free_dims = {0, 0};
    EXPECT_THROW(slice_curve(m, sp), InputError);
    sp.free_dims = {2};
    EXPECT_THROW(slice_curve(m, sp), InputError);
    sp.free_dims = {0};
    sp.fixed = {{0, 0.5}};
    EXPECT_THROW(slice_curve(m, sp), InputError);
}

TEST(Curve, Spearman) {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{2, 1, 4, 3, 5};
    // 1 - 6 * sum d^2 / (n (n^2 - 1)) with sum d^2 = 4
    EXPECT_NEAR(spearman(a, b), 0.8, 1e-12);
    const std::vector<double> rev{5, 4, 3, 2, 1};
    EXPECT_NEAR(spearman(a, rev), -1.0, 1e-12);
    const std::vector<double> ties{1, 1, 2, 2, 3};
    EXPECT_EQ(ranks(ties), (std::vector<double>{1.5, 1.5, 3.5, 3.5, 5}));
    const std::vector<double> flat{2, 2, 2, 2, 2};
    EXPECT_EQ(spearman(a, flat), 0.0);
}

TEST(Curve, ModelFileRoundTrip) {
    const auto s = synthetic(25, 14, 0.02);
    for (auto fam : gpr::all_families) {
        const auto m = fit_curve(s, fam, 5, quick());
        const std::string text = to_json(m).dump(2);
        const auto back = curve_from_json(nlohmann::json::parse(text));
        ASSERT_EQ(back.models.size(), m.models.size());
        EXPECT_EQ(back.family, m.family);
        EXPECT_EQ(back.training_samples, m.training_samples);
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_EQ(back.models[j].kernel(), m.models[j].kernel());
            EXPECT_EQ(back.models[j].noise(), m.models[j].noise());
        }
        const double p[2] = {0.37, 0.61};
        EXPECT_EQ(query_curve(back, p).mean, query_curve(m, p).mean);
        EXPECT_EQ(to_json(back).dump(2), text);
    }
}

TEST(Curve, ModelFileTamperRejected) {
    const auto m = fit_curve(synthetic(15, 15), gpr::KernelFamily::squared_exponential, 1, quick());
    auto j = nlohmann::json::parse(to_json(m).dump());
    j["train_outputs"][0][0] = j["train_outputs"][0][0].get<double>() + 1.0;
    EXPECT_THROW(curve_from_json(j), InputError);
    auto k = nlohmann::json::parse(to_json(m).dump());
    k.erase("models");
    EXPECT_THROW(curve_from_json(k), InputError);
    auto f = nlohmann::json::parse(to_json(m).dump());
    f["family"] = "cubic";
    EXPECT_THROW(curve_from_json(f), InputError);
}

TEST(Curve, CoverageOnNoisyTruth) {
    const auto train = synthetic(150, 16, 0.2);
    const auto test = synthetic(300, 17, 0.2);
    const auto m = fit_curve(train, gpr::KernelFamily::squared_exponential, 1);
    const double c = band_coverage(m, test);
    EXPECT_GT(c, 0.88);
    EXPECT_LT(c, 0.995);
}
