#pragma once

// Command-line front end. `run` is the whole program minus process exit, so
// tests can drive it in-process.
//
//   idcdr gen   --case F --m M --seed S --out samples.csv [--workers N]
//   idcdr fit   --samples samples.csv --kernel K --seed S --out model.json [--workers N]
//   idcdr query --model model.json --price p1,...,pd [--out result.csv]
//   idcdr slice --model model.json --free DIM[,DIM] [--fix DIM=V,...] [--points N] --out slice.csv
//   idcdr bench (--case F --m M | --samples samples.csv) --seed S --out report.csv [--train F] [--workers N]
//
// Exit codes: 0 ok, 2 input error, 3 computation failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "curve.hpp"
#include "errors.hpp"
#include "gpr.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "sampling.hpp"
#include "tree.hpp"

#ifndef IDCDR_VERSION
#define IDCDR_VERSION "0.0.0"
#endif

namespace idcdr::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_input = 2;
inline constexpr int exit_compute = 3;

inline constexpr double default_train_fraction = 0.8;

struct BenchRow {
    std::string name;
    std::optional<double> within_pct, out_pct;
};

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
    auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("nan"); };
    std::string out = "model,within_pct,out_pct\n";
    for (const auto& r : rows) out += r.name + "," + cell(r.within_pct) + "," + cell(r.out_pct) + "\n";
    return out;
}

// All six kernels plus the tree on one shared split. Within-sample error is
// measured on the training part, out-of-sample on the held-out part.
inline std::vector<BenchRow> bench(const SampleSet& all, std::uint64_t seed, double train_fraction,
                                   std::size_t workers, const tree::TreeOptions& topt = {}) {
    const auto [train, held] = split_samples(all, train_fraction, seed);
    if (train.size() < 4 || held.size() == 0) throw InputError("bench: split leaves too few samples on one side");
    std::vector<BenchRow> rows;
    CurveOptions co;
    co.workers = workers;
    CurveModel membership;
    for (auto fam : gpr::all_families) {
        const auto m = fit_curve(train, fam, seed, co);
        const auto e = error_metrics(m, all);
        rows.push_back({gpr::to_string(fam), e.within_pct, e.out_pct});
        membership.training_samples = m.training_samples;
    }
    const auto t = tree::fit_tree(train.inputs(), train.outputs(), topt);
    const auto e = error_metrics_with(membership, all, [&](const Eigen::MatrixXd& P) {
        Eigen::MatrixXd out(P.rows(), static_cast<Eigen::Index>(all.output_dim()));
        for (Eigen::Index i = 0; i < P.rows(); ++i) {
            const Eigen::VectorXd row = P.row(i).transpose();
            const auto y = t.predict({row.data(), static_cast<std::size_t>(row.size())});
            for (std::size_t j = 0; j < y.size(); ++j) out(i, static_cast<Eigen::Index>(j)) = y[j];
        }
        return out;
    });
    rows.push_back({"tree", e.within_pct, e.out_pct});
    return rows;
}

namespace detail {

inline std::vector<double> parse_list(const std::string& s, const std::string& what) {
    std::vector<double> v;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(',', start);
        v.push_back(parse_double(s.substr(start, pos - start), what));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return v;
}

// A dimension given as a 1-based index or as an input label.
inline std::size_t parse_dim(const std::string& s, const std::vector<std::string>& labels) {
    for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k] == s) return k;
    std::size_t k = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), k);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || k < 1 || k > labels.size())
        throw InputError("unknown input dimension '" + s + "'");
    return k - 1;
}

inline std::optional<nlohmann::json> read_json_if_exists(const std::string& path) {
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        return nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

inline std::string manifest_path(const std::string& out) { return out + ".manifest.json"; }

} // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::steady_clock::now();
    std::string command = "idcdr";
    for (const auto& a : args) command += " " + a;

    CLI::App app{"Demand-response price-amount curve estimation for data centers", "idcdr"};
    app.require_subcommand(1);
    app.set_version_flag("--version", IDCDR_VERSION);

    std::string case_file, samples_file, model_file, out_file, kernel = "se", price, free_dims, fixed;
    std::size_t m = 1000, workers = 1, points = 21;
    std::uint64_t seed = 1;
    double train_fraction = default_train_fraction;

    auto* gen = app.add_subcommand("gen", "generate a sample set from a case file");
    gen->add_option("--case", case_file, "case file (JSON)")->required();
    gen->add_option("--m", m, "number of samples")->check(CLI::PositiveNumber);
    gen->add_option("--seed", seed, "master seed");
    gen->add_option("--out", out_file, "sample CSV to write")->required();
    gen->add_option("--workers", workers, "parallel sample workers")->check(CLI::PositiveNumber);

    auto* fit = app.add_subcommand("fit", "fit one GP per output");
    fit->add_option("--samples", samples_file, "sample CSV")->required();
    fit->add_option("--kernel", kernel, "se, exponential, matern32, matern52, rq or linear");
    fit->add_option("--seed", seed, "hyperparameter search seed");
    fit->add_option("--out", out_file, "model file to write")->required();
    fit->add_option("--workers", workers, "parallel output fits")->check(CLI::PositiveNumber);

    auto* query = app.add_subcommand("query", "predict amounts at one price vector");
    query->add_option("--model", model_file, "model file")->required();
    query->add_option("--price", price, "comma-separated prices, one per input")->required();
    query->add_option("--out", out_file, "also write the result to this file");

    auto* slice = app.add_subcommand("slice", "evaluate the curve along one or two price dimensions");
    slice->add_option("--model", model_file, "model file")->required();
    slice->add_option("--free", free_dims, "free dimension(s): label or 1-based index, comma-separated")->required();
    slice->add_option("--fix", fixed, "DIM=VALUE pairs, comma-separated; others sit at the training midpoint");
    slice->add_option("--points", points, "grid points per free dimension")->check(CLI::PositiveNumber);
    slice->add_option("--out", out_file, "slice CSV to write")->required();

    auto* bench_cmd = app.add_subcommand("bench", "within/out-of-sample errors of all kernels and the tree");
    auto* bench_case = bench_cmd->add_option("--case", case_file, "case file; samples are generated first");
    auto* bench_samples = bench_cmd->add_option("--samples", samples_file, "existing sample CSV");
    bench_case->excludes(bench_samples);
    bench_cmd->add_option("--m", m, "samples to generate with --case")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--seed", seed, "seed for generation, split and fits");
    bench_cmd->add_option("--train", train_fraction, "training fraction")->check(CLI::Range(0.0, 1.0));
    bench_cmd->add_option("--out", out_file, "report CSV to write")->required();
    bench_cmd->add_option("--workers", workers, "parallel workers")->check(CLI::PositiveNumber);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForVersion&) {
        out << IDCDR_VERSION << "\n";
        return exit_ok;
    } catch (const CLI::Success&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_input;
    }

    nlohmann::ordered_json manifest;
    manifest["kind"] = "run_manifest";
    manifest["tool"] = "idcdr";
    manifest["version"] = IDCDR_VERSION;
    manifest["command"] = command;
    nlohmann::ordered_json params;
    std::string manifest_file;
    auto finish = [&]() {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        manifest["parameters"] = params;
        manifest["duration_s"] = secs;
        const std::string text = manifest.dump(2) + "\n";
        if (manifest_file.empty()) err << text;
        else io::write_file(manifest_file, text);
    };

    try {
        if (*gen) {
            const auto c = io::load_case(case_file);
            GenerateOptions opt;
            opt.samples = m;
            opt.workers = workers;
            const auto set = generate_dataset(c, opt, seed);
            io::write_file(out_file, to_csv(set));
            manifest["case_digest"] = set.case_digest;
            manifest["master_seed"] = seed;
            params = {{"case", case_file}, {"out", out_file}, {"workers", workers}, {"sample_set", idcdr::manifest(set, opt)}};
            manifest_file = detail::manifest_path(out_file);
        } else if (*fit) {
            const auto fam = gpr::parse_family(kernel);
            const auto set = parse_csv(io::read_file(samples_file));
            CurveOptions co;
            co.workers = workers;
            const auto model = fit_curve(set, fam, seed, co);
            io::write_file(out_file, to_json(model).dump(1) + "\n");
            const auto sm = detail::read_json_if_exists(detail::manifest_path(samples_file));
            manifest["case_digest"] = sm ? sm->value("case_digest", nlohmann::json(nullptr)) : nlohmann::json(nullptr);
            manifest["master_seed"] = seed;
            nlohmann::ordered_json hyp = nlohmann::ordered_json::array();
            for (std::size_t j = 0; j < model.models.size(); ++j)
                hyp.push_back({{"output", model.output_labels[j]},
                               {"kernel", gpr::to_json(model.models[j].kernel())},
                               {"noise", model.models[j].noise()}});
            params = {{"samples", samples_file},
                      {"samples_digest", model.training_digest},
                      {"kernel", gpr::to_string(fam)},
                      {"out", out_file},
                      {"workers", workers},
                      {"hyperparameters", hyp}};
            manifest_file = detail::manifest_path(out_file);
        } else if (*query || *slice) {
            const auto model = curve_from_json([&] {
                try {
                    return nlohmann::json::parse(io::read_file(model_file));
                } catch (const nlohmann::json::exception& e) {
                    throw InputError(model_file + ": " + e.what());
                }
            }());
            const auto sm = detail::read_json_if_exists(detail::manifest_path(model_file));
            manifest["case_digest"] = sm ? sm->value("case_digest", nlohmann::json(nullptr)) : nlohmann::json(nullptr);
            manifest["master_seed"] = model.seed;
            if (*query) {
                const auto p = detail::parse_list(price, "--price");
                const auto r = query_curve(model, p);
                std::string text = "output,mean,variance,lower,upper\n";
                double tm = 0.0, tv = 0.0;
                for (std::size_t j = 0; j < model.output_dim(); ++j) {
                    text += model.output_labels[j] + "," + format_double(r.mean[j]) + "," +
                            format_double(r.variance[j]) + "," + format_double(r.lower[j]) + "," +
                            format_double(r.upper[j]) + "\n";
                    tm += r.mean[j];
                    tv += r.variance[j];
                }
                const double half = band_z * std::sqrt(tv);
                text += "total," + format_double(tm) + "," + format_double(tv) + "," + format_double(tm - half) + "," +
                        format_double(tm + half) + "\n";
                out << text;
                params = {{"model", model_file}, {"price", p}};
                if (!out_file.empty()) {
                    io::write_file(out_file, text);
                    params["out"] = out_file;
                    manifest_file = detail::manifest_path(out_file);
                }
            } else {
                SliceSpec spec;
                spec.points = points;
                std::size_t start = 0;
                for (;;) {
                    const auto pos = free_dims.find(',', start);
                    spec.free_dims.push_back(detail::parse_dim(free_dims.substr(start, pos - start), model.input_labels));
                    if (pos == std::string::npos) break;
                    start = pos + 1;
                }
                start = 0;
                while (!fixed.empty()) {
                    const auto pos = fixed.find(',', start);
                    const std::string item = fixed.substr(start, pos - start);
                    const auto eq = item.find('=');
                    if (eq == std::string::npos) throw InputError("--fix: expected DIM=VALUE, got '" + item + "'");
                    spec.fixed.emplace_back(detail::parse_dim(item.substr(0, eq), model.input_labels),
                                            parse_double(item.substr(eq + 1), "--fix " + item));
                    if (pos == std::string::npos) break;
                    start = pos + 1;
                }
                const auto s = slice_curve(model, spec);
                io::write_file(out_file, slice_csv(model, s));
                nlohmann::ordered_json fx = nlohmann::ordered_json::object();
                for (std::size_t k = 0; k < model.input_dim(); ++k)
                    if (std::find(s.free_dims.begin(), s.free_dims.end(), k) == s.free_dims.end())
                        fx[model.input_labels[k]] = s.base[k];
                nlohmann::ordered_json fr = nlohmann::ordered_json::array();
                for (std::size_t k : s.free_dims) fr.push_back(model.input_labels[k]);
                params = {{"model", model_file}, {"free", fr}, {"fixed", fx}, {"points", points}, {"out", out_file}};
                manifest_file = detail::manifest_path(out_file);
            }
        } else if (*bench_cmd) {
            SampleSet set;
            if (!case_file.empty()) {
                const auto c = io::load_case(case_file);
                GenerateOptions opt;
                opt.samples = m;
                opt.workers = workers;
                set = generate_dataset(c, opt, seed);
                manifest["case_digest"] = set.case_digest;
                params["case"] = case_file;
                params["m"] = m;
            } else if (!samples_file.empty()) {
                set = parse_csv(io::read_file(samples_file));
                const auto sm = detail::read_json_if_exists(detail::manifest_path(samples_file));
                manifest["case_digest"] = sm ? sm->value("case_digest", nlohmann::json(nullptr)) : nlohmann::json(nullptr);
                params["samples"] = samples_file;
            } else {
                throw InputError("bench: give --case or --samples");
            }
            manifest["master_seed"] = seed;
            const tree::TreeOptions topt;
            const auto rows = bench(set, seed, train_fraction, workers, topt);
            io::write_file(out_file, bench_csv(rows));
            params["train_fraction"] = train_fraction;
            params["tree"] = {{"max_depth", topt.max_depth}, {"min_leaf", topt.min_leaf}};
            params["error_metric"] = error_metric_definition;
            params["out"] = out_file;
            params["workers"] = workers;
            manifest_file = detail::manifest_path(out_file);
            out << bench_csv(rows);
        }
        finish();
        return exit_ok;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return exit_input;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << "\n";
        return exit_compute;
    }
}

} // namespace idcdr::cli
