#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lsam/bounds.hpp"
#include "lsam/counterexample.hpp"
#include "lsam/io.hpp"
#include "lsam/linalg.hpp"
#include "lsam/markov.hpp"
#include "lsam/sim.hpp"
#include "lsam/td.hpp"

namespace lsam::experiment {

using nlohmann::json;

// Seed used when a config does not set one; documented in the README.
constexpr std::uint64_t default_seed = 0x9E3779B97F4A7C15ULL;
constexpr int manifest_schema_version = 1;
constexpr const char* tool_version = "0.1.0";

struct RunOptions {
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override;
    int threads = 0;  // 0 = hardware concurrency
    bool quiet = false;
};

// Log-spaced multiples of tau covering [tau, k_end]; always includes tau
// itself and at most `points` entries.
inline std::vector<std::size_t> tau_multiples_grid(long tau, std::size_t k_end,
                                                   std::size_t points) {
    std::vector<std::size_t> ks;
    const double t = static_cast<double>(tau);
    const double top = std::max(1.0, static_cast<double>(k_end) / t);
    for (std::size_t i = 0; i < points; ++i) {
        const double frac = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1.0);
        const double multiple = std::pow(top, frac);
        const auto k = static_cast<std::size_t>(std::llround(multiple * t));
        if (ks.empty() || k > ks.back()) ks.push_back(k);
    }
    return ks;
}

// ---- Theorem-1 domination experiment on a TD(0) instance ----
// Compiles the problem, certifies the Lyapunov solution, measures the mixing
// time at delta = epsilon, assembles the bound constants, runs the centered
// ensemble, and compares empirical E||Theta_k||^2 + 3 SE against the bound.
struct BoundCheckParams {
    double epsilon = 0.0;
    long k_cap = 10000;
    std::size_t n_runs = 0;
    std::size_t grid_points = 40;
    std::optional<std::size_t> k_end;  // default: steady-state entry point
    std::optional<Vector> theta0;      // centered; default -theta_star
    int threads = 0;
    std::uint64_t seed = default_seed;
};

struct BoundCheckRow {
    std::size_t k = 0;
    double empirical = 0.0;
    double std_err = 0.0;
    double bound = 0.0;
    bool dominated = false;
};

struct BoundCheckResult {
    long tau = 0;
    linalg::LyapunovCertificate certificate;
    bounds::BoundConstants constants;
    Vector theta0;
    double theta0_norm = 0.0;
    std::size_t k_end = 0;
    std::vector<BoundCheckRow> rows;
    bool all_dominated = false;
    double b_max = 0.0;
};

inline BoundCheckResult bound_check(const td::CompiledTd& compiled, const BoundCheckParams& p) {
    if (!compiled.pair_model)
        throw Error(ErrorCode::PreconditionViolated, "bound check needs the TD(0) pair model");
    if (!(p.epsilon > 0.0)) throw Error(ErrorCode::InvalidStep, "epsilon must be positive");
    if (p.n_runs < 2) throw Error(ErrorCode::PreconditionViolated, "need n_runs >= 2");

    BoundCheckResult out;
    out.certificate = linalg::solve_lyapunov(compiled.a_tilde);
    if (!out.certificate.hurwitz)
        throw Error(ErrorCode::NotHurwitz, "compiled matrix is not Hurwitz");
    out.tau = markov::mixing_time(*compiled.pair_model, p.epsilon, p.k_cap);
    out.b_max = compiled.b_max;
    out.constants = bounds::compute_constants(compiled.b_max, out.certificate.gamma_max,
                                              out.certificate.gamma_min, out.tau, p.epsilon);
    if (!out.constants.valid())
        throw Error(ErrorCode::StepInvalid,
                    "epsilon violates the step-validity conditions for this instance");

    out.theta0 = p.theta0.value_or([&] {
        Vector v = compiled.theta_star;
        for (double& x : v) x = -x;
        return v;
    }());
    out.theta0_norm = norm2(out.theta0);

    out.k_end = p.k_end.value_or(static_cast<std::size_t>(
        bounds::sample_complexity(out.constants, out.theta0_norm, 1.01)));
    out.k_end = std::max<std::size_t>(out.k_end, static_cast<std::size_t>(4 * out.tau));

    sim::EnsembleOptions opts;
    opts.recorded_ks = tau_multiples_grid(out.tau, out.k_end, p.grid_points);
    opts.n_threads = p.threads;
    const std::vector<int> orders{1};
    const auto moments = sim::run_ensemble(*compiled.pair_model, out.theta0,
                                           sim::StepSchedule::constant(p.epsilon), out.k_end,
                                           p.n_runs, orders, p.seed, opts);

    out.all_dominated = true;
    out.rows.reserve(moments.recorded_ks.size());
    for (std::size_t i = 0; i < moments.recorded_ks.size(); ++i) {
        BoundCheckRow row;
        row.k = moments.recorded_ks[i];
        row.empirical = moments.estimate(i, 0);
        row.std_err = moments.std_error(i, 0);
        row.bound = bounds::mean_square_bound(out.constants, out.theta0_norm,
                                              static_cast<long>(row.k));
        row.dominated = row.empirical + 3.0 * row.std_err <= row.bound;
        out.all_dominated = out.all_dominated && row.dominated;
        out.rows.push_back(row);
    }
    return out;
}

namespace detail {

inline void append_scalar(io::CsvWriter& csv, const std::string& name, double value) {
    csv.row({name, "-1", "-1", io::format_number(value)});
}

inline void append_matrix(io::CsvWriter& csv, const std::string& name, const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            csv.row({name, std::to_string(i), std::to_string(j), io::format_number(m(i, j))});
}

inline void append_vector(io::CsvWriter& csv, const std::string& name, const Vector& v) {
    for (std::size_t i = 0; i < v.size(); ++i)
        csv.row({name, std::to_string(i), "-1", io::format_number(v[i])});
}

inline json config_field(const json& config, const char* key) {
    if (!config.contains(key))
        throw Error(ErrorCode::ConfigInvalid, std::string("missing required field '") + key + "'");
    return config.at(key);
}

// payload may be inline ("model") or in a referenced file ("model_file")
inline json payload(const json& config, const char* inline_key, const char* file_key) {
    if (config.contains(inline_key)) return config.at(inline_key);
    if (config.contains(file_key)) {
        const std::string path = config.at(file_key).get<std::string>();
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::ConfigInvalid, "referenced file does not exist: " + path);
        json j;
        in >> j;
        return j;
    }
    throw Error(ErrorCode::ConfigInvalid,
                std::string("need '") + inline_key + "' or '" + file_key + "'");
}

inline std::vector<std::size_t> parse_record(const json& config, std::size_t horizon) {
    std::vector<std::size_t> ks;
    if (!config.contains("record")) return ks;  // empty means every step
    const json& r = config.at("record");
    if (r.contains("every")) {
        const auto every = r.at("every").get<std::size_t>();
        if (every == 0) throw Error(ErrorCode::ConfigInvalid, "record.every must be positive");
        for (std::size_t k = 0; k <= horizon; k += every) ks.push_back(k);
        if (ks.back() != horizon) ks.push_back(horizon);
    } else if (r.contains("ks")) {
        for (const auto& e : r.at("ks")) ks.push_back(e.get<std::size_t>());
    } else {
        throw Error(ErrorCode::ConfigInvalid, "record needs 'every' or 'ks'");
    }
    return ks;
}

}  // namespace detail

// ---- per-kind runners; each returns the CSV column list for the manifest ----

inline std::vector<std::string> run_lyapunov(const json& config, const std::string& csv_path) {
    const Matrix a = io::parse_matrix(detail::config_field(config, "matrix"), "matrix");
    const auto cert = linalg::solve_lyapunov(a);
    io::CsvWriter csv(csv_path, {"name", "i", "j", "value"});
    detail::append_matrix(csv, "a_bar", cert.a_bar);
    if (!cert.singular_system) detail::append_matrix(csv, "p", cert.p);
    detail::append_scalar(csv, "gamma_min", cert.gamma_min);
    detail::append_scalar(csv, "gamma_max", cert.gamma_max);
    detail::append_scalar(csv, "hurwitz", cert.hurwitz ? 1.0 : 0.0);
    detail::append_scalar(csv, "singular_system", cert.singular_system ? 1.0 : 0.0);
    detail::append_scalar(csv, "residual_fro", cert.residual_fro);
    return csv.columns();
}

inline std::vector<std::string> run_mixing(const json& config, const std::string& csv_path) {
    const auto model = io::parse_model(detail::payload(config, "model", "model_file"));
    const long k_cap = config.value("k_cap", 10000L);
    std::vector<double> deltas;
    if (config.contains("delta_grid"))
        for (const auto& e : config.at("delta_grid")) deltas.push_back(e.get<double>());
    else
        deltas.push_back(detail::config_field(config, "delta").get<double>());

    const Vector pi = markov::stationary_distribution(model.chain);
    markov::MixingAnalysis analysis(model, pi, k_cap);
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    if (deltas.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (double d : deltas) {
            const double x = std::log(1.0 / d);
            const double y = static_cast<double>(analysis.tau_for(d));
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double n = static_cast<double>(deltas.size());
        const double denom = n * sxx - sx * sx;
        if (std::abs(denom) > 1e-30) {
            slope = (n * sxy - sx * sy) / denom;
            intercept = (sy - slope * sx) / n;
        }
    }
    io::CsvWriter csv(csv_path, {"delta", "tau", "fit_slope", "fit_intercept"});
    for (double d : deltas)
        csv.row({io::format_number(d), std::to_string(analysis.tau_for(d)),
                 io::format_number(slope), io::format_number(intercept)});
    return csv.columns();
}

inline std::vector<std::string> run_simulate(const json& config, const std::string& csv_path,
                                             std::uint64_t seed) {
    const auto model = io::parse_model(detail::payload(config, "model", "model_file"));
    const auto steps = detail::config_field(config, "K").get<std::size_t>();
    const auto schedule = io::parse_schedule(detail::config_field(config, "schedule"), steps);
    Vector theta0(model.dim, 0.0);
    if (config.contains("theta0")) theta0 = io::parse_vector(config.at("theta0"), "theta0");
    std::optional<int> x0;
    if (config.contains("x0")) x0 = config.at("x0").get<int>();

    const auto traj = sim::simulate(model, theta0, schedule, steps, seed, x0);

    std::vector<std::string> columns{"k", "state"};
    for (std::size_t i = 0; i < model.dim; ++i) columns.push_back("theta_" + std::to_string(i));
    io::CsvWriter csv(csv_path, columns);
    for (std::size_t k = 0; k < traj.theta.size(); ++k) {
        std::vector<std::string> cells{std::to_string(k),
                                       k < traj.noise_path.size()
                                           ? std::to_string(traj.noise_path[k])
                                           : std::string("-1")};
        for (double v : traj.theta[k]) cells.push_back(io::format_number(v));
        csv.row(cells);
    }
    return columns;
}

inline std::vector<std::string> run_moments(const json& config, const std::string& csv_path,
                                            std::uint64_t seed, int threads) {
    const auto steps = detail::config_field(config, "K").get<std::size_t>();
    const auto n_runs = detail::config_field(config, "n_runs").get<std::size_t>();
    std::vector<int> orders;
    for (const auto& e : detail::config_field(config, "orders")) orders.push_back(e.get<int>());
    const auto schedule = io::parse_schedule(detail::config_field(config, "schedule"), steps);

    sim::EnsembleOptions opts;
    opts.recorded_ks = detail::parse_record(config, steps);
    opts.n_threads = threads;
    if (config.contains("x0")) opts.x0 = config.at("x0").get<int>();

    sim::EnsembleMoments moments;
    if (config.contains("problem") || config.contains("problem_file")) {
        // TD instance: simulate the compiled, centered dynamics
        const auto problem = io::parse_problem(detail::payload(config, "problem", "problem_file"));
        if (problem.lambda == 0.0) {
            const auto compiled = td::compile_td0(problem);
            Vector theta0 = compiled.theta_star;
            for (double& x : theta0) x = -x;
            if (config.contains("theta0")) theta0 = io::parse_vector(config.at("theta0"), "theta0");
            moments = sim::run_ensemble(*compiled.pair_model, theta0, schedule, steps, n_runs,
                                        orders, seed, opts);
        } else {
            const auto compiled = td::compile_tdlambda(problem);
            Vector theta0 = compiled.theta_star;
            for (double& x : theta0) x = -x;
            if (config.contains("theta0")) theta0 = io::parse_vector(config.at("theta0"), "theta0");
            moments = sim::run_ensemble_with(compiled.make_trace_source(), theta0, schedule, steps,
                                             n_runs, orders, seed, opts);
        }
    } else {
        const auto model = io::parse_model(detail::payload(config, "model", "model_file"));
        Vector theta0(model.dim, 0.0);
        if (config.contains("theta0")) theta0 = io::parse_vector(config.at("theta0"), "theta0");
        moments = sim::run_ensemble(model, theta0, schedule, steps, n_runs, orders, seed, opts);
    }

    io::CsvWriter csv(csv_path, {"k", "order", "estimate", "std_error", "overflowed"});
    for (std::size_t ki = 0; ki < moments.recorded_ks.size(); ++ki)
        for (std::size_t oi = 0; oi < moments.orders.size(); ++oi)
            csv.row({std::to_string(moments.recorded_ks[ki]), std::to_string(moments.orders[oi]),
                     io::format_number(moments.estimate(ki, oi)),
                     io::format_number(moments.std_error(ki, oi)),
                     io::CsvWriter::boolean(moments.overflowed[moments.index(ki, oi)] != 0)});
    return csv.columns();
}

inline std::vector<std::string> run_bound_check(const json& config, const std::string& csv_path,
                                                std::uint64_t seed, int threads, json& extra) {
    const auto problem = io::parse_problem(detail::payload(config, "problem", "problem_file"));
    if (problem.lambda != 0.0)
        throw Error(ErrorCode::ConfigInvalid, "bound-check runs on TD(0) instances");
    const auto compiled = td::compile_td0(problem);

    BoundCheckParams params;
    params.epsilon = detail::config_field(config, "epsilon").get<double>();
    params.k_cap = config.value("k_cap", 10000L);
    params.n_runs = detail::config_field(config, "n_runs").get<std::size_t>();
    params.grid_points = config.value("grid_points", std::size_t{40});
    if (config.contains("k_end")) params.k_end = config.at("k_end").get<std::size_t>();
    if (config.contains("theta0")) params.theta0 = io::parse_vector(config.at("theta0"), "theta0");
    params.threads = threads;
    params.seed = seed;

    const auto result = bound_check(compiled, params);

    io::CsvWriter csv(csv_path, {"k", "empirical_msq", "std_err", "theorem1_bound", "dominated"});
    for (const auto& row : result.rows)
        csv.row({std::to_string(row.k), io::format_number(row.empirical),
                 io::format_number(row.std_err), io::format_number(row.bound),
                 io::CsvWriter::boolean(row.dominated)});

    extra["tau"] = result.tau;
    extra["gamma_min"] = result.certificate.gamma_min;
    extra["gamma_max"] = result.certificate.gamma_max;
    extra["kappa1"] = result.constants.kappa1;
    extra["kappa2"] = result.constants.kappa2;
    extra["kappa2_tilde"] = result.constants.kappa2_tilde;
    extra["b_max"] = result.b_max;
    extra["theta0_norm"] = result.theta0_norm;
    extra["k_end"] = result.k_end;
    extra["all_dominated"] = result.all_dominated;
    return csv.columns();
}

inline std::vector<std::string> run_td_compile(const json& config, const std::string& csv_path,
                                               bool lambda_kind) {
    const auto problem = io::parse_problem(detail::payload(config, "problem", "problem_file"));
    if (lambda_kind && problem.lambda == 0.0)
        throw Error(ErrorCode::ConfigInvalid, "tdlambda kind requires lambda > 0");
    if (!lambda_kind && problem.lambda != 0.0)
        throw Error(ErrorCode::ConfigInvalid, "td0 kind requires lambda = 0");
    const auto compiled = lambda_kind ? td::compile_tdlambda(problem) : td::compile_td0(problem);
    const auto cert = linalg::solve_lyapunov(compiled.a_tilde);
    const Vector v = td::value_function(problem.chain, problem.rewards, problem.discount);

    io::CsvWriter csv(csv_path, {"name", "i", "j", "value"});
    detail::append_matrix(csv, "a_tilde", compiled.a_tilde);
    detail::append_vector(csv, "b_tilde", compiled.b_tilde);
    detail::append_vector(csv, "theta_star", compiled.theta_star);
    detail::append_vector(csv, "value_function", v);
    detail::append_scalar(csv, "normalization_scale", compiled.normalization_scale);
    detail::append_scalar(csv, "a_max", compiled.a_max);
    detail::append_scalar(csv, "b_max", compiled.b_max);
    detail::append_scalar(csv, "gamma_min", cert.gamma_min);
    detail::append_scalar(csv, "gamma_max", cert.gamma_max);
    detail::append_scalar(csv, "hurwitz", cert.hurwitz ? 1.0 : 0.0);
    if (lambda_kind) {
        const double cap = compiled.problem.phi_max() /
                           (1.0 - compiled.problem.discount * compiled.problem.lambda);
        detail::append_scalar(csv, "trace_norm_cap", cap);
    }
    return csv.columns();
}

inline std::vector<std::string> run_counterexample(const json& config, const std::string& csv_path,
                                                   std::uint64_t seed, int threads, json& extra) {
    const double epsilon = detail::config_field(config, "epsilon").get<double>();
    const counterexample::TwoPointScalarModel model(epsilon);
    const long m_star = counterexample::divergence_threshold(epsilon);
    const long max_order = config.value("max_order", m_star + 2);
    const auto steps = config.value("K", std::size_t{2000});
    const double theta0 = config.value("theta0", 0.0);

    const auto table = counterexample::exact_moment_recursion(model, max_order, steps, theta0);

    io::CsvWriter csv(csv_path, {"section", "k", "order", "value", "diverged"});
    csv.row({"threshold", "-1", std::to_string(m_star), io::format_number(static_cast<double>(m_star)),
             "0"});
    for (long order = 2; order <= max_order; order += 2) {
        const bool diverged = order >= m_star;
        csv.row({"order_summary", "-1", std::to_string(order),
                 io::format_number(table.at(steps, order)), io::CsvWriter::boolean(diverged)});
    }
    for (std::size_t k = 0; k <= steps; ++k)
        for (long order = 0; order <= max_order; ++order)
            csv.row({"moment", std::to_string(k), std::to_string(order),
                     io::format_number(table.at(k, order)),
                     io::CsvWriter::boolean(table.diverged(k, order))});

    extra["m_star"] = m_star;
    if (config.contains("mc")) {
        const json& mc = config.at("mc");
        const long order = detail::config_field(mc, "order").get<long>();
        const auto n_runs = detail::config_field(mc, "n_runs").get<std::size_t>();
        const auto mc_steps = mc.value("K", steps);
        const auto rep = counterexample::monte_carlo_cross_check(model, order, mc_steps, n_runs,
                                                                 seed, threads, theta0);
        csv.row({"mc_exact", std::to_string(mc_steps), std::to_string(order),
                 io::format_number(rep.exact), "0"});
        csv.row({"mc_empirical", std::to_string(mc_steps), std::to_string(order),
                 io::format_number(rep.empirical), "0"});
        csv.row({"mc_std_error", std::to_string(mc_steps), std::to_string(order),
                 io::format_number(rep.std_error), "0"});
        csv.row({"mc_within_4se", std::to_string(mc_steps), std::to_string(order),
                 io::CsvWriter::boolean(rep.within_4se), "0"});
        extra["mc_within_4se"] = rep.within_4se;
    }
    return csv.columns();
}

inline void write_manifest(const std::string& path, const json& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
    out << manifest.dump(2) << '\n';
}

// Runs one experiment config end to end: validates, dispatches on "kind",
// writes results.csv and manifest.json into out_dir. Returns the process
// exit code (0 ok, 2 config, 3 model, 4 numerical).
inline int run(const json& config, const RunOptions& opts) {
    json manifest;
    manifest["schema_version"] = manifest_schema_version;
    manifest["tool"] = "lsam";
    manifest["tool_version"] = tool_version;
    manifest["created_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    manifest["config"] = config;
    manifest["threads"] = opts.threads;

    const std::string manifest_path =
        (std::filesystem::path(opts.out_dir) / "manifest.json").string();
    try {
        std::filesystem::create_directories(opts.out_dir);
        if (!config.is_object() || !config.contains("kind"))
            throw Error(ErrorCode::ConfigInvalid, "config must be an object with a 'kind'");
        const std::string kind = config.at("kind").get<std::string>();
        const std::uint64_t seed = opts.seed_override.value_or(
            config.contains("seed") ? config.at("seed").get<std::uint64_t>() : default_seed);
        manifest["kind"] = kind;
        manifest["seed"] = seed;

        const std::string csv_path =
            (std::filesystem::path(opts.out_dir) / "results.csv").string();
        json extra = json::object();
        std::vector<std::string> columns;
        if (kind == "lyapunov")
            columns = run_lyapunov(config, csv_path);
        else if (kind == "mixing")
            columns = run_mixing(config, csv_path);
        else if (kind == "simulate")
            columns = run_simulate(config, csv_path, seed);
        else if (kind == "moments")
            columns = run_moments(config, csv_path, seed, opts.threads);
        else if (kind == "bound-check")
            columns = run_bound_check(config, csv_path, seed, opts.threads, extra);
        else if (kind == "td0")
            columns = run_td_compile(config, csv_path, false);
        else if (kind == "tdlambda")
            columns = run_td_compile(config, csv_path, true);
        else if (kind == "counterexample")
            columns = run_counterexample(config, csv_path, seed, opts.threads, extra);
        else
            throw Error(ErrorCode::ConfigInvalid, "unknown kind '" + kind + "'");

        manifest["status"] = "ok";
        manifest["columns"] = columns;
        manifest["outputs"] = json::array({"results.csv"});
        if (!extra.empty()) manifest["summary"] = extra;
        write_manifest(manifest_path, manifest);
        if (!opts.quiet)
            std::cout << "wrote " << csv_path << " and " << manifest_path << "\n";
        return 0;
    } catch (const Error& e) {
        manifest["status"] = "error";
        manifest["error_code"] = to_string(e.code());
        manifest["message"] = e.what();
        const int code = static_cast<int>(exit_class(e.code()));
        manifest["exit_code"] = code;
        try {
            write_manifest(manifest_path, manifest);
        } catch (...) {
        }
        if (!opts.quiet) std::cerr << "error: " << e.what() << "\n";
        return code;
    } catch (const std::exception& e) {
        manifest["status"] = "error";
        manifest["error_code"] = "Unexpected";
        manifest["message"] = e.what();
        manifest["exit_code"] = 4;
        try {
            write_manifest(manifest_path, manifest);
        } catch (...) {
        }
        if (!opts.quiet) std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace lsam::experiment
