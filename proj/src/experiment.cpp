#include "sabias/experiment.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sabias/io.hpp"

namespace sabias {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

struct StudyContext {
    Experiment& exp;
    const fs::path& out;
    const RunOptions& opts;
    RunSummary& summary;
    json& results;
    std::int64_t tau_alpha = 0;
};

void note_artifact(StudyContext& ctx, const fs::path& p) { ctx.summary.artifacts.push_back(p); }

void write_moments_csv(StudyContext& ctx, const EnsembleStats& stats) {
    const int d = stats.dim;
    std::vector<std::string> header = {"k", "replica_count"};
    for (int c = 0; c < d; ++c) header.push_back("mean_" + std::to_string(c));
    header.insert(header.end(), {"m2_frobenius", "m2p_1", "m2p_2", "m2p_3"});
    CsvWriter csv(ctx.out / "moments.csv", header);
    for (const auto& cp : stats.checkpoints) {
        csv.field(cp.k).field(stats.replicas);
        for (int c = 0; c < d; ++c) csv.field(cp.mean[c]);
        csv.field(cp.second_moment.norm());
        for (int p = 0; p < 3; ++p) {
            csv.field(p < static_cast<int>(cp.m2p.size()) ? cp.m2p[static_cast<size_t>(p)] : 0.0);
        }
        csv.end_row();
    }
    note_artifact(ctx, ctx.out / "moments.csv");
}

void study_moments(StudyContext& ctx) {
    const EnsembleStats stats =
        run_ensemble(ctx.exp.config.sa, ctx.exp.model, ctx.exp.chain, ctx.exp.info, ctx.exp.noise,
                     geometric_checkpoints(ctx.exp.config.sa.horizon), ctx.exp.theta_star,
                     ctx.opts.n_threads);
    write_moments_csv(ctx, stats);
    json m2p = json::array();
    for (double v : stats.tail_m2p) m2p.push_back(v);
    ctx.results["moments"] = {{"tail_m2p", m2p}, {"tail_mean", vector_to_json(stats.tail_mean)}};
}

void study_bias(StudyContext& ctx) {
    const Experiment& exp = ctx.exp;
    const BiasDecomposition bias =
        compute_bias(exp.model, exp.chain, exp.info, exp.noise, exp.theta_star);

    if (exp.config.alpha_grid.size() < 3) {
        fail(Err::ConfigInvalid, "config: study bias needs sa.alpha_grid with at least 3 points");
    }
    SlopePlan plan;
    plan.base = exp.config.sa;
    plan.mu = std::max(exp.assumptions.mu_hat, 1e-6);
    plan.share_grid_streams = exp.config.share_grid_streams;
    plan.n_threads = ctx.opts.n_threads;
    const SlopeFit fit = mc_bias_slope(exp.model, exp.chain, exp.info, exp.noise, exp.theta_star,
                                       exp.config.alpha_grid, plan);

    const int d = exp.model.dim();
    CsvWriter csv(ctx.out / "bias.csv", {"component", "coord", "value"});
    auto rows = [&](const std::string& name, const Eigen::VectorXd& v) {
        for (int c = 0; c < d; ++c) {
            csv.field(name).field(static_cast<std::int64_t>(c)).field(v[c]);
            csv.end_row();
        }
    };
    rows("b_m", bias.b_m);
    rows("b_n", bias.b_n);
    rows("b_c", bias.b_c);
    rows("b_total", bias.b_total);
    rows("mc_slope", fit.slope);
    rows("mc_stderr", fit.stderr_);
    note_artifact(ctx, ctx.out / "bias.csv");

    json doc;
    doc["b_m"] = vector_to_json(bias.b_m);
    doc["b_n"] = vector_to_json(bias.b_n);
    doc["b_c"] = vector_to_json(bias.b_c);
    doc["b_total"] = vector_to_json(bias.b_total);
    doc["G"] = matrix_to_json(bias.G);
    doc["H"] = matrix_to_json(bias.H);
    doc["Jbar"] = matrix_to_json(bias.Jbar);
    json tbar = json::array();
    for (const auto& slab : bias.Tbar) tbar.push_back(matrix_to_json(slab));
    doc["Tbar"] = std::move(tbar);
    doc["M_g"] = matrix_to_json(bias.M_g);
    doc["M_xi"] = matrix_to_json(bias.M_xi);
    doc["M_gh"] = matrix_to_json(bias.M_gh);
    doc["S_n"] = matrix_to_json(bias.S_n);
    doc["S_c"] = matrix_to_json(bias.S_c);
    doc["theta_star"] = vector_to_json(ctx.exp.theta_star);
    doc["mc_slope"] = vector_to_json(fit.slope);
    doc["mc_curvature"] = vector_to_json(fit.curvature);
    doc["mc_stderr"] = vector_to_json(fit.stderr_);
    json grid = json::array();
    for (size_t a = 0; a < fit.alphas.size(); ++a) {
        grid.push_back({{"alpha", fit.alphas[a]},
                        {"bias", vector_to_json(fit.bias_per_alpha[a])},
                        {"stderr", vector_to_json(fit.se_per_alpha[a])},
                        {"tau_alpha", fit.tau_per_alpha[a]}});
    }
    doc["grid"] = std::move(grid);
    std::ofstream out(ctx.out / "bias.json");
    out << doc.dump(2) << '\n';
    note_artifact(ctx, ctx.out / "bias.json");

    ctx.results["bias"] = {{"b_total", vector_to_json(bias.b_total)},
                           {"mc_slope", vector_to_json(fit.slope)},
                           {"mc_stderr", vector_to_json(fit.stderr_)},
                           {"b_m", vector_to_json(bias.b_m)},
                           {"b_n", vector_to_json(bias.b_n)},
                           {"b_c", vector_to_json(bias.b_c)}};
}

void study_rr(StudyContext& ctx) {
    const Experiment& exp = ctx.exp;
    const RRResult rr = run_rr(exp.config.sa, exp.model, exp.chain, exp.info, exp.noise,
                               exp.theta_star, ctx.opts.n_threads);
    const int d = exp.model.dim();
    CsvWriter csv(ctx.out / "rr.csv", {"replica", "estimator", "coord", "value"});
    for (size_t r = 0; r < rr.theta_bar_alpha.size(); ++r) {
        auto rows = [&](const char* name, const Eigen::VectorXd& v) {
            for (int c = 0; c < d; ++c) {
                csv.field(static_cast<std::int64_t>(r)).field(name).field(static_cast<std::int64_t>(c));
                csv.field(v[c]);
                csv.end_row();
            }
        };
        rows("pr_alpha", rr.theta_bar_alpha[r]);
        rows("pr_2alpha", rr.theta_bar_2alpha[r]);
        rows("rr", rr.theta_tilde[r]);
    }
    note_artifact(ctx, ctx.out / "rr.csv");

    ctx.results["rr"] = {{"bias_norm_pr", rr.bias_norm_alpha},
                         {"bias_norm_rr", rr.bias_norm_tilde},
                         {"ratio", rr.bias_norm_alpha > 0.0 ? rr.bias_norm_tilde / rr.bias_norm_alpha
                                                            : 0.0},
                         {"mean_pr", vector_to_json(rr.mean_alpha)},
                         {"mean_rr", vector_to_json(rr.mean_tilde)}};
}

void study_coupling(StudyContext& ctx) {
    const Experiment& exp = ctx.exp;
    const int d = exp.model.dim();
    const Eigen::VectorXd a =
        exp.config.sa.theta0.size() ? exp.config.sa.theta0 : Eigen::VectorXd::Zero(d);
    Eigen::VectorXd b;
    if (exp.config.theta0_b) {
        b = *exp.config.theta0_b;
    } else {
        b = a.array() + (exp.theta_star.norm() + 1.0) / std::sqrt(static_cast<double>(d));
    }
    const CoupledLog log = run_coupled(exp.config.sa, exp.model, exp.chain, exp.info, exp.noise, a, b,
                                       ctx.tau_alpha);
    CsvWriter csv(ctx.out / "coupling.csv", {"k", "mean_sq_diff"});
    for (size_t k = 0; k < log.mean_sq_diff.size(); ++k) {
        csv.field(static_cast<std::int64_t>(k)).field(log.mean_sq_diff[k]);
        csv.end_row();
    }
    note_artifact(ctx, ctx.out / "coupling.csv");

    ctx.results["coupling"] = {{"rho_hat", log.rho_hat},
                               {"log_intercept", log.log_intercept},
                               {"degenerate", log.degenerate},
                               {"fit_start", log.fit_start},
                               {"mu_hat", ctx.exp.assumptions.mu_hat},
                               {"contraction_bound", 1.0 - 0.5 * exp.config.sa.alpha *
                                                               ctx.exp.assumptions.mu_hat}};
}

void study_clt(StudyContext& ctx) {
    const Experiment& exp = ctx.exp;
    SAConfig cfg = exp.config.sa;
    if (cfg.batch_count == 0) cfg.batch_count = 32;
    if (cfg.batch_count < 8) fail(Err::TooFewBatches, "config: sa.batch_count must be at least 8");

    const EnsembleStats stats = run_ensemble(cfg, exp.model, exp.chain, exp.info, exp.noise,
                                             {cfg.horizon}, exp.theta_star, ctx.opts.n_threads);
    const std::int64_t batch_len = stats.clt_samples / cfg.batch_count;
    if (batch_len < 2 * ctx.tau_alpha) {
        ctx.summary.warnings.push_back(
            "batch length " + std::to_string(batch_len) + " is below 2 tau_alpha = " +
            std::to_string(2 * ctx.tau_alpha) + "; the long-run covariance may be underestimated");
    }

    const int d = exp.model.dim();
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
    for (const auto& c : stats.replica_bm_cov) sigma += c;
    sigma /= static_cast<double>(stats.replica_bm_cov.size());
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(d);
    for (const auto& m : stats.replica_clt_means) pooled += m;
    pooled /= static_cast<double>(stats.replica_clt_means.size());

    const CltReport report = clt_diagnostic(stats.replica_clt_means, pooled, sigma,
                                            static_cast<double>(stats.clt_samples));

    CsvWriter csv(ctx.out / "clt.csv", {"coord", "qq_corr", "cover90", "cover95"});
    for (int c = 0; c < d; ++c) {
        csv.field(static_cast<std::int64_t>(c))
            .field(report.qq_corr[static_cast<size_t>(c)])
            .field(report.cover90[static_cast<size_t>(c)])
            .field(report.cover95[static_cast<size_t>(c)]);
        csv.end_row();
    }
    note_artifact(ctx, ctx.out / "clt.csv");

    json qq = json::array();
    for (double v : report.qq_corr) qq.push_back(v);
    ctx.results["clt"] = {{"qq_corr", qq},
                          {"sigma_hat", matrix_to_json(sigma)},
                          {"clt_samples", stats.clt_samples}};
}

} // namespace

RunSummary run_experiment(Experiment& exp, const fs::path& out_dir, const RunOptions& opts) {
    fs::create_directories(out_dir);
    const auto t_start = std::chrono::steady_clock::now();

    RunSummary summary;
    json results;
    StudyContext ctx{exp, out_dir, opts, summary, results};
    ctx.tau_alpha = mixing_time(exp.chain, std::min(exp.config.sa.alpha, 0.5)).tau;

    // Stepsize sanity against the contraction requirement
    // alpha tau_alpha <= mu / ((940 + 96 beta) L^2); advisory only, the
    // constants are not claimed tight.
    {
        const double mu = exp.assumptions.mu_hat;
        const double l2 = std::sqrt(std::max(0.0, exp.noise.covariance_at(exp.theta_star).trace()));
        const double L = std::max(1.0, exp.assumptions.l1_hat + l2);
        const double beta_eff = std::isfinite(exp.config.sa.beta) ? exp.config.sa.beta
                                                                  : 2.0 * exp.theta_star.norm();
        const double limit = mu / ((940.0 + 96.0 * beta_eff) * L * L);
        const double atau = exp.config.sa.alpha * static_cast<double>(ctx.tau_alpha);
        if (mu > 0.0 && atau > limit) {
            summary.warnings.push_back(
                "alpha * tau_alpha = " + format_float(atau) +
                " exceeds the contraction constraint mu/((940+96*beta)*L^2) = " + format_float(limit));
        }
        if (std::isfinite(exp.config.sa.beta) && exp.config.sa.beta < 2.0 * exp.theta_star.norm()) {
            summary.warnings.push_back("projection radius beta = " + format_float(exp.config.sa.beta) +
                                       " is below 2*|theta*| = " +
                                       format_float(2.0 * exp.theta_star.norm()));
        }
    }

    const Study study = exp.config.study;
    std::map<std::string, double> timings;
    auto timed = [&](const char* name, auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (opts.verbose) {
            std::cerr << "[sabias] " << name << " done in " << timings[name] << "s\n";
        }
    };

    if (study == Study::Bias || study == Study::All) timed("bias", [&] { study_bias(ctx); });
    if (study == Study::Moments || study == Study::Bias || study == Study::All) {
        timed("moments", [&] { study_moments(ctx); });
    }
    if (study == Study::RR || study == Study::All) timed("rr", [&] { study_rr(ctx); });
    if (study == Study::Coupling || study == Study::All) timed("coupling", [&] { study_coupling(ctx); });
    if (study == Study::Clt || study == Study::All) timed("clt", [&] { study_clt(ctx); });

    json manifest;
    manifest["version"] = kVersion;
    manifest["config_hash"] = fnv1a_hex(exp.config.raw_json);
    manifest["seed"] = exp.config.sa.seed;
    manifest["study"] = study_name(study);
    manifest["theta_star"] = vector_to_json(exp.theta_star);
    manifest["tau_alpha"] = ctx.tau_alpha;
    manifest["assumptions"] = {{"mu_hat", exp.assumptions.mu_hat},
                               {"l1_hat", exp.assumptions.l1_hat},
                               {"sup_g0", exp.assumptions.sup_g0},
                               {"hess_lip_hat", exp.assumptions.hess_lip_hat},
                               {"pass", exp.assumptions.pass}};
    manifest["ergodicity_fit"] = {{"R", exp.info.ergodicity_fit.R}, {"r", exp.info.ergodicity_fit.r}};
    manifest["warnings"] = summary.warnings;
    manifest["results"] = results;
    json jt;
    for (const auto& [k, v] : timings) jt[k] = v;
    manifest["timings_seconds"] = jt;
    manifest["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    std::ofstream mout(out_dir / "manifest.json");
    mout << manifest.dump(2) << '\n';
    summary.artifacts.push_back(out_dir / "manifest.json");

    for (const auto& w : summary.warnings) std::cerr << "WARN: " << w << '\n';
    return summary;
}

RunSummary run_experiment(const fs::path& config_path, const fs::path& out_dir,
                          const RunOptions& opts) {
    Experiment exp = build_experiment(load_config(config_path));
    return run_experiment(exp, out_dir, opts);
}

std::filesystem::path emit_report(const fs::path& out_dir) {
    const fs::path manifest_path = out_dir / "manifest.json";
    if (!fs::exists(manifest_path)) fail(Err::MissingArtifacts, "no manifest.json in " + out_dir.string());
    json manifest;
    try {
        manifest = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        fail(Err::MissingArtifacts, std::string("manifest.json unreadable: ") + e.what());
    }
    const json results = manifest.value("results", json::object());
    if (results.empty()) fail(Err::MissingArtifacts, "manifest has no study results");

    std::ostringstream md;
    md << "# Experiment report\n\n";
    md << "- config hash: `" << manifest.value("config_hash", std::string("?")) << "`\n";
    md << "- seed: " << manifest.value("seed", 0ULL) << "\n";
    md << "- study: " << manifest.value("study", std::string("?")) << "\n";
    md << "- tau_alpha: " << manifest.value("tau_alpha", 0) << "\n\n";

    if (results.contains("bias")) {
        const json& b = results["bias"];
        md << "## Bias decomposition vs Monte Carlo\n\n";
        md << "| component | value (coord 0..d-1) |\n|---|---|\n";
        for (const char* name : {"b_m", "b_n", "b_c", "b_total"}) {
            md << "| " << name << " |";
            for (const auto& v : b[name]) md << ' ' << v.get<double>();
            md << " |\n";
        }
        md << "| mc_slope |";
        for (const auto& v : b["mc_slope"]) md << ' ' << v.get<double>();
        md << " |\n| mc_slope 2*stderr |";
        for (const auto& v : b["mc_stderr"]) md << ' ' << 2.0 * v.get<double>();
        md << " |\n\n";
    }
    if (results.contains("rr")) {
        const json& r = results["rr"];
        md << "## Tail averaging vs Richardson-Romberg\n\n";
        md << "| estimator | bias norm |\n|---|---|\n";
        md << "| PR (alpha) | " << r.value("bias_norm_pr", 0.0) << " |\n";
        md << "| RR | " << r.value("bias_norm_rr", 0.0) << " |\n";
        md << "| ratio RR/PR | " << r.value("ratio", 0.0) << " |\n\n";
    }
    if (results.contains("coupling")) {
        const json& c = results["coupling"];
        md << "## Coupling contraction\n\n";
        md << "- fitted rho_hat: " << c.value("rho_hat", 0.0) << "\n";
        md << "- bound 1 - alpha*mu_hat/2: " << c.value("contraction_bound", 0.0) << "\n";
        md << "- mu_hat: " << c.value("mu_hat", 0.0) << "\n\n";
    }
    if (results.contains("clt")) {
        const json& c = results["clt"];
        md << "## CLT diagnostic\n\n- qq correlations:";
        for (const auto& v : c["qq_corr"]) md << ' ' << v.get<double>();
        md << "\n\n";
    }
    if (results.contains("moments")) {
        const json& m = results["moments"];
        md << "## Steady-state moments\n\n- tail E|theta-theta*|^(2p), p=1..:";
        for (const auto& v : m["tail_m2p"]) md << ' ' << v.get<double>();
        md << "\n";
    }

    const fs::path report_path = out_dir / "report.md";
    std::ofstream out(report_path);
    out << md.str();
    return report_path;
}

} // namespace sabias
