#include "sabias/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace sabias {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { fail(Err::ConfigInvalid, "config: " + msg); }

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.count(it.key())) bad("unknown key " + where + "." + it.key());
    }
}

const json& require(const json& obj, const std::string& where, const std::string& key) {
    auto it = obj.find(key);
    if (it == obj.end()) bad("missing field " + (where.empty() ? key : where + "." + key));
    return *it;
}

double as_number(const json& v, const std::string& what) {
    if (!v.is_number()) bad(what + " must be a number");
    return v.get<double>();
}

std::int64_t as_integer(const json& v, const std::string& what) {
    if (!v.is_number_integer()) bad(what + " must be an integer");
    return v.get<std::int64_t>();
}

Eigen::VectorXd as_vector(const json& v, const std::string& what) {
    if (!v.is_array() || v.empty()) bad(what + " must be a non-empty array of numbers");
    Eigen::VectorXd out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = as_number(v[i], what);
    return out;
}

Eigen::MatrixXd as_matrix(const json& v, const std::string& what) {
    if (!v.is_array() || v.empty()) bad(what + " must be an array of rows");
    const size_t rows = v.size();
    Eigen::MatrixXd out;
    for (size_t i = 0; i < rows; ++i) {
        const Eigen::VectorXd row = as_vector(v[i], what + " row " + std::to_string(i));
        if (i == 0) out.resize(static_cast<Eigen::Index>(rows), row.size());
        if (row.size() != out.cols()) bad(what + " rows have unequal lengths");
        out.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return out;
}

void parse_chain(const json& doc, ExperimentConfig& cfg) {
    const json& chain = require(doc, "", "chain");
    if (!chain.is_object()) bad("chain must be an object");
    reject_unknown(chain, "chain", {"transition", "observations"});
    cfg.transition = as_matrix(require(chain, "chain", "transition"), "chain.transition");

    if (chain.contains("observations")) {
        const json& obs = chain["observations"];
        if (!obs.is_array()) bad("chain.observations must be an array");
        for (size_t i = 0; i < obs.size(); ++i) {
            const json& rec = obs[i];
            if (!rec.is_object()) bad("chain.observations entries must be objects");
            reject_unknown(rec, "chain.observations[]", {"w", "y"});
            Observation o;
            o.w = as_vector(require(rec, "chain.observations[]", "w"), "chain.observations[].w");
            if (rec.contains("y")) {
                o.y = as_number(rec["y"], "chain.observations[].y");
                o.has_y = true;
            }
            cfg.observations.push_back(std::move(o));
        }
        if (cfg.observations.size() != static_cast<size_t>(cfg.transition.rows())) {
            bad("chain.observations length must match the number of states");
        }
    }
}

void parse_model(const json& doc, ExperimentConfig& cfg) {
    const json& model = require(doc, "", "model");
    if (!model.is_object()) bad("model must be an object");
    reject_unknown(model, "model", {"family", "lambda", "iota", "theta_true", "A", "c"});
    const json& fam = require(model, "model", "family");
    if (!fam.is_string()) bad("model.family must be a string");
    cfg.family = fam.get<std::string>();
    if (cfg.family != "linear" && cfg.family != "logistic" && cfg.family != "softplus") {
        bad("model.family must be one of linear, logistic, softplus");
    }
    if (model.contains("lambda")) cfg.lambda = as_number(model["lambda"], "model.lambda");
    if (model.contains("iota")) cfg.iota = as_number(model["iota"], "model.iota");
    if (model.contains("theta_true")) cfg.theta_true = as_vector(model["theta_true"], "model.theta_true");

    if (cfg.family == "linear") {
        const json& A = require(model, "model", "A");
        const json& c = require(model, "model", "c");
        // A: one matrix or an array of per-state matrices; c: one vector or
        // an array of per-state vectors.
        auto is_matrix_like = [](const json& v) { return v.is_array() && !v.empty() && v[0].is_array(); };
        if (is_matrix_like(A) && !A[0].empty() && A[0][0].is_array()) {
            for (size_t i = 0; i < A.size(); ++i) {
                cfg.linear_A.push_back(as_matrix(A[i], "model.A[" + std::to_string(i) + "]"));
            }
        } else {
            cfg.linear_A.push_back(as_matrix(A, "model.A"));
        }
        if (c.is_array() && !c.empty() && c[0].is_array()) {
            for (size_t i = 0; i < c.size(); ++i) {
                cfg.linear_c.push_back(as_vector(c[i], "model.c[" + std::to_string(i) + "]"));
            }
        } else {
            cfg.linear_c.push_back(as_vector(c, "model.c"));
        }
    }
}

void parse_noise(const json& doc, ExperimentConfig& cfg) {
    if (!doc.contains("noise")) return;
    const json& noise = doc["noise"];
    if (!noise.is_object()) bad("noise must be an object");
    reject_unknown(noise, "noise", {"variant", "covariance", "a0", "a1", "theta_ref"});
    const json& variant = require(noise, "noise", "variant");
    if (!variant.is_string()) bad("noise.variant must be a string");
    cfg.noise_variant = variant.get<std::string>();
    if (cfg.noise_variant != "none" && cfg.noise_variant != "gaussian") {
        bad("noise.variant must be none or gaussian");
    }
    if (cfg.noise_variant == "gaussian") {
        cfg.noise_covariance = as_matrix(require(noise, "noise", "covariance"), "noise.covariance");
        if (noise.contains("a0")) cfg.a0 = as_number(noise["a0"], "noise.a0");
        if (noise.contains("a1")) cfg.a1 = as_number(noise["a1"], "noise.a1");
        if (noise.contains("theta_ref")) cfg.theta_ref = as_vector(noise["theta_ref"], "noise.theta_ref");
        if (cfg.a1 && !cfg.a0) bad("noise.a1 requires noise.a0");
    }
}

void parse_sa(const json& doc, ExperimentConfig& cfg) {
    const json& sa = require(doc, "", "sa");
    if (!sa.is_object()) bad("sa must be an object");
    reject_unknown(sa, "sa",
                   {"alpha", "alpha_grid", "beta", "K", "k0", "replicas", "seed", "p_max", "thinning",
                    "batch_count", "x0", "theta0", "theta0_b", "share_grid_streams"});
    if (sa.contains("alpha")) cfg.sa.alpha = as_number(sa["alpha"], "sa.alpha");
    if (sa.contains("alpha_grid")) {
        const Eigen::VectorXd grid = as_vector(sa["alpha_grid"], "sa.alpha_grid");
        for (Eigen::Index i = 0; i < grid.size(); ++i) cfg.alpha_grid.push_back(grid[i]);
        if (cfg.sa.alpha <= 0.0) cfg.sa.alpha = cfg.alpha_grid.back();
    }
    if (!(cfg.sa.alpha > 0.0)) bad("one of sa.alpha or sa.alpha_grid is required");
    if (sa.contains("beta")) {
        if (sa["beta"].is_null()) {
            cfg.sa.beta = std::numeric_limits<double>::infinity();
        } else {
            cfg.sa.beta = as_number(sa["beta"], "sa.beta");
            if (!(cfg.sa.beta > 0.0)) bad("sa.beta must be positive (or null for no projection)");
        }
    }
    cfg.sa.horizon = as_integer(require(sa, "sa", "K"), "sa.K");
    cfg.sa.burn_in = as_integer(require(sa, "sa", "k0"), "sa.k0");
    cfg.sa.replicas = as_integer(require(sa, "sa", "replicas"), "sa.replicas");
    cfg.sa.seed = static_cast<std::uint64_t>(as_integer(require(sa, "sa", "seed"), "sa.seed"));
    if (sa.contains("p_max")) cfg.sa.p_max = static_cast<int>(as_integer(sa["p_max"], "sa.p_max"));
    if (sa.contains("thinning")) cfg.sa.thinning = as_integer(sa["thinning"], "sa.thinning");
    if (sa.contains("batch_count")) {
        cfg.sa.batch_count = static_cast<int>(as_integer(sa["batch_count"], "sa.batch_count"));
    }
    if (sa.contains("x0")) cfg.sa.x0_state = static_cast<int>(as_integer(sa["x0"], "sa.x0"));
    if (sa.contains("theta0")) cfg.sa.theta0 = as_vector(sa["theta0"], "sa.theta0");
    if (sa.contains("theta0_b")) cfg.theta0_b = as_vector(sa["theta0_b"], "sa.theta0_b");
    if (sa.contains("share_grid_streams")) {
        if (!sa["share_grid_streams"].is_boolean()) bad("sa.share_grid_streams must be a boolean");
        cfg.share_grid_streams = sa["share_grid_streams"].get<bool>();
    }
    if (cfg.sa.horizon <= 0 || cfg.sa.burn_in < 0 || cfg.sa.burn_in >= cfg.sa.horizon) {
        bad("need 0 <= sa.k0 < sa.K");
    }
    if (cfg.sa.replicas <= 0) bad("sa.replicas must be positive");
}

} // namespace

const char* study_name(Study s) {
    switch (s) {
        case Study::Bias: return "bias";
        case Study::RR: return "rr";
        case Study::Coupling: return "coupling";
        case Study::Clt: return "clt";
        case Study::Moments: return "moments";
        case Study::All: return "all";
    }
    return "unknown";
}

ExperimentConfig parse_config(const json& doc) {
    if (!doc.is_object()) bad("document must be an object");
    reject_unknown(doc, "", {"chain", "model", "noise", "sa", "study", "out_dir"});

    ExperimentConfig cfg;
    parse_chain(doc, cfg);
    parse_model(doc, cfg);
    parse_noise(doc, cfg);
    parse_sa(doc, cfg);

    const json& study = require(doc, "", "study");
    if (!study.is_string()) bad("study must be a string");
    const std::string tag = study.get<std::string>();
    if (tag == "bias") cfg.study = Study::Bias;
    else if (tag == "rr") cfg.study = Study::RR;
    else if (tag == "coupling") cfg.study = Study::Coupling;
    else if (tag == "clt") cfg.study = Study::Clt;
    else if (tag == "moments") cfg.study = Study::Moments;
    else if (tag == "all") cfg.study = Study::All;
    else bad("study must be one of bias, rr, coupling, clt, moments, all");

    cfg.raw_json = doc.dump();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) bad("cannot read " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        bad(std::string("not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

Experiment build_experiment(ExperimentConfig config) {
    const int n = static_cast<int>(config.transition.rows());

    int dim = 0;
    if (config.family == "linear") {
        dim = static_cast<int>(config.linear_A.front().rows());
    } else {
        if (config.observations.empty()) bad("GLM families need chain.observations with covariates");
        dim = static_cast<int>(config.observations.front().w.size());
    }

    DriftModel model = [&] {
        if (config.family == "linear") {
            if (config.linear_A.size() != 1 && config.linear_A.size() != static_cast<size_t>(n)) {
                bad("model.A must hold one matrix or one per state");
            }
            if (config.linear_c.size() != 1 && config.linear_c.size() != static_cast<size_t>(n)) {
                bad("model.c must hold one vector or one per state");
            }
            return DriftModel::linear(dim, LinearParams{config.linear_A, config.linear_c});
        }
        if (config.family == "logistic") return DriftModel::logistic(dim, config.lambda, config.lambda);
        return DriftModel::softplus(dim, config.iota, config.lambda, config.lambda);
    }();

    FiniteChain chain = validate_chain(config.transition, config.observations);

    // GLM families need a response per state; when the config supplies bare
    // covariates, fold Bernoulli responses into the state space.
    if (config.family != "linear") {
        const bool missing_y = std::any_of(chain.observations().begin(), chain.observations().end(),
                                           [](const Observation& o) { return !o.has_y; });
        if (missing_y) {
            if (!config.theta_true) bad("model.theta_true is required to augment responses");
            chain = augment_bernoulli_responses(chain, model, *config.theta_true);
        }
    }

    NoiseField noise = [&] {
        if (config.noise_variant == "none") return NoiseField::none(dim);
        if (config.noise_covariance.rows() != dim) bad("noise.covariance must be d x d");
        if (config.a0 || config.a1) {
            const Eigen::VectorXd ref =
                config.theta_ref ? *config.theta_ref : Eigen::VectorXd::Zero(dim);
            return NoiseField::gaussian_scaled(config.noise_covariance, config.a0.value_or(0.0),
                                               config.a1.value_or(0.0), ref);
        }
        return NoiseField::gaussian(config.noise_covariance);
    }();

    Experiment exp{std::move(config), std::move(chain), std::move(model), std::move(noise),
                   StationaryInfo{}, Eigen::VectorXd(), AssumptionReport{}};
    exp.info = analyze_chain(exp.chain);
    exp.theta_star = solve_theta_star(exp.model, exp.chain, exp.info).theta;
    const double box = 2.0 * exp.theta_star.norm() + 1.0;
    exp.assumptions = verify_assumptions(exp.model, exp.chain, exp.info, box, 200);
    return exp;
}

} // namespace sabias
