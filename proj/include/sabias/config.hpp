#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sabias/bias.hpp"
#include "sabias/drift.hpp"
#include "sabias/engine.hpp"
#include "sabias/noise.hpp"

namespace sabias {

enum class Study { Bias, RR, Coupling, Clt, Moments, All };

const char* study_name(Study s);

/// Parsed and schema-checked experiment description. Unknown keys anywhere in
/// the document are rejected. All failures throw ConfigInvalid with the
/// offending key in the message.
struct ExperimentConfig {
    Eigen::MatrixXd transition;
    std::vector<Observation> observations;

    std::string family;  // "linear" | "logistic" | "softplus"
    double lambda = 0.0;
    double iota = 1.0;
    std::optional<Eigen::VectorXd> theta_true;
    std::vector<Eigen::MatrixXd> linear_A;
    std::vector<Eigen::VectorXd> linear_c;

    std::string noise_variant = "none";  // "none" | "gaussian"
    Eigen::MatrixXd noise_covariance;
    std::optional<double> a0, a1;
    std::optional<Eigen::VectorXd> theta_ref;

    SAConfig sa;
    std::vector<double> alpha_grid;  // empty: single-alpha study
    bool share_grid_streams = false;
    std::optional<Eigen::VectorXd> theta0_b;  // second start point for coupled runs

    Study study = Study::All;
    std::string raw_json;  // canonical dump, hashed into the manifest
};

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Ready-to-run assembly: validated (and possibly response-augmented) chain,
/// model, noise, stationary analysis, and the solved root.
struct Experiment {
    ExperimentConfig config;
    FiniteChain chain;
    DriftModel model;
    NoiseField noise;
    StationaryInfo info;
    Eigen::VectorXd theta_star;
    AssumptionReport assumptions;
};

Experiment build_experiment(ExperimentConfig config);

} // namespace sabias
