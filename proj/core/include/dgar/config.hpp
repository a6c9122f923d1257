#pragma once

#include <string>
#include <vector>

#include "dgar/simulate.hpp"
#include "dgar/trainer.hpp"

namespace dgar::config {

// Everything a run can be configured with, one JSON file. Every key has a
// default; unknown keys are rejected with the list of valid keys for that
// section.
struct AppConfig {
    // dataset
    int domains = 3;
    int classes = 6;
    int64_t samples_per_class = 50;
    sim::Modality modality = sim::Modality::ofdm;
    double domain_spread = 1.0;
    double base_noise_std = 0.05;
    double val_fraction = 0.2;
    sim::GeneratorConfig gen;

    // model (D, L, C are taken from the container at use)
    nn::ModelConfig model{.adapters = 0};  // 0 = one adapter per source domain

    // train
    train::TrainConfig train;

    // sweep
    std::vector<double> lambda_grid{0.0, 0.1, 0.5, 1.0, 2.0};
    std::vector<double> gamma_grid{0.0, 0.1, 0.5, 1.0, 2.0};

    // bench
    int bench_runs = 5;
};

AppConfig parse_app_config(const std::string& json_text);
AppConfig load_app_config(const std::string& path);

}  // namespace dgar::config
