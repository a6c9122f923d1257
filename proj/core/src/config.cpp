#include "dgar/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dgar/errors.hpp"

namespace dgar::config {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, const std::set<std::string>& valid) {
    if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (auto& [k, v] : j.items()) {
        if (valid.count(k)) continue;
        std::ostringstream os;
        os << "unknown key '" << k << "' in config section '" << section << "'; valid keys:";
        for (const auto& s : valid) os << " " << s;
        throw ConfigError(os.str());
    }
}

template <class T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_dataset(const json& j, AppConfig& c) {
    check_keys(j, "dataset",
               {"domains", "classes", "samples_per_class", "modality", "input_mode",
                "domain_spread", "base_noise_std", "val_fraction", "subcarriers", "packets",
                "f1_hz", "delta_f_hz", "packet_interval_s", "lfm_bandwidth_hz", "lfm_sweep_s",
                "lfm_f_start_hz", "lfm_sample_rate_hz", "lfm_bins", "lfm_snapshots",
                "lfm_snapshot_interval_s", "secondary_paths", "delay_scale_ofdm_s",
                "delay_scale_lfm_s"});
    get(j, "domains", c.domains);
    get(j, "classes", c.classes);
    get(j, "samples_per_class", c.samples_per_class);
    if (j.contains("modality"))
        c.modality = sim::modality_from_string(j.at("modality").get<std::string>());
    c.gen.modality = c.modality;
    if (j.contains("input_mode"))
        c.gen.input_mode = sim::input_mode_from_string(j.at("input_mode").get<std::string>());
    get(j, "domain_spread", c.domain_spread);
    get(j, "base_noise_std", c.base_noise_std);
    get(j, "val_fraction", c.val_fraction);
    get(j, "subcarriers", c.gen.ofdm.n_subcarriers);
    get(j, "packets", c.gen.ofdm.n_packets);
    get(j, "f1_hz", c.gen.ofdm.f1);
    get(j, "delta_f_hz", c.gen.ofdm.delta_f);
    get(j, "packet_interval_s", c.gen.ofdm.packet_interval);
    get(j, "lfm_bandwidth_hz", c.gen.lfm.bandwidth);
    get(j, "lfm_sweep_s", c.gen.lfm.sweep_duration);
    get(j, "lfm_f_start_hz", c.gen.lfm.f_start);
    get(j, "lfm_sample_rate_hz", c.gen.lfm.sample_rate);
    get(j, "lfm_bins", c.gen.lfm.n_bins);
    get(j, "lfm_snapshots", c.gen.lfm.n_snapshots);
    get(j, "lfm_snapshot_interval_s", c.gen.lfm.snapshot_interval);
    get(j, "secondary_paths", c.gen.secondary_paths);
    get(j, "delay_scale_ofdm_s", c.gen.delay_scale_ofdm);
    get(j, "delay_scale_lfm_s", c.gen.delay_scale_lfm);
}

void parse_model(const json& j, AppConfig& c) {
    check_keys(j, "model",
               {"hidden_dim", "activation", "backbone", "se_reduction", "adapter_hidden",
                "scorer_hidden", "adapters"});
    get(j, "hidden_dim", c.model.hidden_dim);
    if (j.contains("activation"))
        c.model.activation = nn::activation_from_string(j.at("activation").get<std::string>());
    if (j.contains("backbone"))
        c.model.backbone = nn::backbone_from_string(j.at("backbone").get<std::string>());
    get(j, "se_reduction", c.model.se_reduction);
    get(j, "adapter_hidden", c.model.adapter_hidden);
    get(j, "scorer_hidden", c.model.scorer_hidden);
    get(j, "adapters", c.model.adapters);
}

void parse_train(const json& j, AppConfig& c) {
    check_keys(j, "train",
               {"lambda", "gamma", "adapt_sign", "align", "mu_mode", "lr", "weight_decay",
                "batch_size", "max_epochs", "plateau_patience", "lr_halving_factor", "min_lr",
                "early_stop_patience", "learnable_hypers", "hyper_lr", "mmd_bandwidth",
                "cmd_order", "swd_slices"});
    get(j, "lambda", c.train.weights.lambda_);
    get(j, "gamma", c.train.weights.gamma_);
    get(j, "adapt_sign", c.train.weights.adapt_sign);
    if (j.contains("align"))
        c.train.align = loss::align_from_string(j.at("align").get<std::string>());
    if (j.contains("mu_mode"))
        c.train.mu_mode = loss::mu_mode_from_string(j.at("mu_mode").get<std::string>());
    get(j, "lr", c.train.lr);
    get(j, "weight_decay", c.train.weight_decay);
    get(j, "batch_size", c.train.batch_size);
    get(j, "max_epochs", c.train.max_epochs);
    get(j, "plateau_patience", c.train.plateau_patience);
    get(j, "lr_halving_factor", c.train.lr_halving_factor);
    get(j, "min_lr", c.train.min_lr);
    get(j, "early_stop_patience", c.train.early_stop_patience);
    get(j, "learnable_hypers", c.train.learnable_hypers);
    get(j, "hyper_lr", c.train.hyper_lr);
    get(j, "mmd_bandwidth", c.train.mmd_bandwidth);
    get(j, "cmd_order", c.train.cmd_order);
    get(j, "swd_slices", c.train.swd_slices);
}

void parse_sweep(const json& j, AppConfig& c) {
    check_keys(j, "sweep", {"lambda_grid", "gamma_grid"});
    get(j, "lambda_grid", c.lambda_grid);
    get(j, "gamma_grid", c.gamma_grid);
}

void parse_bench(const json& j, AppConfig& c) {
    check_keys(j, "bench", {"runs"});
    get(j, "runs", c.bench_runs);
}

}  // namespace

AppConfig parse_app_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "<root>", {"dataset", "model", "train", "sweep", "bench"});
    AppConfig c;
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), c);
    if (j.contains("model")) parse_model(j.at("model"), c);
    if (j.contains("train")) parse_train(j.at("train"), c);
    if (j.contains("sweep")) parse_sweep(j.at("sweep"), c);
    if (j.contains("bench")) parse_bench(j.at("bench"), c);
    if (c.val_fraction <= 0 || c.val_fraction >= 1)
        throw ConfigError("dataset.val_fraction must be in (0, 1)");
    return c;
}

AppConfig load_app_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_app_config(ss.str());
}

}  // namespace dgar::config
