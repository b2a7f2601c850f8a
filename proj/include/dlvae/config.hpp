#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlvae/model.hpp"
#include "dlvae/trainer.hpp"

namespace dlvae {

struct DataConfig {
    std::string kind = "parametric";  // parametric | swiss_roll | colored_digits
    int n = 20000;                    // rows; source images for colored digits
    double noise_rate = 0.0;
    double jitter = 0.05;        // swiss roll position noise
    double length_scale = 21.0;  // swiss roll second coordinate range
    int downsample = 2;          // colored digits area-average factor
    double val_fraction = 0.1;
};

struct MetricsConfig {
    bool nll = true;
    int nll_samples = 16;
    bool kl_analytic = false;
    int quad_intervals = 4000;
    bool delta_bayes = false;
    double bayes_accuracy = 0.0;  // analytic optimum of the dataset
    bool mi = false;
    int mine_epochs = 500;
    bool marginal = false;  // color-marginal reconstruction RMSE
};

// Complete description of one experiment. The master seed fans out to
// dedicated data/init/train/val/split/metric streams at run time, so no
// stage's randomness can perturb another. model.data_dim and
// model.n_classes are derived from the dataset when a run starts and are
// not part of the serialized form.
struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    MetricsConfig metrics;
};

std::vector<std::string> preset_names();
ExperimentConfig preset_config(const std::string& name);

std::string model_kind_name(ModelKind kind);  // "discover" | "plain_vae" | "cond_vae"

// Strict parser: JSON syntax errors and unknown keys raise ConfigError with
// the offending location; missing keys fall back to defaults.
ExperimentConfig parse_config(const std::string& json_text);
std::string serialize_config(const ExperimentConfig& cfg);  // canonical form

ExperimentConfig load_config_file(const std::string& path);
void save_config_file(const ExperimentConfig& cfg, const std::string& path);

// Apply "dotted.path=value" assignments (e.g. "train.lr=0.005",
// "model.kind=plain_vae") on top of a config, revalidating the result.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& assignments);

}  // namespace dlvae
