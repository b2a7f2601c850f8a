#pragma once

#include <string>
#include <utility>

#include "dlvae/config.hpp"
#include "dlvae/datasets.hpp"
#include "dlvae/metrics.hpp"
#include "dlvae/trainer.hpp"

namespace dlvae {

// Generator dispatch, seeded from the master seed's data stream.
Dataset build_dataset(const ExperimentConfig& cfg);

// (train, val) split drawn from the dedicated split stream; regenerating
// with the same config reproduces the partition bit-exactly.
std::pair<Dataset, Dataset> build_splits(const ExperimentConfig& cfg, const Dataset& full);

// Model config with data_dim/n_classes filled in from the dataset.
ModelConfig resolve_model_config(const ExperimentConfig& cfg, const Dataset& data);

struct RunResult {
    std::string run_dir;
    TrainReport report;
    bool diverged = false;
};

// Trains under <out_root>/<name>-seed<k> and writes config.json,
// checkpoint.bin/.json, train_report.json and epochs.csv. A diverged run
// still leaves its partial artifacts behind.
RunResult run_train(const ExperimentConfig& cfg, const std::string& out_root);

// Recomputes the metrics enabled in the stored config on the regenerated
// validation split; writes eval_report.json and upserts ../results.csv.
EvalReport run_eval(const std::string& run_dir);

// Dataset blob + manifest recording the generator parameters verbatim.
void run_gendata(const ExperimentConfig& cfg, const std::string& out_dir);

// <run_dir>/export/: embeddings.csv, reconstructions.csv, curves.csv and,
// for the additive benchmark, posterior_curves.csv with the analytic
// posterior moments next to the encoder outputs.
void export_plotdata(const std::string& run_dir);

// Train/eval sweeps over seeds and model variants; each writes a
// mean-and-standard-deviation summary CSV under out_root. Diverged runs
// are excluded from the aggregates (n_runs column counts survivors).
void repro_table1(const std::string& out_root, int n_seeds);  // additive benchmark
void repro_table2(const std::string& out_root, int n_seeds);  // swiss roll
void repro_cmnist(const std::string& out_root, int n_seeds);  // colored digits

}  // namespace dlvae
