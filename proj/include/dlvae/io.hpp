#pragma once

#include <string>

#include "dlvae/config.hpp"
#include "dlvae/metrics.hpp"
#include "dlvae/model.hpp"
#include "dlvae/trainer.hpp"

namespace dlvae {

// checkpoint.bin (parameters + prior state, native little-endian f32) and
// checkpoint.json (resolved model config, payload size, crc32). Loading
// verifies the checksum and every parameter name/shape against the rebuilt
// model; any mismatch raises IntegrityError.
void save_checkpoint(ModelState& m, const std::string& dir);
ModelState load_checkpoint(const std::string& dir);

// train_report.json plus epochs.csv (one row per epoch, %.17g columns).
void write_train_report(const TrainReport& r, const std::string& dir);

// eval_report.json inside run_dir; only metrics enabled in cfg appear.
void write_eval_report(const EvalReport& r, const ExperimentConfig& cfg,
                       const std::string& run_dir);

// Insert-or-replace the (experiment, seed) row of a shared results table.
void upsert_results_csv(const EvalReport& r, const ExperimentConfig& cfg,
                        const std::string& csv_path);

std::uint32_t crc32_bytes(const void* data, std::size_t n);

std::string read_text_file(const std::string& path);  // IoError with path
void write_text_file(const std::string& path, const std::string& text);

std::string fmt_g17(double v);  // shortest-stable "%.17g"

}  // namespace dlvae
