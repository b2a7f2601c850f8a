#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dlvae/rng.hpp"
#include "dlvae/tensor.hpp"

namespace dlvae {

// Column-oriented sample store shared by generators, trainer and metrics.
// true_z/true_w/y_clean are populated only where the generator knows them;
// they feed oracle evaluations and never reach the model.
struct Dataset {
    Tensor x;  // [n, data_dim]
    std::vector<int> y;
    int n_classes = 2;
    std::string domain;  // "parametric", "swiss_roll", "colored_digits"

    Tensor true_z;  // undefined when not applicable
    Tensor true_w;
    std::vector<int> y_clean;      // pre-flip labels, empty when identical to y
    std::vector<int> digit_class;  // source digit for colored images

    int size() const { return x.defined() ? x.dim(0) : 0; }
    int data_dim() const { return x.defined() ? x.dim(1) : 0; }
};

Dataset take_rows(const Dataset& d, const std::vector<int>& idx);

// Partition [0,n) into consecutive batches after an optional shuffle. Every
// index appears exactly once; the tail batch may be short.
std::vector<std::vector<int>> batch_indices(int n, int batch_size, bool shuffle, Rng* rng);

std::pair<Dataset, Dataset> split_train_val(const Dataset& d, double val_fraction,
                                            std::uint64_t seed);

// --- generators --------------------------------------------------------

// x = z + w with z,w ~ N(0,1) and y = 1{w > 0}; latents retained.
Dataset gen_parametric(int n, std::uint64_t seed);

struct SwissRollOptions {
    double noise_rate = 0.0;  // label flip probability
    double jitter = 0.05;     // isotropic position noise
    double length_scale = 21.0;
};

// Classic 3-D roll (t cos t, length, t sin t), t in [1.5pi, 4.5pi], length
// uniform; the clean label splits the length coordinate at its median and
// observed labels flip independently at noise_rate.
Dataset gen_swiss_roll(int n, const SwissRollOptions& opts, std::uint64_t seed);

// --- image pipeline -----------------------------------------------------

struct IdxData {
    std::vector<int> shape;
    std::vector<std::uint8_t> bytes;
};

// Parses the big-endian IDX container used by the classic digit corpus
// (magic 0x801 for labels, 0x803 for images).
IdxData parse_idx(const std::vector<std::uint8_t>& raw);
IdxData load_idx_file(const std::string& path);

// Procedural stand-in for the digit corpus: 5x7 font glyphs rendered into
// 28x28 frames with random shifts and intensities.
void gen_glyph_digits(int n, std::uint64_t seed, std::vector<std::uint8_t>& images,
                      std::vector<int>& digits);

struct ColorizeOptions {
    double noise_rate = 0.1;  // probability the observed label contradicts the coloring
    int downsample = 2;       // area-average factor applied to 28x28 frames
};

// Duplicates every grayscale digit into a red-kept (clean label 1) and a
// green-kept (clean label 0) coloring; the blue channel always carries the
// digit shape. Observed labels flip at noise_rate. Output rows hold the
// red, green and blue planes concatenated, values in [0,1].
Dataset colorize_and_flip(const std::vector<std::uint8_t>& images28,
                          const std::vector<int>& digits, const ColorizeOptions& opts,
                          std::uint64_t seed);

// Binary serialization (manifest JSON + float32 blob), bit-exact round trip.
void save_dataset(const Dataset& d, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace dlvae
