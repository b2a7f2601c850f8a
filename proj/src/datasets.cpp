#include "dlvae/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "dlvae/errors.hpp"

namespace dlvae {

namespace {

std::vector<int> gather_ints(const std::vector<int>& src, const std::vector<int>& idx) {
    if (src.empty()) return {};
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = src[idx[i]];
    return out;
}

Tensor gather_tensor_rows(const Tensor& src, const std::vector<int>& idx) {
    if (!src.defined()) return Tensor();
    int d = src.dim(1);
    Tensor out = Tensor::zeros({static_cast<int>(idx.size()), d});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::memcpy(out.data() + i * d, src.data() + static_cast<std::size_t>(idx[i]) * d,
                    sizeof(float) * static_cast<std::size_t>(d));
    return out;
}

}  // namespace

Dataset take_rows(const Dataset& d, const std::vector<int>& idx) {
    for (int i : idx)
        if (i < 0 || i >= d.size()) throw DimensionError("row index out of range");
    Dataset out;
    out.x = gather_tensor_rows(d.x, idx);
    out.y = gather_ints(d.y, idx);
    out.n_classes = d.n_classes;
    out.domain = d.domain;
    out.true_z = gather_tensor_rows(d.true_z, idx);
    out.true_w = gather_tensor_rows(d.true_w, idx);
    out.y_clean = gather_ints(d.y_clean, idx);
    out.digit_class = gather_ints(d.digit_class, idx);
    return out;
}

std::vector<std::vector<int>> batch_indices(int n, int batch_size, bool shuffle, Rng* rng) {
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    if (n < 0) throw ContractError("negative dataset size");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (shuffle) {
        if (!rng) throw ContractError("shuffle requested without an RNG");
        rng->shuffle(order);
    }
    std::vector<std::vector<int>> out;
    for (int start = 0; start < n; start += batch_size) {
        int stop = std::min(n, start + batch_size);
        out.emplace_back(order.begin() + start, order.begin() + stop);
    }
    return out;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& d, double val_fraction,
                                            std::uint64_t seed) {
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ConfigError("val_fraction must lie in [0,1)");
    int n = d.size();
    int n_val = static_cast<int>(std::lround(val_fraction * n));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<int> val_idx(order.begin(), order.begin() + n_val);
    std::vector<int> train_idx(order.begin() + n_val, order.end());
    // Keep row order stable within each side so splits are easy to inspect.
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    return {take_rows(d, train_idx), take_rows(d, val_idx)};
}

Dataset gen_parametric(int n, std::uint64_t seed) {
    if (n <= 0) throw ContractError("dataset size must be positive");
    Rng rng(seed);
    Dataset d;
    d.domain = "parametric";
    d.n_classes = 2;
    d.x = Tensor::zeros({n, 1});
    d.true_z = Tensor::zeros({n, 1});
    d.true_w = Tensor::zeros({n, 1});
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        float z = rng.normal();
        float w = rng.normal();
        d.true_z.at(i, 0) = z;
        d.true_w.at(i, 0) = w;
        d.x.at(i, 0) = z + w;
        d.y[i] = w > 0.0f ? 1 : 0;
    }
    return d;
}

Dataset gen_swiss_roll(int n, const SwissRollOptions& opts, std::uint64_t seed) {
    if (n <= 0) throw ContractError("dataset size must be positive");
    if (opts.noise_rate < 0.0 || opts.noise_rate > 0.5)
        throw ConfigError("noise_rate must lie in [0, 0.5]");
    Rng rng(seed);
    Dataset d;
    d.domain = "swiss_roll";
    d.n_classes = 2;
    d.x = Tensor::zeros({n, 3});
    d.true_z = Tensor::zeros({n, 2});  // manifold coordinates (t, length)
    d.y.resize(n);
    d.y_clean.resize(n);
    const double pi = 3.14159265358979323846;
    const double median_len = 0.5 * opts.length_scale;
    for (int i = 0; i < n; ++i) {
        double t = 1.5 * pi * (1.0 + 2.0 * rng.uniform_double());
        double len = opts.length_scale * rng.uniform_double();
        d.x.at(i, 0) = static_cast<float>(t * std::cos(t) + opts.jitter * rng.normal());
        d.x.at(i, 1) = static_cast<float>(len + opts.jitter * rng.normal());
        d.x.at(i, 2) = static_cast<float>(t * std::sin(t) + opts.jitter * rng.normal());
        d.true_z.at(i, 0) = static_cast<float>(t);
        d.true_z.at(i, 1) = static_cast<float>(len);
        d.y_clean[i] = len > median_len ? 1 : 0;
        bool flip = rng.uniform_double() < opts.noise_rate;
        d.y[i] = flip ? 1 - d.y_clean[i] : d.y_clean[i];
    }
    return d;
}

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& raw, std::size_t off) {
    return (static_cast<std::uint32_t>(raw[off]) << 24) |
           (static_cast<std::uint32_t>(raw[off + 1]) << 16) |
           (static_cast<std::uint32_t>(raw[off + 2]) << 8) |
           static_cast<std::uint32_t>(raw[off + 3]);
}

}  // namespace

IdxData parse_idx(const std::vector<std::uint8_t>& raw) {
    if (raw.size() < 4)
        throw IoError("idx: file too short for a magic number (" + std::to_string(raw.size()) +
                      " bytes)");
    std::uint32_t magic = read_be32(raw, 0);
    if ((magic & 0xFFFF0000u) != 0 || (magic & 0xFFu) == 0) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%08x", magic);
        throw IoError("idx: bad magic 0x" + std::string(buf) + " at offset 0");
    }
    std::uint32_t dtype = (magic >> 8) & 0xFFu;
    // only unsigned-byte payloads (0x08) are in scope
    if (dtype != 0x08)
        throw IoError("idx: unsupported element type at offset 2");
    std::uint32_t ndim = magic & 0xFFu;
    std::size_t header = 4 + 4 * static_cast<std::size_t>(ndim);
    if (raw.size() < header)
        throw IoError("idx: truncated dimension table, need " + std::to_string(header) +
                      " bytes, have " + std::to_string(raw.size()));
    IdxData out;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        std::uint32_t dim = read_be32(raw, 4 + 4 * i);
        out.shape.push_back(static_cast<int>(dim));
        count *= dim;
    }
    if (raw.size() != header + count)
        throw IoError("idx: payload length mismatch, expected " + std::to_string(header + count) +
                      " bytes, have " + std::to_string(raw.size()));
    out.bytes.assign(raw.begin() + static_cast<std::ptrdiff_t>(header), raw.end());
    return out;
}

IdxData load_idx_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    return parse_idx(raw);
}

namespace {

// 5x7 digit font, one row per glyph, LSB = leftmost pixel.
constexpr std::uint8_t kFont[10][7] = {
    {0x0E, 0x11, 0x19, 0x15, 0x13, 0x11, 0x0E},  // 0
    {0x04, 0x06, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x10, 0x08, 0x04, 0x02, 0x1F},  // 2
    {0x1F, 0x08, 0x04, 0x08, 0x10, 0x11, 0x0E},  // 3
    {0x08, 0x0C, 0x0A, 0x09, 0x1F, 0x08, 0x08},  // 4
    {0x1F, 0x01, 0x0F, 0x10, 0x10, 0x11, 0x0E},  // 5
    {0x0C, 0x02, 0x01, 0x0F, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x10, 0x08, 0x04, 0x02, 0x02, 0x02},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x1E, 0x10, 0x08, 0x06},  // 9
};

}  // namespace

void gen_glyph_digits(int n, std::uint64_t seed, std::vector<std::uint8_t>& images,
                      std::vector<int>& digits) {
    if (n <= 0) throw ContractError("dataset size must be positive");
    Rng rng(seed);
    images.assign(static_cast<std::size_t>(n) * 28 * 28, 0);
    digits.resize(n);
    for (int i = 0; i < n; ++i) {
        int digit = static_cast<int>(rng.uniform_int(10));
        digits[i] = digit;
        // 4x upscaled glyph is 20x28; random offset keeps it inside the frame
        int ox = 4 + static_cast<int>(rng.uniform_int(5)) - 2;
        int oy = static_cast<int>(rng.uniform_int(5)) - 2;
        float intensity = 0.75f + 0.25f * rng.uniform();
        std::uint8_t value = static_cast<std::uint8_t>(std::lround(255.0f * intensity));
        std::uint8_t* frame = images.data() + static_cast<std::size_t>(i) * 28 * 28;
        for (int r = 0; r < 7; ++r)
            for (int c = 0; c < 5; ++c) {
                if (!(kFont[digit][r] >> c & 1)) continue;
                for (int dr = 0; dr < 4; ++dr)
                    for (int dc = 0; dc < 4; ++dc) {
                        int rr = oy + 4 * r + dr;
                        int cc = ox + 4 * c + dc;
                        if (rr >= 0 && rr < 28 && cc >= 0 && cc < 28) frame[rr * 28 + cc] = value;
                    }
            }
    }
}

Dataset colorize_and_flip(const std::vector<std::uint8_t>& images28,
                          const std::vector<int>& digits, const ColorizeOptions& opts,
                          std::uint64_t seed) {
    if (opts.noise_rate < 0.0 || opts.noise_rate > 0.5)
        throw ConfigError("noise_rate must lie in [0, 0.5]");
    if (opts.downsample < 1 || 28 % opts.downsample != 0)
        throw ConfigError("downsample factor must divide 28");
    std::size_t n_src = images28.size() / (28 * 28);
    if (n_src * 28 * 28 != images28.size())
        throw DimensionError("image buffer is not a whole number of 28x28 frames");
    if (digits.size() != n_src) throw DimensionError("digit labels/image count mismatch");

    int side = 28 / opts.downsample;
    int plane = side * side;
    Rng rng(seed);
    Dataset d;
    d.domain = "colored_digits";
    d.n_classes = 2;
    int n_out = static_cast<int>(2 * n_src);
    d.x = Tensor::zeros({n_out, 3 * plane});
    d.y.resize(n_out);
    d.y_clean.resize(n_out);
    d.digit_class.resize(n_out);

    std::vector<float> small(static_cast<std::size_t>(plane));
    const float denom = 255.0f * opts.downsample * opts.downsample;
    for (std::size_t i = 0; i < n_src; ++i) {
        const std::uint8_t* frame = images28.data() + i * 28 * 28;
        for (int r = 0; r < side; ++r)
            for (int c = 0; c < side; ++c) {
                int acc = 0;
                for (int dr = 0; dr < opts.downsample; ++dr)
                    for (int dc = 0; dc < opts.downsample; ++dc)
                        acc += frame[(r * opts.downsample + dr) * 28 + c * opts.downsample + dc];
                small[r * side + c] = static_cast<float>(acc) / denom;
            }
        // red-kept coloring first (clean label 1), then green-kept (0)
        for (int variant = 0; variant < 2; ++variant) {
            int row = static_cast<int>(2 * i) + variant;
            int clean = variant == 0 ? 1 : 0;
            float* out = d.x.data() + static_cast<std::size_t>(row) * 3 * plane;
            for (int p = 0; p < plane; ++p) {
                out[p] = clean == 1 ? small[p] : 0.0f;          // red
                out[plane + p] = clean == 0 ? small[p] : 0.0f;  // green
                out[2 * plane + p] = small[p];                  // blue
            }
            d.y_clean[row] = clean;
            bool flip = rng.uniform_double() < opts.noise_rate;
            d.y[row] = flip ? 1 - clean : clean;
            d.digit_class[row] = digits[i];
        }
    }
    return d;
}

}  // namespace dlvae
