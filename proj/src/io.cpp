#include "dlvae/io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "json_util.hpp"

namespace dlvae {

namespace fs = std::filesystem;
using detail::json;

std::uint32_t crc32_bytes(const void* data, std::size_t n) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("failed writing " + path);
}

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path);
}

struct BlobWriter {
    std::vector<std::uint8_t> bytes;

    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void i64(std::int64_t v) { raw(&v, 8); }
    void f32s(const float* p, std::size_t n) { raw(p, n * 4); }
    void i32s(const int* p, std::size_t n) { raw(p, n * 4); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
};

struct BlobReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;
    std::string what;

    void raw(void* p, std::size_t n) {
        if (pos + n > bytes.size()) throw IntegrityError(what + ": payload truncated");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::int64_t i64() {
        std::int64_t v;
        raw(&v, 8);
        return v;
    }
    void f32s(float* p, std::size_t n) { raw(p, n * 4); }
    void i32s(int* p, std::size_t n) { raw(p, n * 4); }
    std::string str() {
        std::uint32_t n = u32();
        if (n > 1u << 20) throw IntegrityError(what + ": implausible string length");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    void expect_end() {
        if (pos != bytes.size()) throw IntegrityError(what + ": trailing bytes in payload");
    }
};

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kDatasetVersion = 1;

// The payload is checksummed as a whole; the manifest records size + crc so
// corruption is caught before any field is trusted.
void verify_manifest_blob(const json& manifest, const std::vector<std::uint8_t>& blob,
                          const std::string& what) {
    if (!manifest.contains("bytes") || !manifest.contains("crc32"))
        throw IntegrityError(what + ": manifest lacks checksum fields");
    if (manifest.at("bytes").get<std::uint64_t>() != blob.size())
        throw IntegrityError(what + ": payload size does not match manifest");
    if (manifest.at("crc32").get<std::uint32_t>() != crc32_bytes(blob.data(), blob.size()))
        throw IntegrityError(what + ": payload checksum does not match manifest");
}

json parse_manifest(const std::string& path) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw IntegrityError(path + ": manifest is not valid JSON");
    return j;
}

}  // namespace

void save_checkpoint(ModelState& m, const std::string& dir) {
    fs::create_directories(dir);
    auto params = named_params(m);

    BlobWriter w;
    w.raw("DLVW", 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (auto& [name, t] : params) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t->rank()));
        for (int i = 0; i < t->rank(); ++i) w.u32(static_cast<std::uint32_t>(t->dim(i)));
        w.f32s(t->data(), t->numel());
    }
    const PriorMeans& prior = m.prior;
    w.u32(prior.initialized ? 1u : 0u);
    w.u32(static_cast<std::uint32_t>(m.config.n_classes));
    w.u32(static_cast<std::uint32_t>(m.config.latent_dim));
    if (prior.initialized) {
        w.f32s(prior.mu.data(), prior.mu.numel());
        for (long c : prior.counts) w.i64(c);
    }

    write_binary_file(dir + "/checkpoint.bin", w.bytes);

    json model_j = detail::model_config_to_json(m.config);
    model_j["data_dim"] = m.config.data_dim;
    model_j["n_classes"] = m.config.n_classes;
    json manifest{{"format", "dlvae-checkpoint"},
                  {"version", kCheckpointVersion},
                  {"model", model_j},
                  {"parameter_count", params.size()},
                  {"bytes", w.bytes.size()},
                  {"crc32", crc32_bytes(w.bytes.data(), w.bytes.size())}};
    write_text_file(dir + "/checkpoint.json", manifest.dump(2) + "\n");
}

ModelState load_checkpoint(const std::string& dir) {
    const std::string manifest_path = dir + "/checkpoint.json";
    if (!fs::exists(manifest_path)) throw IoError("missing artifact " + manifest_path);
    json manifest = parse_manifest(manifest_path);
    if (manifest.value("format", "") != "dlvae-checkpoint")
        throw IntegrityError(manifest_path + ": not a checkpoint manifest");
    if (manifest.value("version", 0u) != kCheckpointVersion)
        throw IntegrityError(manifest_path + ": unsupported checkpoint version");
    if (!manifest.contains("model"))
        throw IntegrityError(manifest_path + ": manifest lacks model config");

    json model_j = manifest.at("model");
    int data_dim = model_j.value("data_dim", 0);
    int n_classes = model_j.value("n_classes", 0);
    model_j.erase("data_dim");
    model_j.erase("n_classes");
    ModelConfig cfg = detail::model_config_from_json(model_j, "model");
    cfg.data_dim = data_dim;
    cfg.n_classes = n_classes;
    if (cfg.data_dim < 1 || cfg.n_classes < 2)
        throw IntegrityError(manifest_path + ": manifest lacks resolved dimensions");

    std::vector<std::uint8_t> blob = read_binary_file(dir + "/checkpoint.bin");
    verify_manifest_blob(manifest, blob, dir + "/checkpoint.bin");

    BlobReader r{blob, 0, dir + "/checkpoint.bin"};
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, "DLVW", 4) != 0)
        throw IntegrityError(r.what + ": bad magic");
    if (r.u32() != kCheckpointVersion)
        throw IntegrityError(r.what + ": unsupported payload version");

    ModelState m = build_model(cfg, 0);
    auto params = named_params(m);
    std::uint32_t n_params = r.u32();
    if (n_params != params.size())
        throw IntegrityError(r.what + ": parameter count does not match the model");
    for (auto& [name, t] : params) {
        std::string stored = r.str();
        if (stored != name)
            throw IntegrityError(r.what + ": parameter '" + stored + "' where '" + name +
                                 "' was expected");
        std::uint32_t rank = r.u32();
        if (static_cast<int>(rank) != t->rank())
            throw IntegrityError(r.what + ": rank mismatch for '" + name + "'");
        for (int i = 0; i < t->rank(); ++i)
            if (r.u32() != static_cast<std::uint32_t>(t->dim(i)))
                throw IntegrityError(r.what + ": shape mismatch for '" + name + "'");
        r.f32s(t->data(), t->numel());
    }
    bool prior_init = r.u32() != 0;
    std::uint32_t k = r.u32();
    std::uint32_t d = r.u32();
    if (k != static_cast<std::uint32_t>(cfg.n_classes) ||
        d != static_cast<std::uint32_t>(cfg.latent_dim))
        throw IntegrityError(r.what + ": prior block does not match the model");
    if (prior_init) {
        m.prior.mu = Tensor::zeros({cfg.n_classes, cfg.latent_dim});
        r.f32s(m.prior.mu.data(), m.prior.mu.numel());
        m.prior.counts.assign(cfg.n_classes, 0);
        for (int i = 0; i < cfg.n_classes; ++i) m.prior.counts[i] = r.i64();
        m.prior.initialized = true;
    }
    r.expect_end();
    return m;
}

void save_dataset(const Dataset& d, const std::string& dir) {
    if (!d.x.defined() || d.x.rank() != 2)
        throw ContractError("save_dataset: dataset holds no samples");
    if (static_cast<int>(d.y.size()) != d.size())
        throw ContractError("save_dataset: label column length mismatch");
    fs::create_directories(dir);

    const bool has_true_z = d.true_z.defined();
    const bool has_true_w = d.true_w.defined();
    const bool has_y_clean = !d.y_clean.empty();
    const bool has_digit = !d.digit_class.empty();

    BlobWriter w;
    w.raw("DLVD", 4);
    w.u32(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(d.size()));
    w.u32(static_cast<std::uint32_t>(d.data_dim()));
    w.f32s(d.x.data(), d.x.numel());
    w.i32s(d.y.data(), d.y.size());
    w.u32(has_true_z ? static_cast<std::uint32_t>(d.true_z.dim(1)) : 0u);
    if (has_true_z) w.f32s(d.true_z.data(), d.true_z.numel());
    w.u32(has_true_w ? static_cast<std::uint32_t>(d.true_w.dim(1)) : 0u);
    if (has_true_w) w.f32s(d.true_w.data(), d.true_w.numel());
    w.u32(has_y_clean ? 1u : 0u);
    if (has_y_clean) w.i32s(d.y_clean.data(), d.y_clean.size());
    w.u32(has_digit ? 1u : 0u);
    if (has_digit) w.i32s(d.digit_class.data(), d.digit_class.size());

    write_binary_file(dir + "/data.bin", w.bytes);

    json manifest{{"format", "dlvae-dataset"},
                  {"version", kDatasetVersion},
                  {"domain", d.domain},
                  {"n", d.size()},
                  {"data_dim", d.data_dim()},
                  {"n_classes", d.n_classes},
                  {"bytes", w.bytes.size()},
                  {"crc32", crc32_bytes(w.bytes.data(), w.bytes.size())}};
    write_text_file(dir + "/data.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
    const std::string manifest_path = dir + "/data.json";
    if (!fs::exists(manifest_path)) throw IoError("missing artifact " + manifest_path);
    json manifest = parse_manifest(manifest_path);
    if (manifest.value("format", "") != "dlvae-dataset")
        throw IntegrityError(manifest_path + ": not a dataset manifest");

    std::vector<std::uint8_t> blob = read_binary_file(dir + "/data.bin");
    verify_manifest_blob(manifest, blob, dir + "/data.bin");

    BlobReader r{blob, 0, dir + "/data.bin"};
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, "DLVD", 4) != 0) throw IntegrityError(r.what + ": bad magic");
    if (r.u32() != kDatasetVersion)
        throw IntegrityError(r.what + ": unsupported payload version");

    Dataset d;
    int n = static_cast<int>(r.u32());
    int dim = static_cast<int>(r.u32());
    if (n != manifest.value("n", -1) || dim != manifest.value("data_dim", -1))
        throw IntegrityError(r.what + ": dimensions disagree with manifest");
    d.domain = manifest.value("domain", "");
    d.n_classes = manifest.value("n_classes", 2);
    d.x = Tensor::zeros({n, dim});
    r.f32s(d.x.data(), d.x.numel());
    d.y.assign(n, 0);
    r.i32s(d.y.data(), n);
    if (std::uint32_t zd = r.u32()) {
        d.true_z = Tensor::zeros({n, static_cast<int>(zd)});
        r.f32s(d.true_z.data(), d.true_z.numel());
    }
    if (std::uint32_t wd = r.u32()) {
        d.true_w = Tensor::zeros({n, static_cast<int>(wd)});
        r.f32s(d.true_w.data(), d.true_w.numel());
    }
    if (r.u32()) {
        d.y_clean.assign(n, 0);
        r.i32s(d.y_clean.data(), n);
    }
    if (r.u32()) {
        d.digit_class.assign(n, 0);
        r.i32s(d.digit_class.data(), n);
    }
    r.expect_end();
    return d;
}

void write_train_report(const TrainReport& r, const std::string& dir) {
    fs::create_directories(dir);
    json j{{"epochs_run", r.epochs_run},
           {"best_epoch", r.best_epoch},
           {"best_val_loss", r.best_val_loss},
           {"stop_reason", r.stop_reason},
           {"skipped_steps", r.skipped_steps}};
    write_text_file(dir + "/train_report.json", j.dump(2) + "\n");

    std::string csv =
        "epoch,total,rec_z,rec_joint,kl_z,kl_w,adv_ce,adv_accuracy,val_loss,val_rec_nll\n";
    for (const EpochRecord& e : r.epochs) {
        csv += std::to_string(e.epoch);
        for (double v : {e.total, e.rec_z, e.rec_joint, e.kl_z, e.kl_w, e.adv_ce,
                         e.adv_accuracy, e.val_loss, e.val_rec_nll})
            csv += "," + fmt_g17(v);
        csv += "\n";
    }
    write_text_file(dir + "/epochs.csv", csv);
}

namespace {

json eval_report_json(const EvalReport& r, const ExperimentConfig& cfg) {
    json j{{"experiment", cfg.name}, {"seed", cfg.seed}};
    if (cfg.metrics.nll) {
        j["nll"] = r.nll;
        j["nll_se"] = r.nll_se;
    }
    if (cfg.metrics.kl_analytic) {
        j["kl_z"] = r.kl_z;
        if (r.has_kl_w) j["kl_w"] = r.kl_w;
    }
    if (cfg.metrics.delta_bayes) j["delta_bayes"] = r.delta_bayes;
    if (cfg.metrics.mi) {
        j["mi_zw"] = r.mi_zw;
        j["mi_zw_raw"] = r.mi_zw_raw;
        j["mi_se"] = r.mi_se;
    }
    if (r.marginal_rmse)
        j[r.marginal_is_proxy ? "marginal_rmse_proxy" : "marginal_rmse"] = *r.marginal_rmse;
    return j;
}

}  // namespace

void write_eval_report(const EvalReport& r, const ExperimentConfig& cfg,
                       const std::string& run_dir) {
    fs::create_directories(run_dir);
    write_text_file(run_dir + "/eval_report.json", eval_report_json(r, cfg).dump(2) + "\n");
}

void upsert_results_csv(const EvalReport& r, const ExperimentConfig& cfg,
                        const std::string& csv_path) {
    const std::string header =
        "experiment,seed,nll,nll_se,kl_z,kl_w,delta_bayes,mi_zw,marginal_rmse";

    std::vector<std::string> rows;
    if (fs::exists(csv_path)) {
        std::istringstream in(read_text_file(csv_path));
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (first) {
                first = false;
                if (line != header)
                    throw IntegrityError(csv_path + ": unexpected results header");
                continue;
            }
            if (!line.empty()) rows.push_back(line);
        }
    }

    const std::string key = cfg.name + "," + std::to_string(cfg.seed) + ",";
    std::string row = key;
    auto cell = [](bool present, double v) { return present ? fmt_g17(v) : std::string(); };
    row += cell(cfg.metrics.nll, r.nll) + ",";
    row += cell(cfg.metrics.nll, r.nll_se) + ",";
    row += cell(cfg.metrics.kl_analytic, r.kl_z) + ",";
    row += cell(cfg.metrics.kl_analytic && r.has_kl_w, r.kl_w) + ",";
    row += cell(cfg.metrics.delta_bayes, r.delta_bayes) + ",";
    row += cell(cfg.metrics.mi, r.mi_zw) + ",";
    row += cell(r.marginal_rmse.has_value(), r.marginal_rmse.value_or(0.0));

    bool replaced = false;
    for (std::string& existing : rows)
        if (existing.compare(0, key.size(), key) == 0) {
            existing = row;
            replaced = true;
        }
    if (!replaced) rows.push_back(row);

    std::string out = header + "\n";
    for (const std::string& line : rows) out += line + "\n";
    write_text_file(csv_path, out);
}

}  // namespace dlvae
