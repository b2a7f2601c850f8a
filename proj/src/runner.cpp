#include "dlvae/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "dlvae/io.hpp"
#include "json_util.hpp"

namespace dlvae {

namespace fs = std::filesystem;

Dataset build_dataset(const ExperimentConfig& cfg) {
    const std::uint64_t data_seed = stream_seed(cfg.seed, Stream::Data);
    const DataConfig& d = cfg.data;
    if (d.kind == "parametric") return gen_parametric(d.n, data_seed);
    if (d.kind == "swiss_roll") {
        SwissRollOptions o;
        o.noise_rate = d.noise_rate;
        o.jitter = d.jitter;
        o.length_scale = d.length_scale;
        return gen_swiss_roll(d.n, o, data_seed);
    }
    if (d.kind == "colored_digits") {
        std::vector<std::uint8_t> images;
        std::vector<int> digits;
        gen_glyph_digits(d.n, substream_seed(data_seed, 0), images, digits);
        ColorizeOptions o;
        o.noise_rate = d.noise_rate;
        o.downsample = d.downsample;
        return colorize_and_flip(images, digits, o, substream_seed(data_seed, 1));
    }
    throw ConfigError("unknown data kind '" + d.kind + "'");
}

std::pair<Dataset, Dataset> build_splits(const ExperimentConfig& cfg, const Dataset& full) {
    return split_train_val(full, cfg.data.val_fraction, stream_seed(cfg.seed, Stream::Split));
}

ModelConfig resolve_model_config(const ExperimentConfig& cfg, const Dataset& data) {
    ModelConfig mc = cfg.model;
    mc.data_dim = data.data_dim();
    mc.n_classes = data.n_classes;
    return mc;
}

RunResult run_train(const ExperimentConfig& cfg, const std::string& out_root) {
    Dataset full = build_dataset(cfg);
    auto [train, val] = build_splits(cfg, full);
    ModelConfig mc = resolve_model_config(cfg, full);
    ModelState model = build_model(mc, stream_seed(cfg.seed, Stream::Init));

    TrainConfig tc = cfg.train;
    tc.seed = stream_seed(cfg.seed, Stream::Train);
    tc.val_seed = stream_seed(cfg.seed, Stream::Val);

    RunResult res;
    res.run_dir =
        (fs::path(out_root) / (cfg.name + "-seed" + std::to_string(cfg.seed))).string();
    fs::create_directories(res.run_dir);
    save_config_file(cfg, res.run_dir + "/config.json");

    Trainer trainer(model, tc);
    res.report = trainer.fit(train, val);
    res.diverged = res.report.stop_reason == "diverged";
    save_checkpoint(model, res.run_dir);
    write_train_report(res.report, res.run_dir);
    return res;
}

EvalReport run_eval(const std::string& run_dir) {
    const std::string cfg_path = run_dir + "/config.json";
    if (!fs::exists(cfg_path)) throw IoError("missing artifact " + cfg_path);
    ExperimentConfig cfg = load_config_file(cfg_path);
    ModelState model = load_checkpoint(run_dir);

    Dataset val = build_splits(cfg, build_dataset(cfg)).second;
    const std::uint64_t ms = stream_seed(cfg.seed, Stream::Metric);

    EvalReport r;
    if (cfg.metrics.nll) {
        Rng rng(substream_seed(ms, 0));
        r.nll = eval_nll(model, val, cfg.metrics.nll_samples, rng, &r.nll_se);
    }
    if (cfg.metrics.kl_analytic) {
        ParametricKl k = eval_kl_analytic_parametric(model, val, cfg.metrics.quad_intervals);
        r.kl_z = k.kl_z;
        r.kl_w = k.kl_w;
        r.has_kl_w = k.has_kl_w;
    }
    if (cfg.metrics.delta_bayes)
        r.delta_bayes =
            delta_bayes(model, val, cfg.metrics.bayes_accuracy, substream_seed(ms, 1));
    if (cfg.metrics.mi) {
        Rng rng(substream_seed(ms, 2));
        LatentPair lat = latent_embeddings(model, val, false, rng);
        MineConfig mcfg;
        mcfg.epochs = cfg.metrics.mine_epochs;
        mcfg.seed = substream_seed(ms, 3);
        MineResult mi = mine_mi(lat.z, lat.w, mcfg);
        r.mi_zw = mi.clamped;
        r.mi_zw_raw = mi.raw;
        r.mi_se = mi.se;
    }
    if (cfg.metrics.marginal) {
        Tensor targets = colored_digit_marginal(val);
        if (model.config.kind == ModelKind::CondVae) {
            r.marginal_rmse = marginal_proxy_rmse(model, val, targets);
            r.marginal_is_proxy = true;
        } else {
            r.marginal_rmse = marginal_rmse(model, val, targets);
        }
    }

    write_eval_report(r, cfg, run_dir);
    fs::path root = fs::path(run_dir).parent_path();
    if (root.empty()) root = ".";
    upsert_results_csv(r, cfg, (root / "results.csv").string());
    return r;
}

void run_gendata(const ExperimentConfig& cfg, const std::string& out_dir) {
    Dataset d = build_dataset(cfg);
    save_dataset(d, out_dir);

    // stamp the generator parameters into the manifest so the blob is
    // reproducible from its own description
    detail::json manifest = detail::json::parse(read_text_file(out_dir + "/data.json"));
    manifest["generator"] = detail::json{{"kind", cfg.data.kind},
                                         {"n", cfg.data.n},
                                         {"noise_rate", cfg.data.noise_rate},
                                         {"jitter", cfg.data.jitter},
                                         {"length_scale", cfg.data.length_scale},
                                         {"downsample", cfg.data.downsample},
                                         {"seed", cfg.seed}};
    write_text_file(out_dir + "/data.json", manifest.dump(2) + "\n");
}

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double norm_pdf(double t) { return kInvSqrt2Pi * std::exp(-0.5 * t * t); }
double norm_cdf(double t) { return 0.5 * std::erfc(-t * 0.7071067811865475244); }

// moments of N(m, s2) truncated to the positive or negative axis
void trunc_moments(double m, double s2, bool positive, double& mean, double& var) {
    const double s = std::sqrt(s2);
    if (positive) {
        const double a = -m / s;
        const double lam = norm_pdf(a) / std::max(1.0 - norm_cdf(a), 1e-300);
        mean = m + s * lam;
        var = s2 * (1.0 + a * lam - lam * lam);
    } else {
        const double b = -m / s;
        const double lam = norm_pdf(b) / std::max(norm_cdf(b), 1e-300);
        mean = m - s * lam;
        var = s2 * (1.0 - b * lam - lam * lam);
    }
}

std::string csv_row(const std::vector<double>& vals) {
    std::string line;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (i) line += ",";
        line += fmt_g17(vals[i]);
    }
    return line + "\n";
}

}  // namespace

void export_plotdata(const std::string& run_dir) {
    const std::string cfg_path = run_dir + "/config.json";
    if (!fs::exists(cfg_path)) throw IoError("missing artifact " + cfg_path);
    ExperimentConfig cfg = load_config_file(cfg_path);
    ModelState model = load_checkpoint(run_dir);

    Dataset val = build_splits(cfg, build_dataset(cfg)).second;
    const bool is_discover = model.config.kind == ModelKind::Discover;
    const bool is_cond = model.config.kind == ModelKind::CondVae;
    const int d = val.data_dim();
    const int k = model.config.latent_dim;

    const std::string dir = run_dir + "/export";
    fs::create_directories(dir);

    DiagGaussianBatch qz = encode_z(model, val.x, is_cond ? &val.y : nullptr);
    DiagGaussianBatch qw;
    if (is_discover) qw = encode_w(model, val.x, val.y);

    // one scatter row per validation sample; x columns dropped for wide data
    {
        const bool with_x = d <= 16;
        std::string csv;
        if (with_x)
            for (int j = 0; j < d; ++j) csv += "x" + std::to_string(j + 1) + ",";
        csv += "y";
        for (int j = 0; j < k; ++j) csv += ",z" + std::to_string(j + 1);
        if (is_discover)
            for (int j = 0; j < k; ++j) csv += ",w" + std::to_string(j + 1);
        csv += "\n";
        for (int i = 0; i < val.size(); ++i) {
            std::vector<double> row;
            if (with_x)
                for (int j = 0; j < d; ++j) row.push_back(val.x.at(i, j));
            row.push_back(val.y[i]);
            for (int j = 0; j < k; ++j) row.push_back(qz.mu.at(i, j));
            if (is_discover)
                for (int j = 0; j < k; ++j) row.push_back(qw.mu.at(i, j));
            csv += csv_row(row);
        }
        write_text_file(dir + "/embeddings.csv", csv);
    }

    // mean-embedding reconstructions for the first rows
    {
        const int n_show = std::min(64, val.size());
        std::vector<int> head(n_show);
        std::iota(head.begin(), head.end(), 0);
        Dataset sub = take_rows(val, head);
        DiagGaussianBatch sz = encode_z(model, sub.x, is_cond ? &sub.y : nullptr);
        Tensor x_hat = decode_z(model, sz.mu, is_cond ? &sub.y : nullptr);
        Tensor x_tilde;
        if (is_discover) {
            DiagGaussianBatch sw = encode_w(model, sub.x, sub.y);
            x_tilde = decode_zw(model, sz.mu, sw.mu);
        }
        std::string csv;
        for (int j = 0; j < d; ++j) csv += (j ? "," : "") + ("x" + std::to_string(j + 1));
        for (int j = 0; j < d; ++j) csv += ",xhat" + std::to_string(j + 1);
        if (is_discover)
            for (int j = 0; j < d; ++j) csv += ",xtilde" + std::to_string(j + 1);
        csv += "\n";
        for (int i = 0; i < n_show; ++i) {
            std::vector<double> row;
            for (int j = 0; j < d; ++j) row.push_back(sub.x.at(i, j));
            for (int j = 0; j < d; ++j) row.push_back(x_hat.at(i, j));
            if (is_discover)
                for (int j = 0; j < d; ++j) row.push_back(x_tilde.at(i, j));
            csv += csv_row(row);
        }
        write_text_file(dir + "/reconstructions.csv", csv);
    }

    // training curves travel with the export so plots need only this dir
    write_text_file(dir + "/curves.csv", read_text_file(run_dir + "/epochs.csv"));

    // encoder posteriors against the analytic ones on an x grid; only the
    // additive benchmark has closed forms, and only label-free encoders
    // trace a single curve
    if (cfg.data.kind == "parametric" && !is_cond && k == 1) {
        std::string csv =
            "x,true_z_mu,true_z_var,enc_z_mu,enc_z_var";
        if (is_discover)
            csv += ",true_w_mu_y0,true_w_var_y0,true_w_mu_y1,true_w_var_y1"
                   ",enc_w_mu_y0,enc_w_var_y0,enc_w_mu_y1,enc_w_var_y1";
        csv += "\n";
        const int n_grid = 161;
        Tensor grid = Tensor::zeros({n_grid, 1});
        for (int i = 0; i < n_grid; ++i) grid.at(i, 0) = -4.0f + 0.05f * i;
        DiagGaussianBatch gz = encode_z(model, grid);
        DiagGaussianBatch gw0, gw1;
        if (is_discover) {
            gw0 = encode_w(model, grid, std::vector<int>(n_grid, 0));
            gw1 = encode_w(model, grid, std::vector<int>(n_grid, 1));
        }
        for (int i = 0; i < n_grid; ++i) {
            const double x = grid.at(i, 0);
            std::vector<double> row{x, x / 2.0, 0.5, gz.mu.at(i, 0), gz.var.at(i, 0)};
            if (is_discover) {
                double m0, v0, m1, v1;
                trunc_moments(x / 2.0, 0.5, false, m0, v0);
                trunc_moments(x / 2.0, 0.5, true, m1, v1);
                row.insert(row.end(), {m0, v0, m1, v1, gw0.mu.at(i, 0), gw0.var.at(i, 0),
                                       gw1.mu.at(i, 0), gw1.var.at(i, 0)});
            }
            csv += csv_row(row);
        }
        write_text_file(dir + "/posterior_curves.csv", csv);
    }
}

namespace {

struct Agg {
    double mean = 0.0;
    double sd = 0.0;
};

Agg aggregate(const std::vector<double>& v) {
    Agg a;
    if (v.empty()) return a;
    a.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - a.mean) * (x - a.mean);
        a.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return a;
}

std::string cells(const Agg& a) { return fmt_g17(a.mean) + "," + fmt_g17(a.sd); }

// Baseline variants train on the plain evidence bound; the loss weights in
// the preset belong to the full objective and would skew the comparison.
ExperimentConfig variant(ExperimentConfig cfg, ModelKind kind, const std::string& name) {
    cfg.model.kind = kind;
    cfg.name = name;
    if (kind != ModelKind::Discover) {
        cfg.train.weights = LossWeights{};
        cfg.train.weights.w_adv = 0.0f;
        cfg.metrics.mi = false;  // needs both latents
    }
    return cfg;
}

struct SweepResult {
    std::vector<EvalReport> reports;  // non-diverged runs only
    int n_runs = 0;
};

SweepResult run_sweep(const ExperimentConfig& base, int n_seeds, const std::string& out_root) {
    if (n_seeds < 1) throw ConfigError("seed count must be positive");
    SweepResult out;
    for (int s = 0; s < n_seeds; ++s) {
        ExperimentConfig cfg = base;
        cfg.seed = static_cast<std::uint64_t>(s);
        RunResult rr = run_train(cfg, out_root);
        if (rr.diverged) continue;
        out.reports.push_back(run_eval(rr.run_dir));
        ++out.n_runs;
    }
    return out;
}

std::vector<double> column(const SweepResult& s, double EvalReport::*field) {
    std::vector<double> v;
    for (const EvalReport& r : s.reports) v.push_back(r.*field);
    return v;
}

}  // namespace

void repro_table1(const std::string& out_root, int n_seeds) {
    ExperimentConfig base = preset_config("parametric");
    std::string csv =
        "model,nll_mean,nll_sd,kl_z_mean,kl_z_sd,delta_bayes_mean,delta_bayes_sd,"
        "n_runs\n";
    for (ModelKind kind : {ModelKind::Discover, ModelKind::PlainVae, ModelKind::CondVae}) {
        SweepResult s =
            run_sweep(variant(base, kind, "table1-" + model_kind_name(kind)), n_seeds, out_root);
        csv += model_kind_name(kind) + "," + cells(aggregate(column(s, &EvalReport::nll))) +
               "," + cells(aggregate(column(s, &EvalReport::kl_z))) + "," +
               cells(aggregate(column(s, &EvalReport::delta_bayes))) + "," +
               std::to_string(s.n_runs) + "\n";
    }
    write_text_file((fs::path(out_root) / "table1.csv").string(), csv);
}

void repro_table2(const std::string& out_root, int n_seeds) {
    ExperimentConfig base = preset_config("swiss_roll");
    std::string csv =
        "model,nll_mean,nll_sd,delta_bayes_mean,delta_bayes_sd,mi_zw_mean,mi_zw_sd,n_runs\n";
    for (ModelKind kind : {ModelKind::Discover, ModelKind::PlainVae}) {
        SweepResult s =
            run_sweep(variant(base, kind, "table2-" + model_kind_name(kind)), n_seeds, out_root);
        csv += model_kind_name(kind) + "," + cells(aggregate(column(s, &EvalReport::nll))) +
               "," + cells(aggregate(column(s, &EvalReport::delta_bayes))) + ",";
        if (kind == ModelKind::Discover)
            csv += cells(aggregate(column(s, &EvalReport::mi_zw)));
        else
            csv += ",";
        csv += "," + std::to_string(s.n_runs) + "\n";
    }
    write_text_file((fs::path(out_root) / "table2.csv").string(), csv);
}

void repro_cmnist(const std::string& out_root, int n_seeds) {
    ExperimentConfig base = preset_config("colored_digits");
    std::string csv =
        "model,noise_rate,marginal_rmse_mean,marginal_rmse_sd,nll_mean,nll_sd,n_runs\n";
    for (ModelKind kind : {ModelKind::Discover, ModelKind::CondVae}) {
        for (double rho : {0.1, 0.3}) {
            ExperimentConfig cfg = variant(
                base, kind,
                "colored-" + model_kind_name(kind) + "-rho" + (rho < 0.2 ? "01" : "03"));
            cfg.data.noise_rate = rho;
            SweepResult s = run_sweep(cfg, n_seeds, out_root);
            std::vector<double> rmse;
            for (const EvalReport& r : s.reports)
                if (r.marginal_rmse) rmse.push_back(*r.marginal_rmse);
            csv += model_kind_name(kind) + "," + fmt_g17(rho) + "," + cells(aggregate(rmse)) +
                   "," + cells(aggregate(column(s, &EvalReport::nll))) + "," +
                   std::to_string(s.n_runs) + "\n";
        }
    }
    write_text_file((fs::path(out_root) / "cmnist_table.csv").string(), csv);
}

}  // namespace dlvae
