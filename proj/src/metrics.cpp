#include "dlvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dlvae/distributions.hpp"
#include "dlvae/errors.hpp"
#include "dlvae/optim.hpp"

namespace dlvae {

namespace {

constexpr double kLn2Pi = 1.8378770664093454836;

Tensor gather_rows_f(const Tensor& src, const std::vector<int>& idx) {
    int d = src.dim(1);
    Tensor out = Tensor::zeros({static_cast<int>(idx.size()), d});
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = src.at(idx[i], j);
    return out;
}

// log-density of one row under a diagonal Gaussian, all in double
double row_logprob_gaussian(const float* x, const float* mu, const float* var, int d) {
    double acc = 0;
    for (int j = 0; j < d; ++j) {
        double diff = static_cast<double>(x[j]) - mu[j];
        double v = var ? static_cast<double>(var[j]) : 1.0;
        acc += -0.5 * (diff * diff / v + std::log(v) + kLn2Pi);
    }
    return acc;
}

double row_logprob_bernoulli(const float* x, const float* logits, int d) {
    double acc = 0;
    for (int j = 0; j < d; ++j) {
        double l = logits[j];
        double log_p = l > 0 ? -std::log1p(std::exp(-l)) : l - std::log1p(std::exp(l));
        double log_1mp = l > 0 ? -l - std::log1p(std::exp(-l)) : -std::log1p(std::exp(l));
        acc += x[j] * log_p + (1.0 - x[j]) * log_1mp;
    }
    return acc;
}

struct LogsumexpAcc {
    std::vector<double> mx;
    std::vector<double> sumexp;
    explicit LogsumexpAcc(int n)
        : mx(n, -std::numeric_limits<double>::infinity()), sumexp(n, 0.0) {}
    void absorb(int i, double w) {
        if (w > mx[i]) {
            sumexp[i] = sumexp[i] * std::exp(mx[i] - w) + 1.0;
            mx[i] = w;
        } else {
            sumexp[i] += std::exp(w - mx[i]);
        }
    }
    double value(int i, int n_samples) const {
        return mx[i] + std::log(sumexp[i]) - std::log(static_cast<double>(n_samples));
    }
};

}  // namespace

double eval_nll(ModelState& m, const Dataset& data, int n_importance_samples, Rng& rng,
                double* se_out) {
    if (n_importance_samples < 1) throw ContractError("need at least one importance sample");
    if (data.size() < 1) throw ContractError("empty evaluation set");
    const int n = data.size();
    const int d = m.config.latent_dim;
    const bool bernoulli = m.config.likelihood == Likelihood::Bernoulli;
    const Tensor& x = data.x;

    DiagGaussianBatch qz = m.config.kind == ModelKind::CondVae ? encode_z(m, x, &data.y)
                                                               : encode_z(m, x);
    DiagGaussianBatch qw;
    Tensor prior_w;  // per-row prior mean for the label-aware latent
    if (m.config.kind == ModelKind::Discover) {
        qw = encode_w(m, x, data.y);
        Tensor anchors = m.prior.initialized ? m.prior.mu
                                             : Tensor::zeros({m.config.n_classes, d});
        prior_w = gather_rows(anchors, data.y);
    }

    LogsumexpAcc acc(n);
    Tensor eps_z = Tensor::zeros({n, d});
    Tensor eps_w = Tensor::zeros({n, d});
    Tensor zero_mu = Tensor::zeros({d});
    for (int s = 0; s < n_importance_samples; ++s) {
        rng.fill_normal(eps_z.vec().data(), eps_z.numel());
        Tensor z = reparam_sample(qz.mu, qz.var, eps_z);
        Tensor w, lik;
        if (m.config.kind == ModelKind::Discover) {
            rng.fill_normal(eps_w.vec().data(), eps_w.numel());
            w = reparam_sample(qw.mu, qw.var, eps_w);
            lik = decode_zw_raw(m, z, w);
        } else if (m.config.kind == ModelKind::CondVae) {
            lik = decode_z_raw(m, z, &data.y);
        } else {
            lik = decode_z_raw(m, z);
        }
        for (int i = 0; i < n; ++i) {
            const float* xi = x.data() + static_cast<std::size_t>(i) * x.dim(1);
            const float* li = lik.data() + static_cast<std::size_t>(i) * lik.dim(1);
            double logw = bernoulli ? row_logprob_bernoulli(xi, li, x.dim(1))
                                    : row_logprob_gaussian(xi, li, nullptr, x.dim(1));
            const float* zi = z.data() + static_cast<std::size_t>(i) * d;
            logw += row_logprob_gaussian(zi, zero_mu.data(), nullptr, d);
            logw -= row_logprob_gaussian(zi, qz.mu.data() + static_cast<std::size_t>(i) * d,
                                         qz.var.data() + static_cast<std::size_t>(i) * d, d);
            if (m.config.kind == ModelKind::Discover) {
                const float* wi = w.data() + static_cast<std::size_t>(i) * d;
                logw += row_logprob_gaussian(
                    wi, prior_w.data() + static_cast<std::size_t>(i) * d, nullptr, d);
                logw -= row_logprob_gaussian(wi, qw.mu.data() + static_cast<std::size_t>(i) * d,
                                             qw.var.data() + static_cast<std::size_t>(i) * d, d);
            }
            acc.absorb(i, logw);
        }
    }

    double mean = 0, m2 = 0;
    for (int i = 0; i < n; ++i) {
        double nll_i = -acc.value(i, n_importance_samples);
        double delta = nll_i - mean;
        mean += delta / (i + 1);
        m2 += delta * (nll_i - mean);
    }
    if (se_out) *se_out = n > 1 ? std::sqrt(m2 / (n - 1) / n) : 0.0;
    return mean;
}

ParametricKl eval_kl_analytic_parametric(ModelState& m, const Dataset& data,
                                         int quad_intervals) {
    if (data.domain != "parametric")
        throw UnsupportedError("analytic posteriors are only known for the additive benchmark");
    if (m.config.latent_dim != 1 || m.config.data_dim != 1)
        throw ContractError("analytic posteriors assume scalar latents and observations");
    const int n = data.size();
    if (n < 1) throw ContractError("empty evaluation set");

    ParametricKl out;
    DiagGaussianBatch qz = m.config.kind == ModelKind::CondVae ? encode_z(m, data.x, &data.y)
                                                               : encode_z(m, data.x);

    // The additive model is invariant under jointly negating both latents (the
    // decoders absorb the flip), so a run lands in either gauge at random.
    // Align to the analytic convention before comparing.
    double cov = 0;
    for (int i = 0; i < n; ++i) cov += qz.mu.at(i, 0) * data.x.at(i, 0);
    const double sign = cov < 0 ? -1.0 : 1.0;

    double acc_z = 0;
    for (int i = 0; i < n; ++i)
        acc_z += kl_gaussian_1d(sign * qz.mu.at(i, 0), qz.var.at(i, 0),
                                0.5 * data.x.at(i, 0), 0.5);
    out.kl_z = acc_z / n;

    if (m.config.kind == ModelKind::Discover) {
        out.has_kl_w = true;
        DiagGaussianBatch qw = encode_w(m, data.x, data.y);
        double acc_w = 0;
        for (int i = 0; i < n; ++i) {
            TruncGaussian1D t;
            t.mu = 0.5 * data.x.at(i, 0);
            t.var = 0.5;
            t.side = data.y[i] == 1 ? TruncSide::Positive : TruncSide::Negative;
            acc_w += kl_gaussian_to_truncated_quad(sign * qw.mu.at(i, 0), qw.var.at(i, 0), t,
                                                   quad_intervals);
        }
        out.kl_w = acc_w / n;
    }
    return out;
}

double gnb_deviation(const Tensor& features, const std::vector<int>& y, int n_classes,
                     double bayes_optimal_accuracy, std::uint64_t seed) {
    if (!features.defined() || features.rank() != 2)
        throw DimensionError("gnb probe expects a [n, d] feature matrix");
    const int n = features.dim(0);
    const int d = features.dim(1);
    if (static_cast<int>(y.size()) != n) throw DimensionError("feature/label count mismatch");
    if (n < 10) throw ContractError("too few rows for a train/test split");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    int n_train = static_cast<int>(std::lround(0.7 * n));
    n_train = std::clamp(n_train, 1, n - 1);

    std::vector<std::vector<double>> mu(n_classes, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> var(n_classes, std::vector<double>(d, 0.0));
    std::vector<int> count(n_classes, 0);
    for (int k = 0; k < n_train; ++k) {
        int i = order[k];
        int c = y[i];
        if (c < 0 || c >= n_classes) throw InputError("label out of range in gnb probe");
        ++count[c];
        for (int j = 0; j < d; ++j) mu[c][j] += features.at(i, j);
    }
    int present = 0;
    for (int c = 0; c < n_classes; ++c) present += count[c] > 0;
    if (present < 2) throw ContractError("gnb probe needs at least two classes in the train split");
    for (int c = 0; c < n_classes; ++c)
        if (count[c] > 0)
            for (int j = 0; j < d; ++j) mu[c][j] /= count[c];
    for (int k = 0; k < n_train; ++k) {
        int i = order[k];
        int c = y[i];
        for (int j = 0; j < d; ++j) {
            double diff = features.at(i, j) - mu[c][j];
            var[c][j] += diff * diff;
        }
    }
    for (int c = 0; c < n_classes; ++c)
        for (int j = 0; j < d; ++j)
            var[c][j] = count[c] > 0 ? std::max(var[c][j] / count[c], 1e-6) : 1.0;

    int correct = 0, total = 0;
    for (int k = n_train; k < n; ++k) {
        int i = order[k];
        double best = -std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (int c = 0; c < n_classes; ++c) {
            if (count[c] == 0) continue;
            double score = std::log(static_cast<double>(count[c]) / n_train);
            for (int j = 0; j < d; ++j) {
                double diff = features.at(i, j) - mu[c][j];
                score += -0.5 * (diff * diff / var[c][j] + std::log(var[c][j]) + kLn2Pi);
            }
            if (score > best) {
                best = score;
                best_c = c;
            }
        }
        correct += best_c == y[i];
        ++total;
    }
    double acc = static_cast<double>(correct) / total;
    return std::fabs(acc - bayes_optimal_accuracy) * 100.0;
}

double delta_bayes(ModelState& m, const Dataset& data, double bayes_optimal_accuracy,
                   std::uint64_t seed) {
    Tensor recon;
    if (m.config.kind == ModelKind::Discover) {
        Tensor mu_z = encode_z(m, data.x).mu;
        Tensor mu_w = encode_w(m, data.x, data.y).mu;
        recon = decode_zw(m, mu_z, mu_w);
    } else if (m.config.kind == ModelKind::CondVae) {
        Tensor mu_z = encode_z(m, data.x, &data.y).mu;
        recon = decode_z(m, mu_z, &data.y);
    } else {
        recon = decode_z(m, encode_z(m, data.x).mu);
    }
    return gnb_deviation(recon, data.y, data.n_classes, bayes_optimal_accuracy, seed);
}

MineResult mine_mi(const Tensor& z, const Tensor& w, const MineConfig& cfg) {
    if (!z.defined() || !w.defined() || z.rank() != 2 || w.rank() != 2)
        throw DimensionError("mine_mi expects [n, d] sample matrices");
    if (z.dim(0) != w.dim(0)) throw DimensionError("mine_mi requires paired rows");
    const int n = z.dim(0);
    if (n < 16) throw ContractError("mine_mi needs at least 16 paired rows");
    if (cfg.holdout_fraction < 0.0 || cfg.holdout_fraction >= 1.0)
        throw ConfigError("holdout_fraction must lie in [0, 1)");

    Rng rng(cfg.seed);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    int n_hold = static_cast<int>(std::lround(cfg.holdout_fraction * n));
    std::vector<int> hold_idx(order.begin(), order.begin() + n_hold);
    std::vector<int> train_idx(order.begin() + n_hold, order.end());
    if (cfg.max_train_rows > 0 && static_cast<int>(train_idx.size()) > cfg.max_train_rows)
        train_idx.resize(cfg.max_train_rows);
    if (hold_idx.empty()) hold_idx = train_idx;  // diagnostics-only mode

    Tensor zt = gather_rows_f(z, train_idx);
    Tensor wt = gather_rows_f(w, train_idx);
    const int nt = zt.dim(0);

    Mlp trunk = make_mlp(z.dim(1) + w.dim(1), cfg.d_hidden, cfg.n_hidden, rng);
    Linear head = make_linear(cfg.d_hidden, 1, rng);
    std::vector<std::pair<std::string, Tensor*>> params;
    for (std::size_t l = 0; l < trunk.layers.size(); ++l) {
        params.push_back({"mine." + std::to_string(l) + ".W", &trunk.layers[l].W});
        params.push_back({"mine." + std::to_string(l) + ".b", &trunk.layers[l].b});
    }
    params.push_back({"mine.head.W", &head.W});
    params.push_back({"mine.head.b", &head.b});
    AdamW opt(params, AdamWConfig{cfg.lr, 0.9f, 0.999f, 1e-8f, 0.0f});

    auto statistic = [&](const Tensor& zz, const Tensor& ww) {
        return linear_fwd(head, mlp_fwd(trunk, concat_cols(zz, ww)));
    };

    double ma = 0.0;
    bool ma_init = false;
    std::vector<int> perm(nt);
    std::iota(perm.begin(), perm.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(perm);
        Tensor w_shuf = gather_rows_f(wt, perm);
        GradTape tape;
        TapeScope scope(tape);
        Tensor tj = statistic(zt, wt);
        Tensor tm = statistic(zt, w_shuf);

        float c = *std::max_element(tm.vec().begin(), tm.vec().end());
        double shifted_mean = 0;
        for (float v : tm.vec()) shifted_mean += std::exp(static_cast<double>(v) - c);
        shifted_mean /= nt;
        double batch_mean_exp = std::exp(static_cast<double>(c)) * shifted_mean;
        if (!std::isfinite(batch_mean_exp) || batch_mean_exp <= 0) break;
        ma = ma_init ? cfg.ma_momentum * ma + (1.0 - cfg.ma_momentum) * batch_mean_exp
                     : batch_mean_exp;
        ma_init = true;

        // gradient of the DV bound with the moving-average partition term:
        // d/dθ [ E[T] - (1/ma)·E[e^T] ] keeps the estimator from chasing its
        // own normalizer; the shift by c keeps e^T in float range.
        double scale = std::exp(static_cast<double>(c) - std::log(ma));
        if (!std::isfinite(scale)) break;
        Tensor partition = mul_scalar(mean(exp(add_scalar(tm, -c))),
                                      static_cast<float>(scale));
        Tensor obj = sub(mean(tj), partition);
        if (!std::isfinite(obj.item())) break;
        opt.zero_grad();
        tape.backward(neg(obj));
        opt.step();
    }

    Tensor zh = gather_rows_f(z, hold_idx);
    Tensor wh = gather_rows_f(w, hold_idx);
    const int nh = zh.dim(0);
    Rng hold_rng(substream_seed(cfg.seed, 0x6d696e65));  // independent shuffle stream
    std::vector<int> hperm(nh);
    std::iota(hperm.begin(), hperm.end(), 0);
    hold_rng.shuffle(hperm);
    Tensor tj = statistic(zh, wh);
    Tensor tm = statistic(zh, gather_rows_f(wh, hperm));

    double mean_t = 0, var_t = 0;
    for (float v : tj.vec()) mean_t += v;
    mean_t /= nh;
    for (float v : tj.vec()) var_t += (v - mean_t) * (v - mean_t);
    var_t = nh > 1 ? var_t / (nh - 1) : 0.0;

    float c = *std::max_element(tm.vec().begin(), tm.vec().end());
    double shifted_mean = 0, shifted_sq = 0;
    for (float v : tm.vec()) {
        double e = std::exp(static_cast<double>(v) - c);
        shifted_mean += e;
        shifted_sq += e * e;
    }
    shifted_mean /= nh;
    shifted_sq /= nh;
    double log_partition = c + std::log(shifted_mean);
    double var_e = std::max(shifted_sq - shifted_mean * shifted_mean, 0.0);

    MineResult res;
    res.raw = mean_t - log_partition;
    res.clamped = std::max(res.raw, 0.0);
    res.se = std::sqrt(var_t / nh +
                       var_e / (nh * shifted_mean * shifted_mean));
    return res;
}

LatentPair latent_embeddings(ModelState& m, const Dataset& data, bool sampled, Rng& rng) {
    if (m.config.kind != ModelKind::Discover)
        throw UnsupportedError("model has no label-aware latent to pair with");
    DiagGaussianBatch qz = encode_z(m, data.x);
    DiagGaussianBatch qw = encode_w(m, data.x, data.y);
    LatentPair out;
    if (sampled) {
        Tensor ez = Tensor::zeros({data.size(), m.config.latent_dim});
        Tensor ew = Tensor::zeros({data.size(), m.config.latent_dim});
        rng.fill_normal(ez.vec().data(), ez.numel());
        rng.fill_normal(ew.vec().data(), ew.numel());
        out.z = reparam_sample(qz.mu, qz.var, ez);
        out.w = reparam_sample(qw.mu, qw.var, ew);
    } else {
        out.z = qz.mu;
        out.w = qw.mu;
    }
    return out;
}

Tensor reconstruct_marginal(ModelState& m, const Dataset& data) {
    if (m.config.kind == ModelKind::CondVae)
        throw UnsupportedError(
            "label-conditioned decoder has no z-only reconstruction; use the "
            "label-marginalized proxy");
    return decode_z(m, encode_z(m, data.x).mu);
}

Tensor reconstruct_marginal_proxy(ModelState& m, const Dataset& data) {
    if (m.config.kind != ModelKind::CondVae) return reconstruct_marginal(m, data);
    Tensor mu_z = encode_z(m, data.x, &data.y).mu;
    Tensor acc;
    for (int c = 0; c < m.config.n_classes; ++c) {
        std::vector<int> labels(data.size(), c);
        Tensor dec = decode_z(m, mu_z, &labels);
        acc = acc.defined() ? add(acc, dec) : dec;
    }
    return mul_scalar(acc, 1.0f / m.config.n_classes);
}

namespace {

double rmse_against(const Tensor& recon, const Dataset& data, const Tensor& targets) {
    if (!targets.defined() || targets.rank() != 2 || targets.dim(0) != data.size() ||
        targets.dim(1) != data.data_dim())
        throw DimensionError("marginal targets must match the dataset layout");
    double acc = 0;
    const int count = recon.numel();
    for (int i = 0; i < count; ++i) {
        double diff = static_cast<double>(recon.data()[i]) - targets.data()[i];
        acc += diff * diff;
    }
    return std::sqrt(acc / count);
}

}  // namespace

double marginal_rmse(ModelState& m, const Dataset& data, const Tensor& targets) {
    return rmse_against(reconstruct_marginal(m, data), data, targets);
}

double marginal_proxy_rmse(ModelState& m, const Dataset& data, const Tensor& targets) {
    return rmse_against(reconstruct_marginal_proxy(m, data), data, targets);
}

Tensor colored_digit_marginal(const Dataset& data) {
    if (data.domain != "colored_digits")
        throw UnsupportedError("color marginals are defined for colored-digit data only");
    if (data.data_dim() % 3 != 0) throw DimensionError("expected three stacked color planes");
    const int plane = data.data_dim() / 3;
    Tensor out = Tensor::zeros({data.size(), data.data_dim()});
    for (int i = 0; i < data.size(); ++i) {
        const float* row = data.x.data() + static_cast<std::size_t>(i) * data.data_dim();
        float* t = out.data() + static_cast<std::size_t>(i) * data.data_dim();
        for (int p = 0; p < plane; ++p) {
            float shape = row[2 * plane + p];
            t[p] = 0.5f * shape;
            t[plane + p] = 0.5f * shape;
            t[2 * plane + p] = shape;
        }
    }
    return out;
}

double class_conditional_rmse(const Dataset& fit, const Tensor& fit_targets,
                              const Dataset& eval_set, const Tensor& eval_targets) {
    if (fit.digit_class.empty() || eval_set.digit_class.empty())
        throw ContractError("class-conditional baseline needs digit classes");
    if (!fit_targets.defined() || fit_targets.dim(0) != fit.size() ||
        eval_targets.dim(0) != eval_set.size() || fit_targets.dim(1) != eval_targets.dim(1))
        throw DimensionError("baseline targets must match their datasets");
    const int d = fit_targets.dim(1);
    int n_classes = 0;
    for (int c : fit.digit_class) n_classes = std::max(n_classes, c + 1);
    for (int c : eval_set.digit_class) n_classes = std::max(n_classes, c + 1);

    std::vector<std::vector<double>> mean(n_classes, std::vector<double>(d, 0.0));
    std::vector<double> global(d, 0.0);
    std::vector<int> count(n_classes, 0);
    for (int i = 0; i < fit.size(); ++i) {
        int c = fit.digit_class[i];
        ++count[c];
        for (int j = 0; j < d; ++j) {
            mean[c][j] += fit_targets.at(i, j);
            global[j] += fit_targets.at(i, j);
        }
    }
    for (int j = 0; j < d; ++j) global[j] /= fit.size();
    for (int c = 0; c < n_classes; ++c)
        if (count[c] > 0)
            for (int j = 0; j < d; ++j) mean[c][j] /= count[c];

    double acc = 0;
    for (int i = 0; i < eval_set.size(); ++i) {
        int c = eval_set.digit_class[i];
        const std::vector<double>& pred = count[c] > 0 ? mean[c] : global;
        for (int j = 0; j < d; ++j) {
            double diff = pred[j] - eval_targets.at(i, j);
            acc += diff * diff;
        }
    }
    return std::sqrt(acc / (static_cast<double>(eval_set.size()) * d));
}

}  // namespace dlvae
