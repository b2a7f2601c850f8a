#include "dlvae/model.hpp"

#include <cmath>
#include <cstdio>

namespace dlvae {

Linear make_linear(int in, int out, Rng& rng) {
    Linear lin;
    lin.W = Tensor::zeros({in, out});
    lin.b = Tensor::zeros({out});
    float bound = 1.0f / std::sqrt(static_cast<float>(in));
    rng.fill_uniform(lin.W.vec().data(), lin.W.numel(), -bound, bound);
    rng.fill_uniform(lin.b.vec().data(), lin.b.numel(), -bound, bound);
    lin.W.set_trainable(true);
    lin.b.set_trainable(true);
    return lin;
}

Mlp make_mlp(int in, int d_hidden, int n_hidden, Rng& rng) {
    Mlp mlp;
    int prev = in;
    for (int i = 0; i < n_hidden; ++i) {
        mlp.layers.push_back(make_linear(prev, d_hidden, rng));
        prev = d_hidden;
    }
    return mlp;
}

Tensor linear_fwd(const Linear& lin, const Tensor& x) {
    return add(matmul(x, lin.W), lin.b);
}

Tensor mlp_fwd(const Mlp& mlp, const Tensor& x) {
    Tensor h = x;
    for (const Linear& lin : mlp.layers) h = relu(linear_fwd(lin, h));
    return h;
}

namespace {

EncoderNet make_encoder(int in, int out, int d_hidden, int n_hidden, Rng& rng) {
    EncoderNet enc;
    enc.trunk = make_mlp(in, d_hidden, n_hidden, rng);
    enc.mu_head = make_linear(d_hidden, out, rng);
    enc.var_head = make_linear(d_hidden, out, rng);
    return enc;
}

DecoderNet make_decoder(int in, int out, int d_hidden, int n_hidden, Rng& rng) {
    DecoderNet dec;
    dec.trunk = make_mlp(in, d_hidden, n_hidden, rng);
    dec.out_head = make_linear(d_hidden, out, rng);
    return dec;
}

DiagGaussianBatch encoder_fwd(const EncoderNet& enc, const Tensor& x) {
    Tensor h = mlp_fwd(enc.trunk, x);
    DiagGaussianBatch out;
    out.mu = linear_fwd(enc.mu_head, h);
    out.var = add_scalar(softplus(linear_fwd(enc.var_head, h)), kVarianceFloor);
    return out;
}

Tensor decoder_fwd(const DecoderNet& dec, const Tensor& x) {
    return linear_fwd(dec.out_head, mlp_fwd(dec.trunk, x));
}

void collect_linear(std::vector<std::pair<std::string, Tensor*>>& out,
                    const std::string& prefix, Linear& lin) {
    out.emplace_back(prefix + ".W", &lin.W);
    out.emplace_back(prefix + ".b", &lin.b);
}

void collect_mlp(std::vector<std::pair<std::string, Tensor*>>& out,
                 const std::string& prefix, Mlp& mlp) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i)
        collect_linear(out, prefix + ".trunk." + std::to_string(i), mlp.layers[i]);
}

void collect_encoder(std::vector<std::pair<std::string, Tensor*>>& out,
                     const std::string& prefix, EncoderNet& enc) {
    collect_mlp(out, prefix, enc.trunk);
    collect_linear(out, prefix + ".mu", enc.mu_head);
    collect_linear(out, prefix + ".var", enc.var_head);
}

void collect_decoder(std::vector<std::pair<std::string, Tensor*>>& out,
                     const std::string& prefix, DecoderNet& dec) {
    collect_mlp(out, prefix, dec.trunk);
    collect_linear(out, prefix + ".out", dec.out_head);
}

void check_labels(const std::vector<int>& y, int n_classes) {
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0 || y[i] >= n_classes)
            throw InputError("label " + std::to_string(y[i]) + " at row " + std::to_string(i) +
                             " outside [0," + std::to_string(n_classes - 1) + "]");
    }
}

void check_finite(const Tensor& x, const char* what) {
    if (!x.all_finite()) throw InputError(std::string(what) + " contains NaN or inf");
}

}  // namespace

ModelState build_model(const ModelConfig& config, std::uint64_t init_seed) {
    if (config.data_dim <= 0 || config.latent_dim <= 0 || config.n_classes < 2 ||
        config.n_hidden <= 0 || config.d_hidden <= 0)
        throw ConfigError("model dimensions must be positive (n_classes >= 2)");
    Rng rng(init_seed);
    ModelState m;
    m.config = config;
    int dd = config.data_dim;
    int d = config.latent_dim;
    int K = config.n_classes;
    int dh = config.d_hidden;
    int nh = config.n_hidden;
    switch (config.kind) {
        case ModelKind::Discover:
            m.enc_z = make_encoder(dd, d, dh, nh, rng);
            m.dec_z = make_decoder(d, dd, dh, nh, rng);
            m.enc_w = make_encoder(dd + K, d, dh, nh, rng);
            m.dec_zw = make_decoder(2 * d, dd, dh, nh, rng);
            m.adv.lin = make_linear(dd, K, rng);
            break;
        case ModelKind::PlainVae:
            m.enc_z = make_encoder(dd, d, dh, nh, rng);
            m.dec_z = make_decoder(d, dd, dh, nh, rng);
            break;
        case ModelKind::CondVae:
            m.enc_z = make_encoder(dd + K, d, dh, nh, rng);
            m.dec_z = make_decoder(d + K, dd, dh, nh, rng);
            break;
    }
    m.prior.mu = Tensor::zeros({K, d});
    m.prior.counts.assign(K, 0);
    m.prior.initialized = false;
    return m;
}

std::vector<std::pair<std::string, Tensor*>> params_omega(ModelState& m) {
    std::vector<std::pair<std::string, Tensor*>> out;
    collect_encoder(out, "phi", m.enc_z);
    collect_decoder(out, "psi", m.dec_z);
    if (m.config.kind == ModelKind::Discover) {
        collect_encoder(out, "rho_enc", m.enc_w);
        collect_decoder(out, "eta", m.dec_zw);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor*>> params_adversary(ModelState& m) {
    std::vector<std::pair<std::string, Tensor*>> out;
    if (m.config.kind == ModelKind::Discover) collect_linear(out, "beta.lin", m.adv.lin);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> named_params(ModelState& m) {
    auto out = params_omega(m);
    auto adv = params_adversary(m);
    out.insert(out.end(), adv.begin(), adv.end());
    return out;
}

std::size_t parameter_count(ModelState& m) {
    std::size_t n = 0;
    for (auto& [name, t] : named_params(m)) n += t->numel();
    return n;
}

Tensor one_hot(const std::vector<int>& y, int n_classes) {
    check_labels(y, n_classes);
    Tensor out = Tensor::zeros({static_cast<int>(y.size()), n_classes});
    for (std::size_t i = 0; i < y.size(); ++i)
        out.at(static_cast<int>(i), y[i]) = 1.0f;
    return out;
}

DiagGaussianBatch encode_z(const ModelState& m, const Tensor& x, const std::vector<int>* y) {
    check_finite(x, "encoder input");
    if (m.config.kind == ModelKind::CondVae) {
        if (!y) throw UnsupportedError("conditional model: encode_z requires labels");
        return encoder_fwd(m.enc_z, concat_cols(x, one_hot(*y, m.config.n_classes)));
    }
    if (y) throw ContractError("labels passed to an unconditional encoder");
    return encoder_fwd(m.enc_z, x);
}

DiagGaussianBatch encode_w(const ModelState& m, const Tensor& x, const std::vector<int>& y) {
    if (m.config.kind != ModelKind::Discover)
        throw UnsupportedError("model has no condition-aware encoder");
    check_finite(x, "encoder input");
    if (static_cast<int>(y.size()) != x.dim(0))
        throw DimensionError("labels/batch size mismatch");
    return encoder_fwd(m.enc_w, concat_cols(x, one_hot(y, m.config.n_classes)));
}

Tensor decode_z_raw(const ModelState& m, const Tensor& z, const std::vector<int>* y) {
    if (m.config.kind == ModelKind::CondVae) {
        if (!y) throw UnsupportedError("conditional model: z-only decoding is undefined");
        return decoder_fwd(m.dec_z, concat_cols(z, one_hot(*y, m.config.n_classes)));
    }
    if (y) throw ContractError("labels passed to an unconditional decoder");
    return decoder_fwd(m.dec_z, z);
}

Tensor decode_z(const ModelState& m, const Tensor& z, const std::vector<int>* y) {
    Tensor raw = decode_z_raw(m, z, y);
    return m.config.likelihood == Likelihood::Bernoulli ? sigmoid(raw) : raw;
}

Tensor decode_zw_raw(const ModelState& m, const Tensor& z, const Tensor& w) {
    if (m.config.kind != ModelKind::Discover)
        throw UnsupportedError("model has no joint decoder");
    return decoder_fwd(m.dec_zw, concat_cols(z, w));
}

Tensor decode_zw(const ModelState& m, const Tensor& z, const Tensor& w) {
    Tensor raw = decode_zw_raw(m, z, w);
    return m.config.likelihood == Likelihood::Bernoulli ? sigmoid(raw) : raw;
}

Tensor classify_reconstruction(const ModelState& m, const Tensor& x_hat) {
    if (m.config.kind != ModelKind::Discover)
        throw UnsupportedError("model has no adversary");
    return log_softmax(linear_fwd(m.adv.lin, x_hat));
}

Tensor estimate_class_means(const Tensor& z, const std::vector<int>& y, int n_classes,
                            PriorMeans& prior, bool detach, bool update_running) {
    if (z.rank() != 2) throw DimensionError("class means expect a [n,d] batch");
    int n = z.dim(0), d = z.dim(1);
    if (static_cast<int>(y.size()) != n) throw DimensionError("labels/batch size mismatch");
    check_labels(y, n_classes);
    if (prior.mu.dim(0) != n_classes || prior.mu.dim(1) != d)
        throw DimensionError("prior means shape does not match model");

    std::vector<int> n_k(n_classes, 0);
    for (int c : y) ++n_k[c];

    // Normalized one-hot selector: matmul keeps the batch means on tape so
    // gradient reaches z for the present classes.
    Tensor sel = Tensor::zeros({n_classes, n});
    for (int i = 0; i < n; ++i)
        sel.at(y[i], i) = 1.0f / static_cast<float>(n_k[y[i]]);
    Tensor batch_means = matmul(sel, z);

    // Global batch mean, first-step fallback for never-seen classes.
    std::vector<double> gmean(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gmean[j] += z.at(i, j);
    for (int j = 0; j < d; ++j) gmean[j] /= n;

    // EMA bookkeeping runs on detached values.
    if (update_running) {
        for (int k = 0; k < n_classes; ++k) {
            for (int j = 0; j < d; ++j) {
                float cur = prior.mu.at(k, j);
                float upd;
                if (n_k[k] > 0) {
                    float bm = batch_means.at(k, j);
                    upd = prior.counts[k] == 0
                              ? bm
                              : static_cast<float>(kPriorEmaMomentum * cur +
                                                   (1.0 - kPriorEmaMomentum) * bm);
                } else {
                    upd = prior.counts[k] == 0 ? static_cast<float>(gmean[j]) : cur;
                }
                prior.mu.at(k, j) = upd;
            }
            prior.counts[k] += n_k[k];
        }
        prior.initialized = true;
    }

    bool any_absent = false;
    for (int k = 0; k < n_classes; ++k)
        if (n_k[k] == 0) any_absent = true;

    if (detach) {
        // Same values as the taped path, just off tape.
        Tensor out = Tensor::zeros({n_classes, d});
        for (int k = 0; k < n_classes; ++k)
            for (int j = 0; j < d; ++j)
                out.at(k, j) = n_k[k] > 0 ? batch_means.at(k, j) : prior.mu.at(k, j);
        return out;
    }

    if (!any_absent) return batch_means;

    // Rows for absent classes come from the (constant) EMA fallback; present
    // rows keep their taped batch means.
    Tensor mask = Tensor::zeros({n_classes, d});
    Tensor fallback = Tensor::zeros({n_classes, d});
    for (int k = 0; k < n_classes; ++k)
        for (int j = 0; j < d; ++j) {
            if (n_k[k] > 0)
                mask.at(k, j) = 1.0f;
            else
                fallback.at(k, j) = prior.mu.at(k, j);
        }
    return add(mul(batch_means, mask), fallback);
}

Tensor gather_rows(const Tensor& means, const std::vector<int>& y) {
    if (means.rank() != 2) throw DimensionError("gather_rows expects a [K,d] matrix");
    return matmul(one_hot(y, means.dim(0)), means);
}

std::vector<int> argmax_rows(const Tensor& t) {
    if (t.rank() != 2) throw DimensionError("argmax_rows expects a rank-2 tensor");
    std::vector<int> out(t.dim(0));
    for (int i = 0; i < t.dim(0); ++i) {
        int best = 0;
        for (int j = 1; j < t.dim(1); ++j)
            if (t.at(i, j) > t.at(i, best)) best = j;
        out[i] = best;
    }
    return out;
}

ModelSnapshot snapshot_model(ModelState& m) {
    ModelSnapshot snap;
    for (auto& [name, t] : named_params(m)) snap.values.push_back(t->vec());
    snap.prior_mu = m.prior.mu.vec();
    snap.prior_counts = m.prior.counts;
    snap.prior_initialized = m.prior.initialized;
    return snap;
}

void restore_model(ModelState& m, const ModelSnapshot& snap) {
    auto params = named_params(m);
    if (params.size() != snap.values.size())
        throw ContractError("snapshot/model parameter group count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].second->vec().size() != snap.values[i].size())
            throw ContractError("snapshot shape mismatch at " + params[i].first);
        params[i].second->vec() = snap.values[i];
    }
    m.prior.mu.vec() = snap.prior_mu;
    m.prior.counts = snap.prior_counts;
    m.prior.initialized = snap.prior_initialized;
}

double accuracy(const Tensor& logprobs, const std::vector<int>& y) {
    if (logprobs.dim(0) != static_cast<int>(y.size()))
        throw DimensionError("labels/batch size mismatch");
    std::vector<int> pred = argmax_rows(logprobs);
    int hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (pred[i] == y[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(y.size());
}

}  // namespace dlvae
