#include "dlvae/trainer.hpp"

#include <cmath>
#include <limits>

namespace dlvae {

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor logprob_rows(const ModelState& m, const Tensor& x, const Tensor& raw) {
    return m.config.likelihood == Likelihood::Bernoulli ? bernoulli_logprob_rows(x, raw)
                                                        : gaussian_unit_logprob_rows(x, raw);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void validate_weights(const LossWeights& w) {
    if (w.alpha1 < 0 || w.alpha2 < 0 || w.w_rec_joint < 0 || w.w_rec_z < 0 || w.w_adv < 0)
        throw ConfigError("loss weights must be non-negative");
}

LossZTerms loss_z(const ModelState& m, const DiagGaussianBatch& theta_z,
                  const Tensor& z_sample, const Tensor& x, const std::vector<int>* y_cond) {
    LossZTerms t;
    t.recon = mean(logprob_rows(m, x, decode_z_raw(m, z_sample, y_cond)));
    t.kl = mean(kl_std_normal_rows(theta_z.mu, theta_z.var));
    return t;
}

LossWTerms loss_w(const ModelState& m, const DiagGaussianBatch& theta_z,
                  const DiagGaussianBatch& theta_w, const Tensor& z_sample,
                  const Tensor& w_sample, const Tensor& x, const std::vector<int>& y,
                  const Tensor& prior_mu) {
    LossWTerms t;
    t.recon = mean(logprob_rows(m, x, decode_zw_raw(m, z_sample, w_sample)));
    t.kl_z = mean(kl_std_normal_rows(theta_z.mu, theta_z.var));
    t.kl_w = mean(kl_unit_var_prior_rows(theta_w.mu, theta_w.var, gather_rows(prior_mu, y)));
    return t;
}

Tensor adversarial_ce(const ModelState& m, const Tensor& x_hat, const std::vector<int>& y) {
    return nll_loss(classify_reconstruction(m, x_hat), y);
}

Tensor total_loss(const LossTerms& t, const LossWeights& w) {
    validate_weights(w);
    Tensor obj = add(mul_scalar(t.rec_z, w.w_rec_z), mul_scalar(t.rec_joint, w.w_rec_joint));
    obj = sub(obj, mul_scalar(t.kl_z, w.alpha1));
    obj = sub(obj, mul_scalar(t.kl_w, w.alpha2));
    obj = sub(obj, mul_scalar(t.adv_ce, w.w_adv));
    return obj;
}

NoisePair draw_noise(int n, int d, Rng& rng) {
    NoisePair p;
    p.eps_z = Tensor::zeros({n, d});
    p.eps_w = Tensor::zeros({n, d});
    rng.fill_normal(p.eps_z.vec().data(), p.eps_z.numel());
    rng.fill_normal(p.eps_w.vec().data(), p.eps_w.numel());
    return p;
}

ForwardCore discover_forward(ModelState& m, const Tensor& x, const std::vector<int>& y,
                             const NoisePair& eps, PriorMode prior_mode) {
    if (m.config.kind != ModelKind::Discover)
        throw ContractError("full forward requires the dual-latent model");
    ForwardCore fc;
    fc.theta_z = encode_z(m, x);
    fc.z = reparam_sample(fc.theta_z.mu, fc.theta_z.var, eps.eps_z);
    fc.theta_w = encode_w(m, x, y);
    fc.w = reparam_sample(fc.theta_w.mu, fc.theta_w.var, eps.eps_w);

    Tensor prior_mu;
    switch (prior_mode) {
        case PriorMode::TrainUpdate:
            prior_mu = estimate_class_means(fc.z, y, m.config.n_classes, m.prior,
                                            m.config.detach_prior_means, true);
            break;
        case PriorMode::BatchOnly:
            prior_mu = estimate_class_means(fc.z, y, m.config.n_classes, m.prior,
                                            m.config.detach_prior_means, false);
            break;
        case PriorMode::Stored:
            prior_mu = m.prior.mu;
            break;
    }

    Tensor raw_hat = decode_z_raw(m, fc.z);
    Tensor raw_tilde = decode_zw_raw(m, fc.z, fc.w);
    bool bern = m.config.likelihood == Likelihood::Bernoulli;
    fc.x_hat = bern ? sigmoid(raw_hat) : raw_hat;
    fc.x_tilde = bern ? sigmoid(raw_tilde) : raw_tilde;

    fc.rec_z = mean(logprob_rows(m, x, raw_hat));
    fc.rec_joint = mean(logprob_rows(m, x, raw_tilde));
    fc.kl_z = mean(kl_std_normal_rows(fc.theta_z.mu, fc.theta_z.var));
    fc.kl_w = mean(kl_unit_var_prior_rows(fc.theta_w.mu, fc.theta_w.var,
                                          gather_rows(prior_mu, y)));
    return fc;
}

VaeForward vae_forward(ModelState& m, const Tensor& x, const std::vector<int>& y,
                       const Tensor& eps_z) {
    VaeForward f;
    const std::vector<int>* yp = m.config.kind == ModelKind::CondVae ? &y : nullptr;
    f.theta_z = encode_z(m, x, yp);
    f.z = reparam_sample(f.theta_z.mu, f.theta_z.var, eps_z);
    Tensor raw = decode_z_raw(m, f.z, yp);
    f.x_hat = m.config.likelihood == Likelihood::Bernoulli ? sigmoid(raw) : raw;
    f.rec = mean(logprob_rows(m, x, raw));
    f.kl = mean(kl_std_normal_rows(f.theta_z.mu, f.theta_z.var));
    return f;
}

Trainer::Trainer(ModelState& m, const TrainConfig& cfg)
    : model_(m),
      cfg_(cfg),
      opt_omega_(params_omega(m), AdamWConfig{cfg.lr, 0.9f, 0.999f, 1e-8f, cfg.weight_decay}) {
    validate_weights(cfg.weights);
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (cfg.patience < 0) throw ConfigError("patience must be >= 0");
    if (cfg.adv_updates_per_step < 1)
        throw ConfigError("adversary update ratio must be >= 1");
    if (m.config.kind == ModelKind::Discover)
        opt_adv_ = std::make_unique<AdamW>(params_adversary(m),
                                           AdamWConfig{cfg.lr_adv, 0.9f, 0.999f, 1e-8f, 0.0f});
}

StepMetrics Trainer::step(const Tensor& x, const std::vector<int>& y, Rng& rng) {
    return run_batch(x, y, rng, true);
}

StepMetrics Trainer::evaluate(const Tensor& x, const std::vector<int>& y, Rng& rng) {
    return run_batch(x, y, rng, false);
}

StepMetrics Trainer::run_batch(const Tensor& x, const std::vector<int>& y, Rng& rng,
                               bool update) {
    if (x.rank() != 2 || x.dim(0) == 0) throw ContractError("batch must be a nonempty [n,d] tensor");
    const int n = x.dim(0);
    const int d = model_.config.latent_dim;
    StepMetrics sm;

    if (model_.config.kind != ModelKind::Discover) {
        GradTape tape;
        const LossWeights& w = cfg_.weights;
        Tensor obj;
        {
            std::unique_ptr<TapeScope> scope;
            if (update) scope = std::make_unique<TapeScope>(tape);
            NoisePair eps = draw_noise(n, d, rng);
            VaeForward f = vae_forward(model_, x, y, eps.eps_z);
            sm.rec_z = f.rec.item();
            sm.kl_z = f.kl.item();
            obj = sub(mul_scalar(f.rec, w.w_rec_z), mul_scalar(f.kl, w.alpha1));
        }
        sm.total = -static_cast<double>(obj.item());
        if (!finite(sm.total)) {
            sm.skipped = true;
            return sm;
        }
        if (update) {
            TapeScope scope(tape);
            opt_omega_.zero_grad();
            tape.backward(neg(obj));
            if (cfg_.grad_clip > 0.0f &&
                std::isnan(clip_grad_norm(params_omega(model_), cfg_.grad_clip))) {
                sm.skipped = true;
                return sm;
            }
            opt_omega_.step();
        }
        return sm;
    }

    GradTape tape_a;
    ForwardCore fc;
    {
        std::unique_ptr<TapeScope> scope;
        if (update) scope = std::make_unique<TapeScope>(tape_a);
        NoisePair eps = draw_noise(n, d, rng);
        fc = discover_forward(model_, x, y, eps,
                              update ? PriorMode::TrainUpdate : PriorMode::Stored);
    }
    sm.rec_z = fc.rec_z.item();
    sm.rec_joint = fc.rec_joint.item();
    sm.kl_z = fc.kl_z.item();
    sm.kl_w = fc.kl_w.item();
    if (!finite(sm.rec_z) || !finite(sm.rec_joint) || !finite(sm.kl_z) || !finite(sm.kl_w) ||
        !fc.x_hat.all_finite()) {
        sm.skipped = true;
        return sm;
    }

    Tensor x_hat_det = fc.x_hat.detached();
    if (update) {
        // Adversary first, against the frozen reconstruction (Algorithm 1:
        // the classifier sees the previous encoder/decoder iterate).
        for (int k = 0; k < cfg_.adv_updates_per_step; ++k) {
            GradTape tape_b;
            TapeScope scope(tape_b);
            Tensor ce_b = adversarial_ce(model_, x_hat_det, y);
            double v = ce_b.item();
            if (k == 0) sm.adv_ce_pre = v;
            if (!finite(v)) {
                sm.skipped = true;
                return sm;
            }
            opt_adv_->zero_grad();
            tape_b.backward(ce_b);
            if (cfg_.grad_clip > 0.0f &&
                std::isnan(clip_grad_norm(params_adversary(model_), cfg_.grad_clip))) {
                sm.skipped = true;
                return sm;
            }
            opt_adv_->step();
        }
    }

    // Encoder/decoder step against the updated adversary.
    Tensor obj;
    {
        std::unique_ptr<TapeScope> scope;
        if (update) scope = std::make_unique<TapeScope>(tape_a);
        Tensor ce = adversarial_ce(model_, fc.x_hat, y);
        sm.adv_ce = ce.item();
        if (!update) sm.adv_ce_pre = sm.adv_ce;
        obj = total_loss({fc.rec_z, fc.rec_joint, fc.kl_z, fc.kl_w, ce}, cfg_.weights);
        sm.total = -static_cast<double>(obj.item());
        if (!finite(sm.adv_ce) || !finite(sm.total)) {
            sm.skipped = true;
            return sm;
        }
        if (update) {
            opt_omega_.zero_grad();
            tape_a.backward(neg(obj));
            if (cfg_.grad_clip > 0.0f &&
                std::isnan(clip_grad_norm(params_omega(model_), cfg_.grad_clip))) {
                sm.skipped = true;
                return sm;
            }
            opt_omega_.step();
        }
    }
    sm.adv_accuracy = accuracy(classify_reconstruction(model_, x_hat_det), y);
    return sm;
}

TrainReport Trainer::fit(const Dataset& train, const Dataset& val) {
    if (train.size() == 0 || val.size() == 0)
        throw ContractError("fit requires nonempty train and validation sets");
    TrainReport rep;
    ModelSnapshot best;
    double best_val = std::numeric_limits<double>::infinity();
    int wait = 0, div_run = 0;
    std::string reason = "max_epochs";

    for (int e = 0; e < cfg_.max_epochs; ++e) {
        Rng erng(substream_seed(cfg_.seed, static_cast<std::uint64_t>(e)));
        auto batches = batch_indices(train.size(), cfg_.batch_size, true, &erng);
        double tw = 0.0;
        EpochRecord er;
        er.epoch = e;
        for (const auto& bidx : batches) {
            Dataset b = take_rows(train, bidx);
            StepMetrics sm = step(b.x, b.y, erng);
            if (sm.skipped) {
                ++rep.skipped_steps;
                continue;
            }
            double bw = static_cast<double>(bidx.size());
            er.total += sm.total * bw;
            er.rec_z += sm.rec_z * bw;
            er.rec_joint += sm.rec_joint * bw;
            er.kl_z += sm.kl_z * bw;
            er.kl_w += sm.kl_w * bw;
            er.adv_ce += sm.adv_ce * bw;
            er.adv_accuracy += sm.adv_accuracy * bw;
            tw += bw;
        }
        if (tw > 0.0) {
            er.total /= tw;
            er.rec_z /= tw;
            er.rec_joint /= tw;
            er.kl_z /= tw;
            er.kl_w /= tw;
            er.adv_ce /= tw;
            er.adv_accuracy /= tw;
        } else {
            er.total = std::numeric_limits<double>::quiet_NaN();
        }

        Rng vrng(cfg_.val_seed);
        double vw = 0.0, vtot = 0.0, vrec = 0.0;
        for (const auto& bidx : batch_indices(val.size(), cfg_.batch_size, false, nullptr)) {
            Dataset b = take_rows(val, bidx);
            StepMetrics sm = evaluate(b.x, b.y, vrng);
            double bw = static_cast<double>(bidx.size());
            vtot += sm.total * bw;
            vrec += (model_.config.kind == ModelKind::Discover ? sm.rec_joint : sm.rec_z) * bw;
            vw += bw;
        }
        er.val_loss = vtot / vw;
        er.val_rec_nll = -vrec / vw;
        rep.epochs.push_back(er);

        bool divergent = !finite(er.total) || std::fabs(er.total) > cfg_.divergence_threshold ||
                         !finite(er.val_loss);
        div_run = divergent ? div_run + 1 : 0;
        if (div_run >= cfg_.divergence_epochs) {
            reason = "diverged";
            break;
        }

        if (finite(er.val_loss) && er.val_loss < best_val) {
            best_val = er.val_loss;
            rep.best_epoch = e;
            best = snapshot_model(model_);
            wait = 0;
        } else if (++wait > cfg_.patience) {
            reason = "early_stop";
            break;
        }
    }

    rep.epochs_run = static_cast<int>(rep.epochs.size());
    rep.stop_reason = reason;
    rep.best_val_loss = best_val;
    if (rep.best_epoch >= 0) restore_model(model_, best);
    return rep;
}

ElboGapResult verify_elbo_gap(const LinearGaussianProblem& prob, const GaussianQ& q_z,
                              const GaussianQ& q_w, int n_samples, Rng& rng) {
    if (n_samples < 2) throw ContractError("gap check needs at least 2 samples");
    if (prob.obs_var <= 0.0 || q_z.var <= 0.0 || q_w.var <= 0.0)
        throw DomainError("variances must be positive");
    const double s2 = prob.obs_var;
    const double x = prob.x;

    // Left side, fully closed form. x marginal: z + w + e ~ N(0, 2 + s2);
    // posterior of w given x from the joint Gaussian.
    double log_px = -0.5 * std::log(2.0 * kPi * (2.0 + s2)) - x * x / (2.0 * (2.0 + s2));
    double pw_mu = x / (2.0 + s2);
    double pw_var = 1.0 - 1.0 / (2.0 + s2);
    double elbo = log_px - kl_gaussian_1d(q_w.mu, q_w.var, pw_mu, pw_var);

    double resid = x - q_z.mu - q_w.mu;
    double e_rec = -0.5 * std::log(2.0 * kPi * s2) -
                   (resid * resid + q_z.var + q_w.var) / (2.0 * s2);
    double l_w = e_rec - kl_gaussian_1d(q_z.mu, q_z.var, 0.0, 1.0) -
                 kl_gaussian_1d(q_w.mu, q_w.var, 0.0, 1.0);

    ElboGapResult res;
    res.lhs = elbo - l_w;

    // Right side: Monte Carlo over q_w of KL(q_z || p(z|w,x)), where
    // x - w = z + e gives p(z|w,x) = N((x-w)/(1+s2), s2/(1+s2)).
    const double pz_var = s2 / (1.0 + s2);
    const double sd_w = std::sqrt(q_w.var);
    double mean_acc = 0.0, m2 = 0.0;
    for (int i = 1; i <= n_samples; ++i) {
        double w = q_w.mu + sd_w * static_cast<double>(rng.normal());
        double kl = kl_gaussian_1d(q_z.mu, q_z.var, (x - w) / (1.0 + s2), pz_var);
        double delta = kl - mean_acc;
        mean_acc += delta / static_cast<double>(i);
        m2 += delta * (kl - mean_acc);
    }
    res.rhs = mean_acc;
    res.mc_se = std::sqrt(m2 / static_cast<double>(n_samples - 1) /
                          static_cast<double>(n_samples));
    res.abs_diff = std::fabs(res.lhs - res.rhs);
    return res;
}

}  // namespace dlvae
