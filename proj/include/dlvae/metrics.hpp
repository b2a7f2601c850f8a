#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dlvae/datasets.hpp"
#include "dlvae/model.hpp"
#include "dlvae/rng.hpp"

namespace dlvae {

struct EvalReport {
    double nll = 0.0;
    double nll_se = 0.0;
    double kl_z = 0.0;  // nats; multiply by 100 for report tables
    double kl_w = 0.0;
    bool has_kl_w = false;
    double delta_bayes = 0.0;  // percentage points
    double mi_zw = 0.0;        // nats, clamped at 0
    double mi_zw_raw = 0.0;
    double mi_se = 0.0;
    std::optional<double> marginal_rmse;
    bool marginal_is_proxy = false;  // label-marginalized stand-in was used
};

// Per-datum negative log-likelihood bound in nats from the model's own
// evidence bound; n_importance_samples > 1 tightens it by importance
// weighting over the variational posterior.
double eval_nll(ModelState& m, const Dataset& data, int n_importance_samples, Rng& rng,
                double* se_out = nullptr);

struct ParametricKl {
    double kl_z = 0.0;
    double kl_w = 0.0;  // meaningful only when has_kl_w
    bool has_kl_w = false;
};

// Divergence of the encoders from the analytic posteriors of the additive
// benchmark: N(x/2, 1/2) for the invariant latent and the sign-truncated
// counterpart for the label-aware one (quadrature). Averaged over rows.
ParametricKl eval_kl_analytic_parametric(ModelState& m, const Dataset& data,
                                         int quad_intervals = 4000);

// Gaussian naive Bayes probe on arbitrary feature rows: fit on a 70% split,
// return |held-out accuracy - bayes_optimal_accuracy| * 100.
double gnb_deviation(const Tensor& features, const std::vector<int>& y, int n_classes,
                     double bayes_optimal_accuracy, std::uint64_t seed);

// Same probe on the model's completed reconstruction from mean embeddings.
double delta_bayes(ModelState& m, const Dataset& data, double bayes_optimal_accuracy,
                   std::uint64_t seed);

struct MineConfig {
    int d_hidden = 128;
    int n_hidden = 2;
    int epochs = 500;  // one full-batch update each
    float lr = 1e-3f;
    double ma_momentum = 0.99;      // moving average of the partition estimate
    double holdout_fraction = 0.3;  // estimate reported on held-out rows
    int max_train_rows = 4096;
    std::uint64_t seed = 0;
};

struct MineResult {
    double raw = 0.0;      // Donsker-Varadhan bound on held-out rows
    double clamped = 0.0;  // max(raw, 0)
    double se = 0.0;
};

// Mutual-information lower bound between paired embeddings; marginals are
// formed by shuffling the second argument within the batch.
MineResult mine_mi(const Tensor& z, const Tensor& w, const MineConfig& cfg);

struct LatentPair {
    Tensor z;
    Tensor w;
};

// Mean embeddings by default; `sampled` draws one reparameterized sample per
// row instead.
LatentPair latent_embeddings(ModelState& m, const Dataset& data, bool sampled, Rng& rng);

// Label-blind reconstruction used for marginal scoring. Undefined for the
// label-conditioned decoder baseline (no z-only path): UnsupportedError.
Tensor reconstruct_marginal(ModelState& m, const Dataset& data);

// Comparison stand-in for models whose decoder needs the label: the decode
// averaged over every class at the mean embedding. Falls back to the true
// marginal reconstruction where one exists.
Tensor reconstruct_marginal_proxy(ModelState& m, const Dataset& data);

// Root mean squared error of the (proxy) marginal against per-row targets.
double marginal_rmse(ModelState& m, const Dataset& data, const Tensor& targets);
double marginal_proxy_rmse(ModelState& m, const Dataset& data, const Tensor& targets);

// Ground-truth color marginal of a colored-digit row: half the shape
// intensity in red and green, the full shape in blue.
Tensor colored_digit_marginal(const Dataset& data);

// Class-conditional-average predictor: mean target per digit class measured
// on `fit`, scored by RMSE against `eval_targets`.
double class_conditional_rmse(const Dataset& fit, const Tensor& fit_targets,
                              const Dataset& eval_set, const Tensor& eval_targets);

}  // namespace dlvae
