#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dlvae/datasets.hpp"
#include "dlvae/model.hpp"
#include "dlvae/optim.hpp"

namespace dlvae {

struct LossWeights {
    float alpha1 = 1.0f;      // KL(q_z || p_z)
    float alpha2 = 1.0f;      // KL(q_w || p_{w|y})
    float w_rec_joint = 1.0f; // joint reconstruction log-likelihood
    float w_rec_z = 1.0f;     // z-only reconstruction log-likelihood
    float w_adv = 0.0f;       // adversarial cross-entropy
};

void validate_weights(const LossWeights& w);  // all entries >= 0

// --- loss building blocks (taped scalars) -------------------------------

struct LossZTerms {
    Tensor recon;  // mean log p(x|z), single-sample MC
    Tensor kl;     // mean KL(q_z || N(0,I)), closed form
};
LossZTerms loss_z(const ModelState& m, const DiagGaussianBatch& theta_z,
                  const Tensor& z_sample, const Tensor& x,
                  const std::vector<int>* y_cond = nullptr);

struct LossWTerms {
    Tensor recon;  // mean log p(x|z,w), single-sample MC
    Tensor kl_z;   // mean KL(q_z || N(0,I))
    Tensor kl_w;   // mean KL(q_w || N(mu_y, I)) against the anchored prior
};
LossWTerms loss_w(const ModelState& m, const DiagGaussianBatch& theta_z,
                  const DiagGaussianBatch& theta_w, const Tensor& z_sample,
                  const Tensor& w_sample, const Tensor& x, const std::vector<int>& y,
                  const Tensor& prior_mu);

// Mean cross-entropy of the adversary on the z-only reconstruction.
Tensor adversarial_ce(const ModelState& m, const Tensor& x_hat, const std::vector<int>& y);

struct LossTerms {
    Tensor rec_z, rec_joint, kl_z, kl_w, adv_ce;
};

// The weighted objective the encoder/decoder step MAXIMIZES:
//   w_rec_z*rec_z + w_rec_joint*rec_joint - alpha1*kl_z - alpha2*kl_w + w_adv*adv_ce
// The adversary separately MINIMIZES the unweighted cross-entropy. The
// positive sign on adv_ce makes the encoder push the classifier toward
// chance; the classifier step pushes back.
Tensor total_loss(const LossTerms& t, const LossWeights& w);

// --- assembled forward pass ---------------------------------------------

// How the w-prior means are obtained for the kl_w term.
enum class PriorMode {
    TrainUpdate,  // taped per-batch means, EMA bookkeeping updated
    BatchOnly,    // taped per-batch means, no state mutation (pure)
    Stored,       // current EMA values as constants (evaluation)
};

struct NoisePair {
    Tensor eps_z;  // [n, d]
    Tensor eps_w;
};
NoisePair draw_noise(int n, int d, Rng& rng);  // eps_z first, then eps_w

// Everything the objective needs except the adversarial term, which the
// step records only after the adversary update (Algorithm 1 order).
struct ForwardCore {
    DiagGaussianBatch theta_z, theta_w;
    Tensor z, w;           // reparameterized samples
    Tensor x_hat;          // z-only reconstruction, data space, on tape
    Tensor x_tilde;        // joint reconstruction, data space
    Tensor rec_z, rec_joint, kl_z, kl_w;  // scalars
};
ForwardCore discover_forward(ModelState& m, const Tensor& x, const std::vector<int>& y,
                             const NoisePair& eps, PriorMode prior_mode);

// Reduced forward for PlainVae (y ignored) and CondVae (y required).
struct VaeForward {
    DiagGaussianBatch theta_z;
    Tensor z;
    Tensor x_hat;
    Tensor rec, kl;
};
VaeForward vae_forward(ModelState& m, const Tensor& x, const std::vector<int>& y,
                       const Tensor& eps_z);

// --- training loop -------------------------------------------------------

struct TrainConfig {
    int max_epochs = 500;
    int batch_size = 128;
    int patience = 50;
    float lr = 1e-3f;      // encoder/decoder step size
    float lr_adv = 1e-3f;  // adversary step size
    int adv_updates_per_step = 1;
    float weight_decay = 0.0f;
    float grad_clip = 0.0f;  // 0 disables clipping
    double divergence_threshold = 1e6;
    int divergence_epochs = 10;
    LossWeights weights;
    std::uint64_t seed = 0;      // training-noise stream
    std::uint64_t val_seed = 1;  // frozen validation noise, reused every epoch
};

struct StepMetrics {
    double total = 0.0;  // minimized quantity: negated weighted objective
    double rec_z = 0.0, rec_joint = 0.0, kl_z = 0.0, kl_w = 0.0;
    double adv_ce = 0.0;      // cross-entropy after the adversary update
    double adv_ce_pre = 0.0;  // before the adversary update, same batch
    double adv_accuracy = 0.0;
    bool skipped = false;
};

struct EpochRecord {
    int epoch = 0;
    double total = 0.0;
    double rec_z = 0.0, rec_joint = 0.0, kl_z = 0.0, kl_w = 0.0, adv_ce = 0.0;
    double adv_accuracy = 0.0;
    double val_loss = 0.0;
    double val_rec_nll = 0.0;  // unweighted reconstruction NLL on validation
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    int epochs_run = 0;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    std::string stop_reason;  // "early_stop", "max_epochs", "diverged"
    long skipped_steps = 0;
};

class Trainer {
   public:
    Trainer(ModelState& m, const TrainConfig& cfg);

    // One Algorithm-1 iteration: adversary first (on the detached x_hat,
    // holding the nets), then encoders/decoders against the updated
    // adversary. NaN losses skip every update for the step.
    StepMetrics step(const Tensor& x, const std::vector<int>& y, Rng& rng);

    // Metrics of the current model on a batch; no updates, stored priors.
    StepMetrics evaluate(const Tensor& x, const std::vector<int>& y, Rng& rng);

    // Epoch loop with early stopping on validation loss; restores the
    // best-validation parameters before returning. Divergence (epoch loss
    // beyond divergence_threshold, or non-finite, for divergence_epochs in
    // a row) stops training with stop_reason "diverged".
    TrainReport fit(const Dataset& train, const Dataset& val);

    const TrainConfig& config() const { return cfg_; }

   private:
    StepMetrics run_batch(const Tensor& x, const std::vector<int>& y, Rng& rng, bool update);

    ModelState& model_;
    TrainConfig cfg_;
    AdamW opt_omega_;
    std::unique_ptr<AdamW> opt_adv_;
};

// --- Proposition 1 testbed -----------------------------------------------

// Tractable linear-Gaussian model: z ~ N(0,1), w ~ N(0,1),
// x = z + w + e with e ~ N(0, obs_var). Both sides of the ELBO-gap
// identity are computed from independent code paths: the left side fully
// in closed form, the right side by Monte Carlo over q_w of the
// closed-form KL(q_z || p(z|w,x)).
struct LinearGaussianProblem {
    double x = 0.0;
    double obs_var = 1.0;
};

struct GaussianQ {
    double mu = 0.0;
    double var = 1.0;
};

struct ElboGapResult {
    double lhs = 0.0;  // ELBO - L_w, closed form
    double rhs = 0.0;  // E_{q_w}[ KL(q_z || p_{z|w,x,y}) ], MC
    double abs_diff = 0.0;
    double mc_se = 0.0;
};

ElboGapResult verify_elbo_gap(const LinearGaussianProblem& prob, const GaussianQ& q_z,
                              const GaussianQ& q_w, int n_samples, Rng& rng);

}  // namespace dlvae
