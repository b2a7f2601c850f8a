#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dlvae/distributions.hpp"
#include "dlvae/errors.hpp"
#include "dlvae/rng.hpp"
#include "dlvae/tensor.hpp"

namespace dlvae {

enum class ModelKind { Discover, PlainVae, CondVae };
enum class Likelihood { GaussianUnit, Bernoulli };

struct ModelConfig {
    ModelKind kind = ModelKind::Discover;
    int data_dim = 1;
    int latent_dim = 1;  // shared by z and w
    int n_classes = 2;
    int n_hidden = 2;
    int d_hidden = 8;
    Likelihood likelihood = Likelihood::GaussianUnit;
    bool detach_prior_means = false;
};

struct Linear {
    Tensor W;  // [in, out]
    Tensor b;  // [out]
};

// ReLU trunk; output heads live outside.
struct Mlp {
    std::vector<Linear> layers;
};

struct EncoderNet {
    Mlp trunk;
    Linear mu_head;
    Linear var_head;  // softplus + floor applied in forward
};

struct DecoderNet {
    Mlp trunk;
    Linear out_head;
};

// Multinomial logistic regression over the z-only reconstruction.
struct AdversaryNet {
    Linear lin;
};

// uniform init at +-1/sqrt(fan_in), both weights and biases trainable
Linear make_linear(int in, int out, Rng& rng);
Mlp make_mlp(int in, int d_hidden, int n_hidden, Rng& rng);
Tensor linear_fwd(const Linear& lin, const Tensor& x);
Tensor mlp_fwd(const Mlp& mlp, const Tensor& x);

inline constexpr float kVarianceFloor = 1e-6f;
inline constexpr double kPriorEmaMomentum = 0.9;

// Class-conditional prior means for w, anchored to encoder outputs.
// `mu` holds the latest detached estimate used as fallback for classes
// absent from a batch; `counts` tracks cumulative per-class sample counts.
struct PriorMeans {
    Tensor mu;  // [K, d]
    std::vector<long> counts;
    bool initialized = false;
};

struct ModelState {
    ModelConfig config;
    EncoderNet enc_z;   // phi
    DecoderNet dec_z;   // psi
    EncoderNet enc_w;   // rho_enc
    DecoderNet dec_zw;  // eta
    AdversaryNet adv;   // beta
    PriorMeans prior;
};

struct DiagGaussianBatch {
    Tensor mu;   // [n, d]
    Tensor var;  // [n, d], strictly positive
};

ModelState build_model(const ModelConfig& config, std::uint64_t init_seed);

// Parameter access. Names are stable and double as checkpoint keys:
// "phi.trunk.0.W", "eta.out.b", "beta.lin.W", ...
std::vector<std::pair<std::string, Tensor*>> named_params(ModelState& m);
std::vector<std::pair<std::string, Tensor*>> params_omega(ModelState& m);  // phi+psi+rho_enc+eta
std::vector<std::pair<std::string, Tensor*>> params_adversary(ModelState& m);
std::size_t parameter_count(ModelState& m);

Tensor one_hot(const std::vector<int>& y, int n_classes);

// q(z|x). For CondVae the encoder also sees the label (pass y); for the
// other kinds y must be null.
DiagGaussianBatch encode_z(const ModelState& m, const Tensor& x,
                           const std::vector<int>* y = nullptr);

// q(w|x,y)
DiagGaussianBatch encode_w(const ModelState& m, const Tensor& x, const std::vector<int>& y);

// z-only reconstruction in data space (sigmoid applied for Bernoulli heads).
Tensor decode_z(const ModelState& m, const Tensor& z, const std::vector<int>* y = nullptr);
// Pre-activation output (Gaussian means or Bernoulli logits) for likelihoods.
Tensor decode_z_raw(const ModelState& m, const Tensor& z, const std::vector<int>* y = nullptr);

Tensor decode_zw(const ModelState& m, const Tensor& z, const Tensor& w);
Tensor decode_zw_raw(const ModelState& m, const Tensor& z, const Tensor& w);

// Row-wise class log-probabilities of the adversary on x_hat.
Tensor classify_reconstruction(const ModelState& m, const Tensor& x_hat);

// Per-class means of z with gradient flowing through z (unless detach).
// Classes absent from the batch fall back to the EMA in `prior` (global
// batch mean if the class has never been seen). Updates `prior` in place
// from detached values unless update_running is false (pure evaluation).
// Returns [K, d].
Tensor estimate_class_means(const Tensor& z, const std::vector<int>& y, int n_classes,
                            PriorMeans& prior, bool detach = false, bool update_running = true);

// Per-sample prior mean lookup: rows of `means` ([K, d]) gathered by label,
// on tape so gradient reaches the class means. Returns [n, d].
Tensor gather_rows(const Tensor& means, const std::vector<int>& y);

std::vector<int> argmax_rows(const Tensor& t);
double accuracy(const Tensor& logprobs, const std::vector<int>& y);

// Value-only copy of all parameters plus the prior state, used for
// best-validation restores. Buffers stay in place on restore so optimizer
// and checkpoint pointers remain valid.
struct ModelSnapshot {
    std::vector<std::vector<float>> values;
    std::vector<float> prior_mu;
    std::vector<long> prior_counts;
    bool prior_initialized = false;
};

ModelSnapshot snapshot_model(ModelState& m);
void restore_model(ModelState& m, const ModelSnapshot& snap);

}  // namespace dlvae
