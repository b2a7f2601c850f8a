#include "dlvae/config.hpp"

#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace dlvae {

namespace detail {

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ConfigError("config: expected an object at '" + path + "'");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) known = known || it.key() == k;
        if (!known)
            throw ConfigError("config: unknown key '" + path + (path.empty() ? "" : ".") +
                              it.key() + "'");
    }
}

namespace {

template <class T>
T read_field(const json& j, const std::string& path, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + path + "." + key + "': " + e.what());
    }
}

std::string kind_to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Discover: return "discover";
        case ModelKind::PlainVae: return "plain_vae";
        case ModelKind::CondVae: return "cond_vae";
    }
    throw ContractError("unhandled model kind");
}

ModelKind kind_from_string(const std::string& s, const std::string& path) {
    if (s == "discover") return ModelKind::Discover;
    if (s == "plain_vae") return ModelKind::PlainVae;
    if (s == "cond_vae") return ModelKind::CondVae;
    throw ConfigError("config: '" + path + ".kind' must be one of discover, plain_vae, "
                      "cond_vae; got '" + s + "'");
}

std::string likelihood_to_string(Likelihood l) {
    return l == Likelihood::Bernoulli ? "bernoulli" : "gaussian_unit";
}

Likelihood likelihood_from_string(const std::string& s, const std::string& path) {
    if (s == "gaussian_unit") return Likelihood::GaussianUnit;
    if (s == "bernoulli") return Likelihood::Bernoulli;
    throw ConfigError("config: '" + path + ".likelihood' must be gaussian_unit or bernoulli; "
                      "got '" + s + "'");
}

DataConfig data_from_json(const json& j) {
    check_keys(j, "data", {"kind", "n", "noise_rate", "jitter", "length_scale", "downsample",
                           "val_fraction"});
    DataConfig d;
    d.kind = read_field<std::string>(j, "data", "kind", d.kind);
    if (d.kind != "parametric" && d.kind != "swiss_roll" && d.kind != "colored_digits")
        throw ConfigError("config: 'data.kind' must be one of parametric, swiss_roll, "
                          "colored_digits; got '" + d.kind + "'");
    d.n = read_field<int>(j, "data", "n", d.n);
    d.noise_rate = read_field<double>(j, "data", "noise_rate", d.noise_rate);
    d.jitter = read_field<double>(j, "data", "jitter", d.jitter);
    d.length_scale = read_field<double>(j, "data", "length_scale", d.length_scale);
    d.downsample = read_field<int>(j, "data", "downsample", d.downsample);
    d.val_fraction = read_field<double>(j, "data", "val_fraction", d.val_fraction);
    if (d.n < 10) throw ConfigError("config: 'data.n' must be at least 10");
    if (d.noise_rate < 0.0 || d.noise_rate > 0.5)
        throw ConfigError("config: 'data.noise_rate' must lie in [0, 0.5]");
    if (d.jitter < 0.0) throw ConfigError("config: 'data.jitter' must be non-negative");
    if (d.length_scale <= 0.0)
        throw ConfigError("config: 'data.length_scale' must be positive");
    if (d.downsample < 1 || 28 % d.downsample != 0)
        throw ConfigError("config: 'data.downsample' must divide 28");
    if (d.val_fraction <= 0.0 || d.val_fraction >= 1.0)
        throw ConfigError("config: 'data.val_fraction' must lie in (0, 1)");
    return d;
}

json data_to_json(const DataConfig& d) {
    return json{{"kind", d.kind},
                {"n", d.n},
                {"noise_rate", d.noise_rate},
                {"jitter", d.jitter},
                {"length_scale", d.length_scale},
                {"downsample", d.downsample},
                {"val_fraction", d.val_fraction}};
}

LossWeights weights_from_json(const json& j) {
    check_keys(j, "train.weights", {"rec_joint", "kl_z", "kl_w", "adv", "rec_z"});
    LossWeights w;
    w.w_rec_joint = read_field<float>(j, "train.weights", "rec_joint", w.w_rec_joint);
    w.alpha1 = read_field<float>(j, "train.weights", "kl_z", w.alpha1);
    w.alpha2 = read_field<float>(j, "train.weights", "kl_w", w.alpha2);
    w.w_adv = read_field<float>(j, "train.weights", "adv", w.w_adv);
    w.w_rec_z = read_field<float>(j, "train.weights", "rec_z", w.w_rec_z);
    validate_weights(w);
    return w;
}

json weights_to_json(const LossWeights& w) {
    return json{{"rec_joint", w.w_rec_joint},
                {"kl_z", w.alpha1},
                {"kl_w", w.alpha2},
                {"adv", w.w_adv},
                {"rec_z", w.w_rec_z}};
}

TrainConfig train_from_json(const json& j) {
    check_keys(j, "train",
               {"max_epochs", "batch_size", "patience", "lr", "lr_adv",
                "adv_updates_per_step", "weight_decay", "grad_clip", "divergence_threshold",
                "divergence_epochs", "weights"});
    TrainConfig t;
    t.max_epochs = read_field<int>(j, "train", "max_epochs", t.max_epochs);
    t.batch_size = read_field<int>(j, "train", "batch_size", t.batch_size);
    t.patience = read_field<int>(j, "train", "patience", t.patience);
    t.lr = read_field<float>(j, "train", "lr", t.lr);
    t.lr_adv = read_field<float>(j, "train", "lr_adv", t.lr_adv);
    t.adv_updates_per_step =
        read_field<int>(j, "train", "adv_updates_per_step", t.adv_updates_per_step);
    t.weight_decay = read_field<float>(j, "train", "weight_decay", t.weight_decay);
    t.grad_clip = read_field<float>(j, "train", "grad_clip", t.grad_clip);
    t.divergence_threshold =
        read_field<double>(j, "train", "divergence_threshold", t.divergence_threshold);
    t.divergence_epochs = read_field<int>(j, "train", "divergence_epochs", t.divergence_epochs);
    if (j.contains("weights")) t.weights = weights_from_json(j.at("weights"));
    if (t.max_epochs < 1) throw ConfigError("config: 'train.max_epochs' must be positive");
    if (t.batch_size < 1) throw ConfigError("config: 'train.batch_size' must be positive");
    if (t.patience < 0) throw ConfigError("config: 'train.patience' must be non-negative");
    if (t.lr < 0.0f || t.lr_adv < 0.0f)
        throw ConfigError("config: learning rates must be non-negative");
    if (t.adv_updates_per_step < 1)
        throw ConfigError("config: 'train.adv_updates_per_step' must be at least 1");
    if (t.weight_decay < 0.0f)
        throw ConfigError("config: 'train.weight_decay' must be non-negative");
    if (t.grad_clip < 0.0f) throw ConfigError("config: 'train.grad_clip' must be non-negative");
    if (t.divergence_threshold <= 0.0)
        throw ConfigError("config: 'train.divergence_threshold' must be positive");
    if (t.divergence_epochs < 1)
        throw ConfigError("config: 'train.divergence_epochs' must be positive");
    return t;
}

json train_to_json(const TrainConfig& t) {
    return json{{"max_epochs", t.max_epochs},
                {"batch_size", t.batch_size},
                {"patience", t.patience},
                {"lr", t.lr},
                {"lr_adv", t.lr_adv},
                {"adv_updates_per_step", t.adv_updates_per_step},
                {"weight_decay", t.weight_decay},
                {"grad_clip", t.grad_clip},
                {"divergence_threshold", t.divergence_threshold},
                {"divergence_epochs", t.divergence_epochs},
                {"weights", weights_to_json(t.weights)}};
}

MetricsConfig metrics_from_json(const json& j) {
    check_keys(j, "metrics",
               {"nll", "nll_samples", "kl_analytic", "quad_intervals", "delta_bayes",
                "bayes_accuracy", "mi", "mine_epochs", "marginal"});
    MetricsConfig m;
    m.nll = read_field<bool>(j, "metrics", "nll", m.nll);
    m.nll_samples = read_field<int>(j, "metrics", "nll_samples", m.nll_samples);
    m.kl_analytic = read_field<bool>(j, "metrics", "kl_analytic", m.kl_analytic);
    m.quad_intervals = read_field<int>(j, "metrics", "quad_intervals", m.quad_intervals);
    m.delta_bayes = read_field<bool>(j, "metrics", "delta_bayes", m.delta_bayes);
    m.bayes_accuracy = read_field<double>(j, "metrics", "bayes_accuracy", m.bayes_accuracy);
    m.mi = read_field<bool>(j, "metrics", "mi", m.mi);
    m.mine_epochs = read_field<int>(j, "metrics", "mine_epochs", m.mine_epochs);
    m.marginal = read_field<bool>(j, "metrics", "marginal", m.marginal);
    if (m.nll_samples < 1) throw ConfigError("config: 'metrics.nll_samples' must be positive");
    if (m.quad_intervals < 8)
        throw ConfigError("config: 'metrics.quad_intervals' must be at least 8");
    if (m.bayes_accuracy < 0.0 || m.bayes_accuracy > 1.0)
        throw ConfigError("config: 'metrics.bayes_accuracy' must lie in [0, 1]");
    if (m.delta_bayes && m.bayes_accuracy == 0.0)
        throw ConfigError("config: 'metrics.delta_bayes' needs 'metrics.bayes_accuracy'");
    if (m.mine_epochs < 1) throw ConfigError("config: 'metrics.mine_epochs' must be positive");
    return m;
}

json metrics_to_json(const MetricsConfig& m) {
    return json{{"nll", m.nll},
                {"nll_samples", m.nll_samples},
                {"kl_analytic", m.kl_analytic},
                {"quad_intervals", m.quad_intervals},
                {"delta_bayes", m.delta_bayes},
                {"bayes_accuracy", m.bayes_accuracy},
                {"mi", m.mi},
                {"mine_epochs", m.mine_epochs},
                {"marginal", m.marginal}};
}

}  // namespace

json model_config_to_json(const ModelConfig& m) {
    return json{{"kind", kind_to_string(m.kind)},
                {"latent_dim", m.latent_dim},
                {"n_hidden", m.n_hidden},
                {"d_hidden", m.d_hidden},
                {"likelihood", likelihood_to_string(m.likelihood)},
                {"detach_prior_means", m.detach_prior_means}};
}

ModelConfig model_config_from_json(const json& j, const std::string& path) {
    check_keys(j, path,
               {"kind", "latent_dim", "n_hidden", "d_hidden", "likelihood",
                "detach_prior_means"});
    ModelConfig m;
    m.kind = kind_from_string(read_field<std::string>(j, path, "kind", "discover"), path);
    m.latent_dim = read_field<int>(j, path, "latent_dim", m.latent_dim);
    m.n_hidden = read_field<int>(j, path, "n_hidden", m.n_hidden);
    m.d_hidden = read_field<int>(j, path, "d_hidden", m.d_hidden);
    m.likelihood = likelihood_from_string(
        read_field<std::string>(j, path, "likelihood", "gaussian_unit"), path);
    m.detach_prior_means = read_field<bool>(j, path, "detach_prior_means", false);
    if (m.latent_dim < 1) throw ConfigError("config: '" + path + ".latent_dim' must be positive");
    if (m.n_hidden < 1) throw ConfigError("config: '" + path + ".n_hidden' must be positive");
    if (m.d_hidden < 1) throw ConfigError("config: '" + path + ".d_hidden' must be positive");
    return m;
}

json experiment_to_json(const ExperimentConfig& cfg) {
    return json{{"name", cfg.name},         {"seed", cfg.seed},
                {"data", data_to_json(cfg.data)}, {"model", model_config_to_json(cfg.model)},
                {"train", train_to_json(cfg.train)}, {"metrics", metrics_to_json(cfg.metrics)}};
}

ExperimentConfig experiment_from_json(const json& j) {
    check_keys(j, "", {"name", "seed", "data", "model", "train", "metrics"});
    ExperimentConfig cfg;
    cfg.name = read_field<std::string>(j, "", "name", cfg.name);
    if (cfg.name.empty() || cfg.name.find('/') != std::string::npos)
        throw ConfigError("config: 'name' must be a non-empty path-safe string");
    cfg.seed = read_field<std::uint64_t>(j, "", "seed", cfg.seed);
    if (j.contains("data")) cfg.data = data_from_json(j.at("data"));
    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"), "model");
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
    if (j.contains("metrics")) cfg.metrics = metrics_from_json(j.at("metrics"));
    if (cfg.data.kind == "colored_digits" && cfg.model.likelihood != Likelihood::Bernoulli)
        throw ConfigError("config: colored_digits data requires a bernoulli likelihood");
    return cfg;
}

}  // namespace detail

std::string model_kind_name(ModelKind kind) { return detail::kind_to_string(kind); }

std::vector<std::string> preset_names() {
    return {"parametric", "swiss_roll", "colored_digits"};
}

ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig cfg;
    cfg.name = name;
    if (name == "parametric") {
        cfg.data.kind = "parametric";
        cfg.data.n = 20000;
        cfg.model.kind = ModelKind::Discover;
        cfg.model.latent_dim = 1;
        cfg.model.n_hidden = 2;
        cfg.model.d_hidden = 8;
        cfg.train.lr = 1e-3f;
        cfg.train.lr_adv = 1e-3f;
        cfg.train.weights.w_rec_joint = 0.7f;
        cfg.train.weights.alpha1 = 0.7f;
        cfg.train.weights.alpha2 = 0.2f;
        cfg.train.weights.w_adv = 0.8f;
        cfg.train.weights.w_rec_z = 0.3f;
        cfg.metrics.nll = true;
        cfg.metrics.nll_samples = 16;
        cfg.metrics.kl_analytic = true;
        cfg.metrics.delta_bayes = true;
        // predicting sign(w) from x = z + w: E[Phi(|x|/sqrt(2))] = 3/4
        cfg.metrics.bayes_accuracy = 0.75;
    } else if (name == "swiss_roll") {
        cfg.data.kind = "swiss_roll";
        cfg.data.n = 20000;
        cfg.data.noise_rate = 0.3;
        cfg.model.kind = ModelKind::Discover;
        cfg.model.latent_dim = 2;
        cfg.model.n_hidden = 2;
        cfg.model.d_hidden = 128;
        cfg.train.lr = 1e-3f;
        cfg.train.lr_adv = 1e-3f;
        cfg.train.weights.w_rec_joint = 0.9f;
        cfg.train.weights.alpha1 = 0.2f;
        cfg.train.weights.alpha2 = 0.2f;
        cfg.train.weights.w_adv = 8.0f;
        cfg.train.weights.w_rec_z = 0.1f;
        cfg.metrics.nll = true;
        cfg.metrics.nll_samples = 16;
        cfg.metrics.delta_bayes = true;
        // a clean length split flipped at rate 0.3 caps accuracy at 0.7
        cfg.metrics.bayes_accuracy = 0.70;
        cfg.metrics.mi = true;
    } else if (name == "colored_digits") {
        cfg.data.kind = "colored_digits";
        cfg.data.n = 5000;  // doubled by the red/green duplication
        cfg.data.noise_rate = 0.1;
        cfg.data.downsample = 2;
        cfg.model.kind = ModelKind::Discover;
        cfg.model.latent_dim = 8;
        cfg.model.n_hidden = 2;
        cfg.model.d_hidden = 256;
        cfg.model.likelihood = Likelihood::Bernoulli;
        cfg.train.lr = 1e-3f;
        cfg.train.lr_adv = 1e-3f;
        cfg.train.max_epochs = 150;
        cfg.train.patience = 25;
        cfg.train.weights.w_rec_joint = 0.5f;
        cfg.train.weights.alpha1 = 1e-4f;
        cfg.train.weights.alpha2 = 1e-4f;
        cfg.train.weights.w_adv = 0.1f;
        cfg.train.weights.w_rec_z = 0.5f;
        cfg.metrics.nll = true;
        cfg.metrics.nll_samples = 4;
        cfg.metrics.marginal = true;
    } else {
        throw ConfigError("unknown preset '" + name + "'; available: parametric, swiss_roll, "
                          "colored_digits");
    }
    return cfg;
}

ExperimentConfig parse_config(const std::string& json_text) {
    detail::json j;
    try {
        j = detail::json::parse(json_text);
    } catch (const detail::json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return detail::experiment_from_json(j);
}

std::string serialize_config(const ExperimentConfig& cfg) {
    return detail::experiment_to_json(cfg).dump(2) + "\n";
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void save_config_file(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write config file " + path);
    out << serialize_config(cfg);
    if (!out) throw IoError("failed writing config file " + path);
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& assignments) {
    detail::json j = detail::experiment_to_json(cfg);
    for (const std::string& a : assignments) {
        std::size_t eq = a.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override '" + a + "' is not of the form key.path=value");
        std::string value = a.substr(eq + 1);
        detail::json parsed = detail::json::parse(value, nullptr, false);
        if (parsed.is_discarded()) parsed = value;  // bare words are strings

        detail::json* node = &j;
        std::string path = a.substr(0, eq);
        std::size_t start = 0;
        while (true) {
            std::size_t dot = path.find('.', start);
            std::string key = path.substr(start, dot - start);
            if (key.empty())
                throw ConfigError("override '" + a + "' has an empty path segment");
            if (dot == std::string::npos) {
                (*node)[key] = parsed;
                break;
            }
            if (!node->contains(key) || !(*node)[key].is_object())
                throw ConfigError("override '" + a + "': no section named '" +
                                  path.substr(0, dot) + "'");
            node = &(*node)[key];
            start = dot + 1;
        }
    }
    return detail::experiment_from_json(j);
}

}  // namespace dlvae
