#include <doctest.h>

#include "dlvae/config.hpp"
#include "dlvae/errors.hpp"

using namespace dlvae;

TEST_CASE("serialize/parse round trip is lossless") {
    ExperimentConfig cfg = preset_config("swiss_roll");
    cfg.seed = 42;
    cfg.train.lr = 0.00125f;
    cfg.train.grad_clip = 7.5f;
    cfg.metrics.mine_epochs = 321;

    ExperimentConfig back = parse_config(serialize_config(cfg));
    CHECK(back.name == cfg.name);
    CHECK(back.seed == cfg.seed);
    CHECK(back.data.kind == cfg.data.kind);
    CHECK(back.data.n == cfg.data.n);
    CHECK(back.data.noise_rate == cfg.data.noise_rate);
    CHECK(back.model.kind == cfg.model.kind);
    CHECK(back.model.latent_dim == cfg.model.latent_dim);
    CHECK(back.model.d_hidden == cfg.model.d_hidden);
    CHECK(back.train.lr == cfg.train.lr);
    CHECK(back.train.grad_clip == cfg.train.grad_clip);
    CHECK(back.train.weights.w_adv == cfg.train.weights.w_adv);
    CHECK(back.metrics.mine_epochs == cfg.metrics.mine_epochs);
    CHECK(back.metrics.bayes_accuracy == cfg.metrics.bayes_accuracy);

    // serialization is canonical: a second round trip produces identical text
    CHECK(serialize_config(back) == serialize_config(cfg));
}

TEST_CASE("missing keys fall back to defaults") {
    ExperimentConfig cfg = parse_config("{}");
    ExperimentConfig defaults;
    CHECK(cfg.name == defaults.name);
    CHECK(cfg.data.kind == "parametric");
    CHECK(cfg.data.n == defaults.data.n);
    CHECK(cfg.train.batch_size == defaults.train.batch_size);
    CHECK(cfg.metrics.nll == defaults.metrics.nll);

    cfg = parse_config(R"({"train": {"lr": 0.5}})");
    CHECK(cfg.train.lr == 0.5f);
    CHECK(cfg.train.batch_size == defaults.train.batch_size);
}

TEST_CASE("unknown keys are rejected with their path") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"sneed": 1})"),
                         doctest::Contains("unknown key 'sneed'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"train": {"lr_advv": 0.1}})"),
                         doctest::Contains("train.lr_advv"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"train": {"weights": {"advv": 0.1}}})"),
                         doctest::Contains("train.weights.advv"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"model": {"data_dim": 5}})"),
                         doctest::Contains("model.data_dim"), ConfigError);
}

TEST_CASE("syntax errors surface as config errors") {
    CHECK_THROWS_AS(parse_config("{"), ConfigError);
    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"seed": })"), doctest::Contains("config:"),
                         ConfigError);
}

TEST_CASE("value validation") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"data": {"noise_rate": 0.6}})"),
                         doctest::Contains("noise_rate"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"data": {"downsample": 3}})"),
                         doctest::Contains("downsample"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"data": {"val_fraction": 1.0}})"),
                         doctest::Contains("val_fraction"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"train": {"batch_size": 0}})"),
                         doctest::Contains("batch_size"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"train": {"weights": {"adv": -1}}})"),
                         doctest::Contains("non-negative"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"model": {"kind": "vae"}})"),
                         doctest::Contains("model.kind"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"model": {"likelihood": "poisson"}})"),
                         doctest::Contains("likelihood"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"metrics": {"quad_intervals": 4}})"),
                         doctest::Contains("quad_intervals"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"name": "a/b"})"), doctest::Contains("name"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"data": {"kind": "mnist"}})"),
                         doctest::Contains("data.kind"), ConfigError);
    // delta_bayes needs a reference accuracy to compare against
    CHECK_THROWS_WITH_AS(parse_config(R"({"metrics": {"delta_bayes": true}})"),
                         doctest::Contains("bayes_accuracy"), ConfigError);
    // colored digit intensities live in [0,1]; a gaussian output head is a config bug
    CHECK_THROWS_WITH_AS(parse_config(R"({"data": {"kind": "colored_digits"}})"),
                         doctest::Contains("bernoulli"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"train": {"lr": "fast"}})"),
                         doctest::Contains("train.lr"), ConfigError);
}

TEST_CASE("presets carry their published settings") {
    CHECK(preset_names() == std::vector<std::string>{"parametric", "swiss_roll",
                                                     "colored_digits"});
    CHECK_THROWS_AS(preset_config("nope"), ConfigError);

    ExperimentConfig p = preset_config("parametric");
    CHECK(p.data.kind == "parametric");
    CHECK(p.data.n == 20000);
    CHECK(p.model.kind == ModelKind::Discover);
    CHECK(p.model.latent_dim == 1);
    CHECK(p.model.n_hidden == 2);
    CHECK(p.model.d_hidden == 8);
    CHECK(p.train.lr == 1e-3f);
    CHECK(p.train.weights.w_rec_joint == 0.7f);
    CHECK(p.train.weights.alpha1 == 0.7f);
    CHECK(p.train.weights.alpha2 == 0.2f);
    CHECK(p.train.weights.w_adv == 0.8f);
    CHECK(p.train.weights.w_rec_z == 0.3f);
    CHECK(p.metrics.kl_analytic);
    CHECK(p.metrics.delta_bayes);
    CHECK(p.metrics.bayes_accuracy == 0.75);

    ExperimentConfig s = preset_config("swiss_roll");
    CHECK(s.data.noise_rate == 0.3);
    CHECK(s.model.latent_dim == 2);
    CHECK(s.model.d_hidden == 128);
    CHECK(s.train.weights.w_rec_joint == 0.9f);
    CHECK(s.train.weights.w_adv == 8.0f);
    CHECK(s.metrics.mi);
    CHECK(s.metrics.bayes_accuracy == 0.70);

    ExperimentConfig c = preset_config("colored_digits");
    CHECK(c.data.downsample == 2);
    CHECK(c.model.likelihood == Likelihood::Bernoulli);
    CHECK(c.model.latent_dim == 8);
    CHECK(c.train.weights.alpha1 == 1e-4f);
    CHECK(c.train.weights.w_adv == 0.1f);
    CHECK(c.metrics.marginal);

    // every preset must itself survive strict parsing
    for (const auto& name : preset_names())
        CHECK_NOTHROW(parse_config(serialize_config(preset_config(name))));
}

TEST_CASE("dotted overrides rewrite nested fields") {
    ExperimentConfig base = preset_config("parametric");
    ExperimentConfig cfg = apply_overrides(
        base, {"train.lr=0.005", "train.weights.adv=0", "model.kind=plain_vae", "seed=9",
               "data.n=500", "name=probe"});
    CHECK(cfg.train.lr == 0.005f);
    CHECK(cfg.train.weights.w_adv == 0.0f);
    CHECK(cfg.model.kind == ModelKind::PlainVae);
    CHECK(cfg.seed == 9);
    CHECK(cfg.data.n == 500);
    CHECK(cfg.name == "probe");
    // untouched fields survive
    CHECK(cfg.train.weights.w_rec_joint == 0.7f);
    CHECK(cfg.metrics.bayes_accuracy == 0.75);

    CHECK_NOTHROW(apply_overrides(base, {}));
    CHECK_THROWS_AS(apply_overrides(base, {"train.lr"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(base, {"=5"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(base, {"train..lr=1"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(base, {"nope.lr=1"}), ConfigError);
    // overrides feed back through full validation
    CHECK_THROWS_AS(apply_overrides(base, {"train.batch_size=0"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(base, {"train.typo=1"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(base, {"train.lr=fast"}), ConfigError);
}

TEST_CASE("config files round trip through disk") {
    ExperimentConfig cfg = preset_config("colored_digits");
    cfg.seed = 77;
    std::string path = "test_config_tmp.json";
    save_config_file(cfg, path);
    ExperimentConfig back = load_config_file(path);
    CHECK(serialize_config(back) == serialize_config(cfg));
    std::remove(path.c_str());

    CHECK_THROWS_WITH_AS(load_config_file("does_not_exist.json"),
                         doctest::Contains("cannot open"), IoError);
}
