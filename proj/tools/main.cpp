// Command-line front end; talks to the library exclusively through the
// shared-library C interface.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dlvae/capi.h"

namespace {

// Collapse library error codes onto the documented process exit codes:
// 0 ok, 2 config, 3 divergence, 4 integrity, 1 anything else.
int exit_code(int rc) {
    switch (rc) {
        case DLVAE_OK:
            return 0;
        case DLVAE_ERR_CONFIG:
        case DLVAE_ERR_DIVERGENCE:
        case DLVAE_ERR_INTEGRITY:
            return rc;
        default:
            return 1;
    }
}

int fail(int rc) {
    std::fprintf(stderr, "error: %s\n", dlvae_last_error());
    return exit_code(rc);
}

struct ConfigArgs {
    std::string config_path;
    std::string preset;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& args) {
    auto* cfg_opt = cmd->add_option("--config", args.config_path, "Experiment config JSON");
    cmd->add_option("--preset", args.preset, "Shipped preset (parametric, swiss_roll, colored_digits)")
        ->excludes(cfg_opt);
    cmd->add_option("--set", args.sets, "Override, dotted path (e.g. --set train.lr=0.005)")
        ->take_all();
    cmd->add_option("--seed", args.seed, "Master seed")->each([&](const std::string&) {
        args.seed_given = true;
    });
}

// nullptr on failure with the library code already reported
dlvae_config* build_config(const ConfigArgs& args, int& rc) {
    dlvae_config* cfg = nullptr;
    if (!args.config_path.empty())
        rc = dlvae_config_load(args.config_path.c_str(), &cfg);
    else if (!args.preset.empty())
        rc = dlvae_config_preset(args.preset.c_str(), &cfg);
    else {
        std::fprintf(stderr, "error: provide --config or --preset\n");
        rc = DLVAE_ERR_CONFIG;
        return nullptr;
    }
    if (rc) return nullptr;
    for (const std::string& s : args.sets) {
        rc = dlvae_config_set(cfg, s.c_str());
        if (rc) {
            dlvae_config_free(cfg);
            return nullptr;
        }
    }
    if (args.seed_given) dlvae_config_set_seed(cfg, args.seed);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-latent variational models: training, evaluation and exports"};
    app.require_subcommand(1);
    app.set_version_flag("--version", []() { return std::string(dlvae_version()); });

    std::string out_root = "runs";
    app.add_option("--out", out_root, "Output root for runs and tables")
        ->envname("DLVAE_OUT_ROOT");

    ConfigArgs train_args;
    auto* train = app.add_subcommand("train", "Train a model and write a run directory");
    add_config_flags(train, train_args);

    std::string eval_dir;
    auto* eval = app.add_subcommand("eval", "Recompute metrics for a finished run");
    eval->add_option("run_dir", eval_dir, "Run directory")->required();

    ConfigArgs gen_args;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "Write a reproducible dataset blob");
    add_config_flags(gen, gen_args);
    gen->add_option("--data-out", gen_out, "Dataset directory")->required();

    std::string export_dir;
    auto* exp = app.add_subcommand("export", "Dump plot-ready CSVs for a run");
    exp->add_option("run_dir", export_dir, "Run directory")->required();

    int seeds_t1 = 10, seeds_t2 = 5, seeds_cm = 3;
    auto* t1 = app.add_subcommand("repro-table1", "Additive benchmark sweep, all models");
    t1->add_option("--seeds", seeds_t1, "Seeds per model");
    auto* t2 = app.add_subcommand("repro-table2", "Swiss roll sweep");
    t2->add_option("--seeds", seeds_t2, "Seeds per model");
    auto* cm = app.add_subcommand("repro-cmnist", "Colored digit sweep");
    cm->add_option("--seeds", seeds_cm, "Seeds per variant");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // bad usage is a config error
    }

    int rc = DLVAE_OK;
    if (train->parsed()) {
        dlvae_config* cfg = build_config(train_args, rc);
        if (!cfg) return fail(rc);
        char* run_dir = nullptr;
        rc = dlvae_train(cfg, out_root.c_str(), &run_dir);
        if (run_dir) {
            std::printf("%s\n", run_dir);
            dlvae_string_free(run_dir);
        }
        dlvae_config_free(cfg);
        if (rc) return fail(rc);
    } else if (eval->parsed()) {
        char* report = nullptr;
        rc = dlvae_eval(eval_dir.c_str(), &report);
        if (rc) return fail(rc);
        std::printf("%s", report);
        dlvae_string_free(report);
    } else if (gen->parsed()) {
        dlvae_config* cfg = build_config(gen_args, rc);
        if (!cfg) return fail(rc);
        rc = dlvae_gen_data(cfg, gen_out.c_str());
        dlvae_config_free(cfg);
        if (rc) return fail(rc);
        std::printf("%s\n", gen_out.c_str());
    } else if (exp->parsed()) {
        rc = dlvae_export(export_dir.c_str());
        if (rc) return fail(rc);
    } else if (t1->parsed()) {
        rc = dlvae_repro("table1", out_root.c_str(), seeds_t1);
        if (rc) return fail(rc);
    } else if (t2->parsed()) {
        rc = dlvae_repro("table2", out_root.c_str(), seeds_t2);
        if (rc) return fail(rc);
    } else if (cm->parsed()) {
        rc = dlvae_repro("cmnist", out_root.c_str(), seeds_cm);
        if (rc) return fail(rc);
    }
    return 0;
}
