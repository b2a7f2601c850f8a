#include "dlvae/capi.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "dlvae/config.hpp"
#include "dlvae/io.hpp"
#include "dlvae/runner.hpp"

struct dlvae_config {
    dlvae::ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <class F>
int guarded(F&& f) noexcept {
    try {
        f();
        g_last_error.clear();
        return DLVAE_OK;
    } catch (const dlvae::Error& e) {
        g_last_error = e.what();
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return DLVAE_ERR_GENERIC;
    } catch (...) {
        g_last_error = "unknown error";
        return DLVAE_ERR_GENERIC;
    }
}

int require(bool ok, const char* msg) {
    if (ok) return DLVAE_OK;
    g_last_error = msg;
    return DLVAE_ERR_CONTRACT;
}

}  // namespace

extern "C" {

const char* dlvae_version(void) { return "1.0.0"; }

const char* dlvae_last_error(void) { return g_last_error.c_str(); }

void dlvae_string_free(char* s) { std::free(s); }

int dlvae_config_preset(const char* name, dlvae_config** out) {
    if (int rc = require(name && out, "preset name and out pointer required")) return rc;
    *out = nullptr;
    return guarded([&] { *out = new dlvae_config{dlvae::preset_config(name)}; });
}

int dlvae_config_parse(const char* json_text, dlvae_config** out) {
    if (int rc = require(json_text && out, "json text and out pointer required")) return rc;
    *out = nullptr;
    return guarded([&] { *out = new dlvae_config{dlvae::parse_config(json_text)}; });
}

int dlvae_config_load(const char* path, dlvae_config** out) {
    if (int rc = require(path && out, "path and out pointer required")) return rc;
    *out = nullptr;
    return guarded([&] { *out = new dlvae_config{dlvae::load_config_file(path)}; });
}

int dlvae_config_set(dlvae_config* cfg, const char* assignment) {
    if (int rc = require(cfg && assignment, "config and assignment required")) return rc;
    return guarded([&] { cfg->cfg = dlvae::apply_overrides(cfg->cfg, {assignment}); });
}

int dlvae_config_set_seed(dlvae_config* cfg, uint64_t seed) {
    if (int rc = require(cfg != nullptr, "config required")) return rc;
    cfg->cfg.seed = seed;
    g_last_error.clear();
    return DLVAE_OK;
}

int dlvae_config_to_json(const dlvae_config* cfg, char** out_json) {
    if (int rc = require(cfg && out_json, "config and out pointer required")) return rc;
    *out_json = nullptr;
    return guarded([&] {
        *out_json = dup_string(dlvae::serialize_config(cfg->cfg));
        if (!*out_json) throw std::bad_alloc();
    });
}

void dlvae_config_free(dlvae_config* cfg) { delete cfg; }

int dlvae_train(const dlvae_config* cfg, const char* out_root, char** out_run_dir) {
    if (int rc = require(cfg && out_root, "config and output root required")) return rc;
    if (out_run_dir) *out_run_dir = nullptr;
    dlvae::RunResult res;
    int rc = guarded([&] { res = dlvae::run_train(cfg->cfg, out_root); });
    if (rc) return rc;
    if (out_run_dir) *out_run_dir = dup_string(res.run_dir);
    if (res.diverged) {
        g_last_error = "training diverged; partial artifacts in " + res.run_dir;
        return DLVAE_ERR_DIVERGENCE;
    }
    return DLVAE_OK;
}

int dlvae_eval(const char* run_dir, char** out_report_json) {
    if (int rc = require(run_dir != nullptr, "run directory required")) return rc;
    if (out_report_json) *out_report_json = nullptr;
    return guarded([&] {
        dlvae::run_eval(run_dir);
        if (out_report_json)
            *out_report_json =
                dup_string(dlvae::read_text_file(std::string(run_dir) + "/eval_report.json"));
    });
}

int dlvae_gen_data(const dlvae_config* cfg, const char* out_dir) {
    if (int rc = require(cfg && out_dir, "config and output directory required")) return rc;
    return guarded([&] { dlvae::run_gendata(cfg->cfg, out_dir); });
}

int dlvae_export(const char* run_dir) {
    if (int rc = require(run_dir != nullptr, "run directory required")) return rc;
    return guarded([&] { dlvae::export_plotdata(run_dir); });
}

int dlvae_repro(const char* which, const char* out_root, int n_seeds) {
    if (int rc = require(which && out_root, "table name and output root required")) return rc;
    return guarded([&] {
        std::string w = which;
        if (w == "table1")
            dlvae::repro_table1(out_root, n_seeds);
        else if (w == "table2")
            dlvae::repro_table2(out_root, n_seeds);
        else if (w == "cmnist")
            dlvae::repro_cmnist(out_root, n_seeds);
        else
            throw dlvae::ConfigError("unknown table '" + w +
                                     "'; expected table1, table2 or cmnist");
    });
}

}  // extern "C"
