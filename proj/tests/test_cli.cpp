// Drives the installed-style binary through std::system and checks the
// documented exit codes and artifacts.
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = DLVAE_CLI_PATH;

int run(const std::string& args) {
    int status = std::system((kCli + " " + args).c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempRoot {
    fs::path path;
    explicit TempRoot(const char* tag) : path(fs::path("cli_test_tmp") / tag) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempRoot() { fs::remove_all("cli_test_tmp"); }
    std::string str() const { return path.string(); }
};

const std::string kTinyArgs =
    " --set data.n=400 --set data.val_fraction=0.25 --set model.d_hidden=4"
    " --set train.max_epochs=2 --set train.batch_size=64 --set metrics.nll_samples=2"
    " --set metrics.quad_intervals=64";

}  // namespace

TEST_CASE("usage basics") {
    CHECK(run("--version > /dev/null") == 0);
    CHECK(run("--help > /dev/null") == 0);
    CHECK(run("2> /dev/null") == 2);                     // missing subcommand
    CHECK(run("no-such-cmd 2> /dev/null") == 2);
    CHECK(run("train --bogus-flag 2> /dev/null") == 2);
    CHECK(run("train 2> /dev/null") == 2);               // neither --config nor --preset
    CHECK(run("train --preset nope 2> /dev/null") == 2);
    CHECK(run("train --preset parametric --set train.weights.adv=-1 2> /dev/null") == 2);
}

TEST_CASE("train/eval/export pipeline with documented exit codes") {
    TempRoot root("pipeline");
    const std::string out = " --out " + root.str() + " ";

    CHECK(run(out + "train --preset parametric --seed 7" + kTinyArgs + " > /dev/null") == 0);
    const std::string run_dir = root.str() + "/parametric-seed7";
    REQUIRE(fs::exists(fs::path(run_dir) / "checkpoint.bin"));

    SUBCASE("same seed twice is byte-identical") {
        std::string ckpt = slurp(run_dir + "/checkpoint.bin");
        TempRoot root2("pipeline2");
        CHECK(run(" --out " + root2.str() + " train --preset parametric --seed 7" + kTinyArgs +
                  " > /dev/null") == 0);
        CHECK(slurp(root2.str() + "/parametric-seed7/checkpoint.bin") == ckpt);
    }

    SUBCASE("eval prints the stored report and repeats identically") {
        CHECK(run("eval " + run_dir + " > /dev/null") == 0);
        std::string report = slurp(run_dir + "/eval_report.json");
        CHECK(report.find("\"nll\"") != std::string::npos);
        CHECK(run("eval " + run_dir + " > /dev/null") == 0);
        CHECK(slurp(run_dir + "/eval_report.json") == report);
    }

    SUBCASE("export writes plot data") {
        CHECK(run("export " + run_dir) == 0);
        CHECK(fs::exists(fs::path(run_dir) / "export/posterior_curves.csv"));
    }

    SUBCASE("corrupted checkpoint fails with the integrity code") {
        std::string bin_path = run_dir + "/checkpoint.bin";
        std::string bytes = slurp(bin_path);
        bytes[120] = static_cast<char>(bytes[120] ^ 0x20);
        std::ofstream(bin_path, std::ios::binary | std::ios::trunc) << bytes;
        CHECK(run("eval " + run_dir + " 2> /dev/null") == 4);
    }

    SUBCASE("missing run dir is a generic failure") {
        CHECK(run("eval " + root.str() + "/nowhere 2> /dev/null") == 1);
    }
}

TEST_CASE("divergence exit code") {
    TempRoot root("diverge");
    CHECK(run("--out " + root.str() + " train --preset parametric --seed 1" + kTinyArgs +
              " --set train.lr=1e8 --set train.divergence_epochs=1"
              " > /dev/null 2>&1") == 3);
    CHECK(fs::exists(fs::path(root.str()) / "parametric-seed1/train_report.json"));
}

TEST_CASE("gen-data and the output-root environment variable") {
    TempRoot root("gendata");
    CHECK(run("gen-data --preset parametric --set data.n=50 --data-out " + root.str() +
              "/blob > /dev/null") == 0);
    CHECK(fs::exists(fs::path(root.str()) / "blob/data.json"));

    // --out falls back to DLVAE_OUT_ROOT
    int status = std::system(("DLVAE_OUT_ROOT=" + root.str() + "/env_runs " + kCli +
                              " train --preset parametric --seed 2" + kTinyArgs +
                              " > /dev/null")
                                 .c_str());
    REQUIRE(status != -1);
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(fs::exists(fs::path(root.str()) / "env_runs/parametric-seed2/checkpoint.bin"));
}
