// End-to-end CLI checks; every command runs as a subprocess of the installed
// binary, exactly as a user would invoke it.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename()] = slurp(e.path());
    return out;
}

const std::string kTinyData = "--n-train 16 --n-valid 8 --n-test 16";
const std::string kTinyTrain = "--epochs 2 --batch-size 8 --patience 2";

} // namespace

TEST_CASE("generate rerun is byte identical") {
    const fs::path a = fs::temp_directory_path() / "gm_cli_gen_a";
    const fs::path b = fs::temp_directory_path() / "gm_cli_gen_b";
    fs::remove_all(a);
    fs::remove_all(b);
    REQUIRE(run_cli("generate " + kTinyData + " --seed 7 --out " + a.string()) == 0);
    REQUIRE(run_cli("generate " + kTinyData + " --seed 7 --out " + b.string()) == 0);
    CHECK(dir_bytes(a) == dir_bytes(b));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("exit codes distinguish config and data errors") {
    CHECK(run_cli("generate --n-train 63 --out /tmp/gm_cli_bad") == 2);
    CHECK(run_cli("train --data /nonexistent/gm_dir") == 3);
    CHECK(run_cli("report --runs /nonexistent/gm_runs.jsonl") == 3);
    CHECK(run_cli("train " + kTinyData + " --lr 1e30 --epochs 1") == 4);
    CHECK(run_cli("bogus-subcommand") != 0);
}

TEST_CASE("train writes a checkpoint usable by saliency") {
    const fs::path ds = fs::temp_directory_path() / "gm_cli_ds";
    const fs::path run = fs::temp_directory_path() / "gm_cli_run";
    fs::remove_all(ds);
    fs::remove_all(run);
    REQUIRE(run_cli("generate " + kTinyData + " --seed 7 --out " + ds.string()) == 0);
    REQUIRE(run_cli("train --data " + ds.string() + " " + kTinyTrain +
                    " --variant contrast --lambda 0.1 --seed 3 --out " + run.string()) == 0);
    CHECK(fs::exists(run / "checkpoint.gmc"));
    CHECK(fs::exists(run / "runs.jsonl"));

    REQUIRE(run_cli("saliency --ckpt " + (run / "checkpoint.gmc").string() + " --data " +
                    ds.string() + " --split test --index 1 --variant contrast --out " +
                    (run / "overlay").string()) == 0);
    for (const char* sfx : {"_input.pgm", "_saliency.pgm", "_masked.pgm"}) {
        const std::string body = slurp(run / ("overlay" + std::string(sfx)));
        CHECK(body.rfind("P5\n32 32\n255\n", 0) == 0);
    }
    // the masked overlay never exceeds the unmasked one pixelwise
    const std::string sal = slurp(run / "overlay_saliency.pgm");
    const std::string masked = slurp(run / "overlay_masked.pgm");
    const std::size_t header = std::string("P5\n32 32\n255\n").size();
    for (std::size_t i = header; i < sal.size(); ++i)
        CHECK(static_cast<unsigned char>(masked[i]) <= static_cast<unsigned char>(sal[i]));

    fs::remove_all(ds);
    fs::remove_all(run);
}

TEST_CASE("experiment rerun reproduces runs.jsonl byte-for-byte") {
    const fs::path a = fs::temp_directory_path() / "gm_cli_exp_a";
    const fs::path b = fs::temp_directory_path() / "gm_cli_exp_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const std::string flags = "experiment " + kTinyData + " " + kTinyTrain +
                              " --trials 2 --threads 2 --seed 11 --out ";
    REQUIRE(run_cli(flags + a.string()) == 0);
    REQUIRE(run_cli(flags + b.string()) == 0);
    CHECK(slurp(a / "runs.jsonl") == slurp(b / "runs.jsonl"));
    CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));

    // two variants x two trials, reported consistently
    const std::string runs = slurp(a / "runs.jsonl");
    CHECK(std::count(runs.begin(), runs.end(), '\n') == 4);
    const std::string csv = slurp(a / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(fs::exists(a / "ckpt_none_0.gmc"));
    CHECK(fs::exists(a / "ckpt_contrast_1.gmc"));

    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("sweep is experiment with a single variant") {
    const fs::path dir = fs::temp_directory_path() / "gm_cli_sweep";
    fs::remove_all(dir);
    REQUIRE(run_cli("sweep " + kTinyData + " " + kTinyTrain +
                    " --variant per_class --trials 2 --seed 13 --out " + dir.string()) == 0);
    const std::string runs = slurp(dir / "runs.jsonl");
    CHECK(std::count(runs.begin(), runs.end(), '\n') == 2);
    CHECK(runs.find("\"variant\":\"per_class\"") != std::string::npos);
    fs::remove_all(dir);
}
