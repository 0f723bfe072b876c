// Command-line front end. Everything goes through the C API in
// gradmask/capi.h; this translation unit never touches the C++ core.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradmask/capi.h"

using nlohmann::json;

namespace {

// 0 ok, 2 config error, 3 data error, 4 training divergence, 1 anything else.
int exit_code_for(gm_status status) {
    switch (status) {
    case GM_OK: return 0;
    case GM_ERR_INVALID_ARG:
    case GM_ERR_SHAPE:
    case GM_ERR_DTYPE:
    case GM_ERR_VALIDATION:
    case GM_ERR_DOMAIN:
    case GM_ERR_CONTRACT:
    case GM_ERR_UNSUPPORTED: return 2;
    case GM_ERR_IO:
    case GM_ERR_FORMAT: return 3;
    case GM_ERR_DIVERGED: return 4;
    case GM_ERR_INTERNAL: return 1;
    }
    return 1;
}

int fail(gm_status status) {
    std::fprintf(stderr, "error (%s): %s\n", gm_status_name(status), gm_last_error());
    return exit_code_for(status);
}

struct SynthFlags {
    std::uint32_t h = 32, w = 32;
    std::uint32_t n_train = 128, n_valid = 128, n_test = 512;
    double rho_train = 0.95, rho_test = 0.5;
    double lesion_offset = 0.35, noise_sigma = 0.15;
    double lesion_axis_min = 3.0, lesion_axis_max = 6.0, patch_offset = 0.5;
    std::uint64_t seed = 0;
    std::string dtype = "f32";

    void add_options(CLI::App* cmd) {
        cmd->add_option("--height", h, "image height");
        cmd->add_option("--width", w, "image width");
        cmd->add_option("--n-train", n_train, "training sample count (even)");
        cmd->add_option("--n-valid", n_valid, "validation sample count (even)");
        cmd->add_option("--n-test", n_test, "test sample count (even)");
        cmd->add_option("--rho-train", rho_train, "P(confounder == label) on train/valid");
        cmd->add_option("--rho-test", rho_test, "P(confounder == label) on test");
        cmd->add_option("--lesion-offset", lesion_offset, "lesion intensity offset");
        cmd->add_option("--noise-sigma", noise_sigma, "background noise sigma");
        cmd->add_option("--lesion-axis-min", lesion_axis_min, "smallest ellipse axis, px");
        cmd->add_option("--lesion-axis-max", lesion_axis_max, "largest ellipse axis, px");
        cmd->add_option("--patch-offset", patch_offset, "confounder patch intensity offset");
    }

    json to_json() const {
        return json{{"h", h},
                    {"w", w},
                    {"n_train", n_train},
                    {"n_valid", n_valid},
                    {"n_test", n_test},
                    {"rho_train", rho_train},
                    {"rho_test", rho_test},
                    {"lesion_offset", lesion_offset},
                    {"noise_sigma", noise_sigma},
                    {"lesion_axis_min", lesion_axis_min},
                    {"lesion_axis_max", lesion_axis_max},
                    {"patch_offset", patch_offset},
                    {"seed", seed},
                    {"dtype", dtype}};
    }
};

struct PenaltyFlags {
    std::string variant = "contrast";
    double lambda = 0.1;
    std::string norm = "l2_squared";
    std::string target = "logits";
    std::string healthy = "penalize_all";

    void add_options(CLI::App* cmd, bool with_variant) {
        if (with_variant)
            cmd->add_option("--variant", variant, "penalty variant")
                ->check(CLI::IsMember({"none", "per_class", "contrast"}));
        cmd->add_option("--lambda", lambda, "penalty weight");
        cmd->add_option("--norm", norm, "penalty norm")->check(CLI::IsMember({"l2", "l2_squared"}));
        cmd->add_option("--target", target, "saliency target")
            ->check(CLI::IsMember({"logits", "probabilities"}));
        cmd->add_option("--healthy", healthy, "penalty policy for seg-empty samples")
            ->check(CLI::IsMember({"penalize_all", "skip"}));
    }

    json to_json() const {
        return json{{"variant", variant},
                    {"lambda", lambda},
                    {"norm", norm},
                    {"target", target},
                    {"healthy", healthy}};
    }
};

struct TrainFlags {
    int epochs_max = 60;
    int batch_size = 16;
    double lr = 1e-3;
    int patience = 10;

    void add_options(CLI::App* cmd) {
        cmd->add_option("--epochs", epochs_max, "maximum epochs");
        cmd->add_option("--batch-size", batch_size, "batch size");
        cmd->add_option("--lr", lr, "learning rate");
        cmd->add_option("--patience", patience, "early-stop patience, epochs");
    }

    json to_json(std::uint64_t seed) const {
        return json{{"epochs_max", epochs_max},
                    {"batch_size", batch_size},
                    {"lr", lr},
                    {"patience", patience},
                    {"seed", seed}};
    }
};

json model_json(const std::string& dtype, std::uint32_t h, std::uint32_t w) {
    return json{{"in", {1, h, w}}, {"dtype", dtype}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Saliency-regularized lesion classification laboratory"};
    app.require_subcommand(1);
    app.fallthrough();

    std::uint64_t seed = 0;
    std::string out;
    int threads = 1;
    std::string dtype = "f32";
    app.add_option("--seed", seed, "base RNG seed")->capture_default_str();
    app.add_option("--out", out, "output directory or file prefix");
    app.add_option("--threads", threads, "worker threads for independent trials");
    app.add_option("--dtype", dtype, "numeric precision")->check(CLI::IsMember({"f32", "f64"}));

    // generate
    auto* gen = app.add_subcommand("generate", "synthesize a confounded dataset directory");
    SynthFlags gen_synth;
    gen_synth.add_options(gen);

    // train
    auto* tr = app.add_subcommand("train", "single training run with fixed hyperparameters");
    std::string tr_data;
    tr->add_option("--data", tr_data, "dataset directory (otherwise synthesized in memory)");
    SynthFlags tr_synth;
    tr_synth.add_options(tr);
    TrainFlags tr_train;
    tr_train.add_options(tr);
    PenaltyFlags tr_penalty;
    tr_penalty.add_options(tr, true);

    // sweep / experiment share flags
    auto add_sweep_like = [&](CLI::App* cmd, std::string& data, SynthFlags& synth, TrainFlags& train,
                              PenaltyFlags& penalty, int& trials, std::vector<double>& lambda_range,
                              std::vector<double>& lr_range, bool with_variant) {
        cmd->add_option("--data", data, "dataset directory shared by all trials "
                                        "(otherwise a fresh dataset is drawn per trial seed)");
        synth.add_options(cmd);
        train.add_options(cmd);
        penalty.add_options(cmd, with_variant);
        cmd->add_option("--trials", trials, "number of seeded trials");
        cmd->add_option("--lambda-range", lambda_range, "log-uniform lambda range")->expected(2);
        cmd->add_option("--lr-range", lr_range, "log-uniform learning-rate range")->expected(2);
    };

    auto* sw = app.add_subcommand("sweep", "seeded random hyperparameter search, one variant");
    std::string sw_data;
    SynthFlags sw_synth;
    TrainFlags sw_train;
    PenaltyFlags sw_penalty;
    int sw_trials = 20;
    std::vector<double> sw_lambda{1e-3, 10.0}, sw_lr{1e-4, 1e-2};
    add_sweep_like(sw, sw_data, sw_synth, sw_train, sw_penalty, sw_trials, sw_lambda, sw_lr, true);

    auto* ex = app.add_subcommand("experiment", "compare variants: sweep each, then report");
    std::string ex_data;
    SynthFlags ex_synth;
    TrainFlags ex_train;
    PenaltyFlags ex_penalty;
    int ex_trials = 20;
    std::vector<double> ex_lambda{1e-3, 10.0}, ex_lr{1e-4, 1e-2};
    std::vector<std::string> ex_variants{"none", "contrast"};
    add_sweep_like(ex, ex_data, ex_synth, ex_train, ex_penalty, ex_trials, ex_lambda, ex_lr, false);
    ex->add_option("--variants", ex_variants, "penalty variants to compare")
        ->check(CLI::IsMember({"none", "per_class", "contrast"}));

    // saliency
    auto* sal = app.add_subcommand("saliency", "export input/saliency/masked PGM overlays");
    std::string sal_ckpt, sal_data, sal_split = "test", sal_variant = "contrast",
                sal_target = "logits";
    std::size_t sal_index = 0;
    sal->add_option("--ckpt", sal_ckpt, "model checkpoint")->required();
    sal->add_option("--data", sal_data, "dataset directory")->required();
    sal->add_option("--split", sal_split, "dataset split")
        ->check(CLI::IsMember({"train", "valid", "test"}));
    sal->add_option("--index", sal_index, "sample index within the split");
    sal->add_option("--variant", sal_variant, "saliency variant")
        ->check(CLI::IsMember({"per_class", "contrast"}));
    sal->add_option("--target", sal_target, "saliency target")
        ->check(CLI::IsMember({"logits", "probabilities"}));

    // report
    auto* rep = app.add_subcommand("report", "re-aggregate an existing runs.jsonl");
    std::string rep_runs, rep_csv;
    rep->add_option("--runs", rep_runs, "runs.jsonl path")->required();
    rep->add_option("--csv", rep_csv, "also write report.csv here");

    CLI11_PARSE(app, argc, argv);

    auto sweep_json = [&](int trials, const std::vector<double>& lambda_range,
                          const std::vector<double>& lr_range) {
        return json{{"n_trials", trials},
                    {"base_seed", seed},
                    {"lambda_min", lambda_range[0]},
                    {"lambda_max", lambda_range[1]},
                    {"lr_min", lr_range[0]},
                    {"lr_max", lr_range[1]},
                    {"threads", threads}};
    };

    auto data_json = [&](const std::string& dir, const SynthFlags& synth) {
        SynthFlags s = synth;
        s.seed = seed;
        s.dtype = dtype;
        return dir.empty() ? json{{"synth", s.to_json()}} : json{{"dir", dir}};
    };

    if (gen->parsed()) {
        if (out.empty()) {
            std::fprintf(stderr, "error: generate requires --out\n");
            return 2;
        }
        SynthFlags s = gen_synth;
        s.seed = seed;
        s.dtype = dtype;
        gm_dataset* ds = nullptr;
        gm_status st = gm_dataset_generate(s.to_json().dump().c_str(), &ds);
        if (st != GM_OK) return fail(st);
        st = gm_dataset_write(ds, out.c_str());
        if (st != GM_OK) {
            gm_dataset_free(ds);
            return fail(st);
        }
        char* desc = nullptr;
        if (gm_dataset_describe(ds, &desc) == GM_OK && desc) {
            std::printf("wrote %s: %s\n", out.c_str(), desc);
            gm_string_free(desc);
        }
        gm_dataset_free(ds);
        return 0;
    }

    if (tr->parsed()) {
        json spec{{"model", model_json(dtype, tr_synth.h, tr_synth.w)},
                  {"data", data_json(tr_data, tr_synth)},
                  {"train", tr_train.to_json(seed)},
                  {"penalty", tr_penalty.to_json()}};
        const std::string ckpt = out.empty() ? "" : out + "/checkpoint.gmc";
        if (!out.empty()) {
            std::error_code ec;
            std::filesystem::create_directories(out, ec);
            if (ec) {
                std::fprintf(stderr, "error: cannot create %s\n", out.c_str());
                return 3;
            }
        }
        char* result = nullptr;
        const gm_status st =
            gm_train(spec.dump().c_str(), ckpt.empty() ? nullptr : ckpt.c_str(), &result);
        if (st != GM_OK) return fail(st);
        std::printf("%s\n", result);
        if (!out.empty()) {
            FILE* f = std::fopen((out + "/runs.jsonl").c_str(), "wb");
            if (!f) {
                std::fprintf(stderr, "error: cannot write runs.jsonl\n");
                gm_string_free(result);
                return 3;
            }
            std::fprintf(f, "%s\n", result);
            std::fclose(f);
        }
        gm_string_free(result);
        return 0;
    }

    auto run_experiment_cmd = [&](const std::string& data, const SynthFlags& synth,
                                  const TrainFlags& train, const PenaltyFlags& penalty, int trials,
                                  const std::vector<double>& lambda_range,
                                  const std::vector<double>& lr_range,
                                  const std::vector<std::string>& variants) -> int {
        if (out.empty()) {
            std::fprintf(stderr, "error: this command requires --out\n");
            return 2;
        }
        json spec{{"model", model_json(dtype, synth.h, synth.w)},
                  {"data", data_json(data, synth)},
                  {"train", train.to_json(seed)},
                  {"penalty", penalty.to_json()},
                  {"sweep", sweep_json(trials, lambda_range, lr_range)},
                  {"variants", variants}};
        char* table = nullptr;
        const gm_status st = gm_experiment(spec.dump().c_str(), out.c_str(), &table);
        if (st != GM_OK) return fail(st);
        std::printf("%s", table);
        gm_string_free(table);
        return 0;
    };

    if (sw->parsed())
        return run_experiment_cmd(sw_data, sw_synth, sw_train, sw_penalty, sw_trials, sw_lambda,
                                  sw_lr, {sw_penalty.variant});
    if (ex->parsed())
        return run_experiment_cmd(ex_data, ex_synth, ex_train, ex_penalty, ex_trials, ex_lambda,
                                  ex_lr, ex_variants);

    if (sal->parsed()) {
        if (out.empty()) {
            std::fprintf(stderr, "error: saliency requires --out (file prefix)\n");
            return 2;
        }
        gm_model* model = nullptr;
        gm_status st = gm_model_load(sal_ckpt.c_str(), &model);
        if (st != GM_OK) return fail(st);
        gm_dataset* ds = nullptr;
        st = gm_dataset_read(sal_data.c_str(), &ds);
        if (st != GM_OK) {
            gm_model_free(model);
            return fail(st);
        }
        st = gm_saliency_export(model, ds, sal_split.c_str(), sal_index, sal_variant.c_str(),
                                sal_target.c_str(), out.c_str());
        gm_dataset_free(ds);
        gm_model_free(model);
        if (st != GM_OK) return fail(st);
        std::printf("wrote %s_input.pgm, %s_saliency.pgm, %s_masked.pgm\n", out.c_str(),
                    out.c_str(), out.c_str());
        return 0;
    }

    if (rep->parsed()) {
        char* table = nullptr;
        const gm_status st = gm_report(rep_runs.c_str(), rep_csv.empty() ? nullptr : rep_csv.c_str(),
                                       &table);
        if (st != GM_OK) return fail(st);
        std::printf("%s", table);
        gm_string_free(table);
        return 0;
    }

    return 2;
}
