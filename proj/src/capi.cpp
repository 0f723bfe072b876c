#include "gradmask/capi.h"

#include <cstdlib>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "gradmask/experiment.hpp"
#include "gradmask/trainer.hpp"

using nlohmann::json;
namespace gm = gradmask;

struct gm_dataset {
    gm::synth::Dataset ds;
};

struct gm_model {
    gm::nn::Model model;
};

namespace {

thread_local std::string t_last_error;

gm_status map_code(gm::ErrorCode code) {
    switch (code) {
    case gm::ErrorCode::Shape: return GM_ERR_SHAPE;
    case gm::ErrorCode::Dtype: return GM_ERR_DTYPE;
    case gm::ErrorCode::Validation: return GM_ERR_VALIDATION;
    case gm::ErrorCode::Domain: return GM_ERR_DOMAIN;
    case gm::ErrorCode::Contract: return GM_ERR_CONTRACT;
    case gm::ErrorCode::Unsupported: return GM_ERR_UNSUPPORTED;
    case gm::ErrorCode::Io: return GM_ERR_IO;
    case gm::ErrorCode::Format: return GM_ERR_FORMAT;
    case gm::ErrorCode::Diverged: return GM_ERR_DIVERGED;
    case gm::ErrorCode::Internal: return GM_ERR_INTERNAL;
    }
    return GM_ERR_INTERNAL;
}

template <typename F>
gm_status guarded(F&& f) {
    try {
        f();
        t_last_error.clear();
        return GM_OK;
    } catch (const gm::Error& e) {
        t_last_error = e.what();
        return map_code(e.code());
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return GM_ERR_INTERNAL;
    } catch (...) {
        t_last_error = "unknown error";
        return GM_ERR_INTERNAL;
    }
}

gm_status invalid_arg(const char* msg) {
    t_last_error = msg;
    return GM_ERR_INVALID_ARG;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

json parse_json(const char* text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        gm::raise(gm::ErrorCode::Validation, std::string(what) + ": " + e.what());
    }
}

gm::loss::PenaltyConfig penalty_from_json(const json& j) {
    gm::loss::PenaltyConfig cfg;
    try {
        if (j.contains("variant")) cfg.variant = gm::loss::variant_from_name(j["variant"].get<std::string>());
        if (j.contains("lambda")) cfg.lambda = j["lambda"].get<double>();
        if (j.contains("norm")) {
            const std::string n = j["norm"].get<std::string>();
            if (n == "l2")
                cfg.norm = gm::loss::Norm::L2;
            else if (n == "l2_squared")
                cfg.norm = gm::loss::Norm::L2Squared;
            else
                gm::raise(gm::ErrorCode::Validation, "penalty: unknown norm '" + n + "'");
        }
        if (j.contains("target")) {
            const std::string t = j["target"].get<std::string>();
            if (t == "logits")
                cfg.target = gm::loss::SaliencyTarget::Logits;
            else if (t == "probabilities")
                cfg.target = gm::loss::SaliencyTarget::Probabilities;
            else
                gm::raise(gm::ErrorCode::Validation, "penalty: unknown target '" + t + "'");
        }
        if (j.contains("healthy")) {
            const std::string hp = j["healthy"].get<std::string>();
            if (hp == "penalize_all")
                cfg.healthy = gm::loss::HealthyPolicy::PenalizeAll;
            else if (hp == "skip")
                cfg.healthy = gm::loss::HealthyPolicy::Skip;
            else
                gm::raise(gm::ErrorCode::Validation, "penalty: unknown healthy policy '" + hp + "'");
        }
    } catch (const json::exception& e) {
        gm::raise(gm::ErrorCode::Validation, std::string("penalty: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

gm::train::TrainConfig train_from_json(const json& j) {
    gm::train::TrainConfig cfg;
    try {
        if (j.contains("epochs_max")) cfg.epochs_max = j["epochs_max"].get<int>();
        if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
        if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
        if (j.contains("patience")) cfg.patience = j["patience"].get<int>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    } catch (const json::exception& e) {
        gm::raise(gm::ErrorCode::Validation, std::string("train: ") + e.what());
    }
    return cfg;
}

gm::train::SweepConfig sweep_from_json(const json& j) {
    gm::train::SweepConfig cfg;
    try {
        if (j.contains("n_trials")) cfg.n_trials = j["n_trials"].get<int>();
        if (j.contains("base_seed")) cfg.base_seed = j["base_seed"].get<std::uint64_t>();
        if (j.contains("lambda_min")) cfg.lambda_min = j["lambda_min"].get<double>();
        if (j.contains("lambda_max")) cfg.lambda_max = j["lambda_max"].get<double>();
        if (j.contains("lr_min")) cfg.lr_min = j["lr_min"].get<double>();
        if (j.contains("lr_max")) cfg.lr_max = j["lr_max"].get<double>();
        if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    } catch (const json::exception& e) {
        gm::raise(gm::ErrorCode::Validation, std::string("sweep: ") + e.what());
    }
    return cfg;
}

// Shared by gm_train and gm_experiment; owns the dataset when loaded/generated.
struct SpecData {
    gm::nn::ModelConfig model;
    std::unique_ptr<gm::synth::Dataset> owned;
    std::optional<gm::synth::SynthConfig> synth;
    gm::loss::PenaltyConfig penalty;
    gm::train::TrainConfig train;
};

SpecData spec_common(const json& j) {
    SpecData sd;
    if (j.contains("model")) sd.model = gm::nn::ModelConfig::from_json(j["model"].dump());
    if (!j.contains("data"))
        gm::raise(gm::ErrorCode::Validation, "spec: missing \"data\" section");
    const json& data = j["data"];
    if (data.contains("dir")) {
        sd.owned = std::make_unique<gm::synth::Dataset>(
            gm::synth::read_dataset(data["dir"].get<std::string>()));
    } else if (data.contains("synth")) {
        sd.synth = gm::synth::SynthConfig::from_json(data["synth"].dump());
        sd.synth->validate();
    } else {
        gm::raise(gm::ErrorCode::Validation, "spec: data needs either \"dir\" or \"synth\"");
    }
    if (j.contains("penalty")) sd.penalty = penalty_from_json(j["penalty"]);
    if (j.contains("train")) sd.train = train_from_json(j["train"]);
    return sd;
}

} // namespace

extern "C" {

const char* gm_status_name(gm_status status) {
    switch (status) {
    case GM_OK: return "ok";
    case GM_ERR_INVALID_ARG: return "invalid_arg";
    case GM_ERR_SHAPE: return "shape";
    case GM_ERR_DTYPE: return "dtype";
    case GM_ERR_VALIDATION: return "validation";
    case GM_ERR_DOMAIN: return "domain";
    case GM_ERR_CONTRACT: return "contract";
    case GM_ERR_UNSUPPORTED: return "unsupported";
    case GM_ERR_IO: return "io";
    case GM_ERR_FORMAT: return "format";
    case GM_ERR_DIVERGED: return "diverged";
    case GM_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* gm_last_error(void) { return t_last_error.c_str(); }

gm_status gm_dataset_generate(const char* synth_json, gm_dataset** out) {
    if (!synth_json || !out) return invalid_arg("gm_dataset_generate: NULL argument");
    return guarded([&] {
        gm::synth::SynthConfig cfg = gm::synth::SynthConfig::from_json(synth_json);
        *out = new gm_dataset{gm::synth::generate(cfg)};
    });
}

gm_status gm_dataset_read(const char* dir, gm_dataset** out) {
    if (!dir || !out) return invalid_arg("gm_dataset_read: NULL argument");
    return guarded([&] { *out = new gm_dataset{gm::synth::read_dataset(dir)}; });
}

gm_status gm_dataset_write(const gm_dataset* ds, const char* dir) {
    if (!ds || !dir) return invalid_arg("gm_dataset_write: NULL argument");
    return guarded([&] { gm::synth::write_dataset(dir, ds->ds); });
}

gm_status gm_dataset_split_count(const gm_dataset* ds, const char* split, size_t* out) {
    if (!ds || !split || !out) return invalid_arg("gm_dataset_split_count: NULL argument");
    return guarded([&] { *out = ds->ds.split(split).size(); });
}

gm_status gm_dataset_describe(const gm_dataset* ds, char** out) {
    if (!ds || !out) return invalid_arg("gm_dataset_describe: NULL argument");
    return guarded([&] {
        const gm::synth::SynthConfig& c = ds->ds.cfg;
        static const char* corners[] = {"top-left", "top-right", "bottom-left", "bottom-right"};
        std::ostringstream os;
        os << "samples: train " << ds->ds.train.size() << ", valid " << ds->ds.valid.size()
           << ", test " << ds->ds.test.size() << "; image " << c.h << "x" << c.w
           << "; rho_train " << c.rho_train << ", rho_test " << c.rho_test << "; confounder "
           << c.patch_size << "x" << c.patch_size << " at " << corners[ds->ds.patch_corner & 3]
           << "; seed " << c.seed;
        *out = dup_string(os.str());
    });
}

void gm_dataset_free(gm_dataset* ds) { delete ds; }

gm_status gm_model_load(const char* checkpoint_path, gm_model** out) {
    if (!checkpoint_path || !out) return invalid_arg("gm_model_load: NULL argument");
    return guarded([&] { *out = new gm_model{gm::nn::Model::load(checkpoint_path)}; });
}

void gm_model_free(gm_model* m) { delete m; }

gm_status gm_train(const char* spec_json, const char* checkpoint_out, char** result_json) {
    if (!spec_json) return invalid_arg("gm_train: NULL spec");
    return guarded([&] {
        const json j = parse_json(spec_json, "train spec");
        SpecData sd = spec_common(j);
        gm::train::TrainConfig tc = sd.train;
        tc.penalty = sd.penalty;

        std::unique_ptr<gm::synth::Dataset> generated;
        const gm::synth::Dataset* ds = sd.owned.get();
        if (!ds) {
            gm::synth::SynthConfig scfg = *sd.synth;
            generated = std::make_unique<gm::synth::Dataset>(gm::synth::generate(scfg));
            ds = generated.get();
        }
        gm::train::TrainOutput out = gm::train::train(sd.model, *ds, tc);
        if (checkpoint_out) {
            gm::nn::Model m = gm::nn::Model::init(sd.model, tc.seed);
            gm::ad::restore_params(m.params(), out.best_params);
            m.save(checkpoint_out);
        }
        if (result_json) *result_json = dup_string(out.result.to_json_line());
    });
}

gm_status gm_experiment(const char* spec_json, const char* out_dir, char** table_text) {
    if (!spec_json || !out_dir) return invalid_arg("gm_experiment: NULL argument");
    return guarded([&] {
        const json j = parse_json(spec_json, "experiment spec");
        SpecData sd = spec_common(j);

        gm::experiment::ExperimentSpec spec;
        spec.model = sd.model;
        spec.penalty_base = sd.penalty;
        if (sd.synth)
            spec.data.synth = sd.synth;
        else
            spec.data.fixed = sd.owned.get();
        if (j.contains("sweep")) spec.sweep = sweep_from_json(j["sweep"]);
        spec.sweep.train = sd.train;
        if (j.contains("variants")) {
            spec.variants.clear();
            for (const json& v : j["variants"])
                spec.variants.push_back(gm::loss::variant_from_name(v.get<std::string>()));
        }
        gm::experiment::ExperimentResult res = gm::experiment::run_experiment(spec, out_dir);
        if (table_text) *table_text = dup_string(res.table);
    });
}

gm_status gm_saliency_export(const gm_model* m, const gm_dataset* ds, const char* split,
                             size_t index, const char* variant, const char* target,
                             const char* out_prefix) {
    if (!m || !ds || !split || !variant || !target || !out_prefix)
        return invalid_arg("gm_saliency_export: NULL argument");
    return guarded([&] {
        const std::vector<gm::synth::Sample>& samples = ds->ds.split(split);
        if (index >= samples.size())
            gm::raise(gm::ErrorCode::Validation,
                      "sample index " + std::to_string(index) + " out of range for split '" +
                          split + "' of size " + std::to_string(samples.size()));
        gm::loss::SaliencyTarget st;
        if (std::strcmp(target, "logits") == 0)
            st = gm::loss::SaliencyTarget::Logits;
        else if (std::strcmp(target, "probabilities") == 0)
            st = gm::loss::SaliencyTarget::Probabilities;
        else
            gm::raise(gm::ErrorCode::Validation, std::string("unknown saliency target '") + target + "'");
        gm::experiment::export_saliency_pgm(m->model, samples[index],
                                            gm::loss::variant_from_name(variant), st, out_prefix);
    });
}

gm_status gm_report(const char* runs_jsonl, const char* csv_out, char** table_text) {
    if (!runs_jsonl) return invalid_arg("gm_report: NULL runs path");
    return guarded([&] {
        const std::vector<gm::train::RunResult> runs = gm::experiment::read_runs_jsonl(runs_jsonl);
        if (runs.empty()) gm::raise(gm::ErrorCode::Format, "runs file has no records");
        const std::vector<gm::experiment::VariantSummary> summaries =
            gm::experiment::summarize(runs);
        if (csv_out) gm::experiment::write_report_csv(csv_out, summaries);
        if (table_text) *table_text = dup_string(gm::experiment::render_table(summaries));
    });
}

void gm_string_free(char* s) { std::free(s); }

} // extern "C"
