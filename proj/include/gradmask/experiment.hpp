#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gradmask/trainer.hpp"

namespace gradmask::experiment {

// One sweep per variant over a shared data source. Writes runs.jsonl (one
// record per trial, trial order, variants in listed order), one checkpoint
// per successful trial, and report.csv; returns the human-readable table.
struct ExperimentSpec {
    nn::ModelConfig model;
    train::DataSource data;
    train::SweepConfig sweep;
    loss::PenaltyConfig penalty_base; // variant is overridden per entry below
    std::vector<loss::Variant> variants = {loss::Variant::None, loss::Variant::Contrast};

    void validate() const;
};

struct VariantSummary {
    std::string variant;
    double test_auc_mean = 0.0;
    double test_auc_sd = 0.0;
    double train_auc_mean = 0.0;
    double valid_auc_mean = 0.0;
    double best_valid_test_auc = 0.0; // test AUC of the best-valid trial
    std::uint32_t n_samples = 0;      // training-set size of the underlying runs
    int n_ok = 0;
    int n_trials = 0;
};

struct ExperimentResult {
    std::vector<train::RunResult> runs;
    std::vector<VariantSummary> summaries;
    std::string table;
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir);

// Aggregation used both by run_experiment and by the standalone report
// command. Failed runs are excluded from the statistics.
std::vector<VariantSummary> summarize(const std::vector<train::RunResult>& runs);
std::string render_table(const std::vector<VariantSummary>& summaries);
void write_report_csv(const std::filesystem::path& path,
                      const std::vector<VariantSummary>& summaries);

std::vector<train::RunResult> read_runs_jsonl(const std::filesystem::path& path);
void write_runs_jsonl(const std::filesystem::path& path,
                      const std::vector<train::RunResult>& runs);

// Figure-style export: three 8-bit PGM (P5) images. `prefix` gains
// _input.pgm, _saliency.pgm and _masked.pgm suffixes. The saliency image is
// |s| normalized by its own max (all black when the map is identically
// zero); the masked image applies (1 - seg) under the same normalization.
void export_saliency_pgm(const nn::Model& model, const synth::Sample& sample,
                         loss::Variant variant, loss::SaliencyTarget target,
                         const std::filesystem::path& prefix);

} // namespace gradmask::experiment
