#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gradmask/loss.hpp"
#include "gradmask/nn.hpp"
#include "gradmask/synth.hpp"

namespace gradmask::train {

struct TrainConfig {
    int epochs_max = 60;
    int batch_size = 16;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int patience = 10; // epochs without valid-AUC improvement before stopping
    loss::PenaltyConfig penalty;
    std::uint64_t seed = 0;

    void validate() const;
};

// Adam with bias correction. Moments are kept in double regardless of the
// parameter dtype.
class Adam {
public:
    Adam(std::span<const ad::Node> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);
    void step(std::span<ad::Node> params, std::span<const ad::Node> grads);

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Tracks the best validation score; ties keep the earlier epoch.
struct EarlyStopper {
    explicit EarlyStopper(int patience) : patience_(patience) {}
    bool observe(double score) {
        if (score > best_) {
            best_ = score;
            since_ = 0;
            return true;
        }
        ++since_;
        return false;
    }
    bool should_stop() const { return since_ >= patience_; }
    double best() const { return best_; }

private:
    int patience_;
    double best_ = -std::numeric_limits<double>::infinity();
    int since_ = 0;
};

struct RunResult {
    std::uint64_t seed = 0;
    std::string variant = "none";
    double lambda = 0.0;
    double lr = 0.0;
    double best_valid_auc = 0.0;
    double test_auc = 0.0;
    double train_auc = 0.0; // on the kept parameters; train minus test is the overfitting gap
    int epochs_trained = 0;
    std::uint32_t n_train = 0;
    bool ok = true;
    std::string error;

    std::string to_json_line() const;
    static RunResult from_json_line(const std::string& line);
};

struct TrainOutput {
    RunResult result;
    Tensor best_params; // flat checkpoint of the best epoch
};

// Minimizes the batch-mean objective with Adam; selects the epoch with the
// best validation AUC; evaluates test AUC once, on the kept parameters.
// Non-finite losses abort with a diagnostic.
TrainOutput train(const nn::ModelConfig& model_cfg, const synth::Dataset& data,
                  const TrainConfig& cfg);

// Softmax p1 scores and derived metrics on a sample set, without recording.
std::vector<double> predict_scores(const nn::Model& m, std::span<const synth::Sample> samples);
double evaluate_auc(const nn::Model& m, std::span<const synth::Sample> samples);
double evaluate_accuracy(const nn::Model& m, std::span<const synth::Sample> samples);

struct SweepConfig {
    int n_trials = 20;
    double lambda_min = 1e-3;
    double lambda_max = 10.0;
    double lr_min = 1e-4;
    double lr_max = 1e-2;
    std::uint64_t base_seed = 0;
    int threads = 1;
    // Template for the non-swept knobs (epochs_max, batch_size, patience);
    // lr, lambda and seed are overwritten per trial.
    TrainConfig train;

    void validate() const;
};

// Per trial either the fixed dataset is reused or a fresh one is generated
// with the trial seed.
struct DataSource {
    std::optional<synth::SynthConfig> synth;
    const synth::Dataset* fixed = nullptr;
};

struct TrialOutcome {
    RunResult result;
    std::optional<Tensor> best_params;
};

// n_trials independent runs; trial i uses seed base_seed+i and samples
// (lambda, lr) from its own substream. A failing trial is recorded, not
// fatal, unless every trial fails. Results are in trial order regardless of
// thread scheduling.
std::vector<TrialOutcome> sweep(const nn::ModelConfig& model_cfg, const DataSource& data,
                                const SweepConfig& cfg, const loss::PenaltyConfig& penalty);

} // namespace gradmask::train
