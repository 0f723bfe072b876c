#include "gradmask/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "gradmask/metrics.hpp"
#include "gradmask/rng.hpp"

namespace gradmask::train {

using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs_max < 1) raise(ErrorCode::Validation, "train: epochs_max must be >= 1");
    if (batch_size < 1) raise(ErrorCode::Validation, "train: batch_size must be >= 1");
    if (patience < 1) raise(ErrorCode::Validation, "train: patience must be >= 1");
    if (!(lr > 0.0)) raise(ErrorCode::Validation, "train: learning rate must be positive");
    penalty.validate();
}

void SweepConfig::validate() const {
    if (n_trials < 1) raise(ErrorCode::Validation, "sweep: n_trials must be >= 1");
    if (threads < 1) raise(ErrorCode::Validation, "sweep: threads must be >= 1");
    if (!(lambda_min > 0.0) || lambda_max < lambda_min)
        raise(ErrorCode::Validation, "sweep: invalid lambda range");
    if (!(lr_min > 0.0) || lr_max < lr_min) raise(ErrorCode::Validation, "sweep: invalid lr range");
}

Adam::Adam(std::span<const ad::Node> params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const ad::Node& p : params) {
        m_.emplace_back(p.value().numel(), 0.0);
        v_.emplace_back(p.value().numel(), 0.0);
    }
}

void Adam::step(std::span<ad::Node> params, std::span<const ad::Node> grads) {
    if (params.size() != m_.size() || grads.size() != params.size())
        raise(ErrorCode::Contract, "adam: parameter/gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Tensor& g = grads[p].value();
        const Tensor& old = params[p].value();
        if (g.shape() != old.shape())
            raise(ErrorCode::Shape, "adam: gradient shape mismatch for parameter " + std::to_string(p));
        Tensor updated(old.shape(), old.dtype());
        for (std::size_t i = 0; i < old.numel(); ++i) {
            const double gi = g.at(i);
            m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * gi;
            v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * gi * gi;
            const double mhat = m_[p][i] / bc1;
            const double vhat = v_[p][i] / bc2;
            updated.set(i, old.at(i) - lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
        params[p].set_value(std::move(updated));
    }
}

std::vector<double> predict_scores(const nn::Model& m, std::span<const synth::Sample> samples) {
    ad::RecordScope no_graph(false);
    std::vector<double> out;
    out.reserve(samples.size());
    for (const synth::Sample& s : samples) {
        ad::Node logits = m.forward(ad::constant(s.x));
        out.push_back(nn::class_probabilities(logits).p1.value().scalar_value());
    }
    return out;
}

double evaluate_auc(const nn::Model& m, std::span<const synth::Sample> samples) {
    const std::vector<double> scores = predict_scores(m, samples);
    std::vector<int> labels(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) labels[i] = samples[i].y;
    return metrics::roc_auc(scores, labels);
}

double evaluate_accuracy(const nn::Model& m, std::span<const synth::Sample> samples) {
    if (samples.empty()) raise(ErrorCode::Domain, "accuracy of empty sample set");
    const std::vector<double> scores = predict_scores(m, samples);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if ((scores[i] > 0.5 ? 1 : 0) == samples[i].y) ++correct;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::string RunResult::to_json_line() const {
    json j;
    j["seed"] = seed;
    j["variant"] = variant;
    j["lambda"] = lambda;
    j["lr"] = lr;
    j["best_valid_auc"] = best_valid_auc;
    j["test_auc"] = test_auc;
    j["train_auc"] = train_auc;
    j["epochs_trained"] = epochs_trained;
    j["n_train"] = n_train;
    j["ok"] = ok;
    j["error"] = error;
    return j.dump();
}

RunResult RunResult::from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        raise(ErrorCode::Format, std::string("run record: ") + e.what());
    }
    RunResult r;
    try {
        r.seed = j.at("seed").get<std::uint64_t>();
        r.variant = j.at("variant").get<std::string>();
        r.lambda = j.at("lambda").get<double>();
        r.lr = j.at("lr").get<double>();
        r.best_valid_auc = j.at("best_valid_auc").get<double>();
        r.test_auc = j.at("test_auc").get<double>();
        r.train_auc = j.at("train_auc").get<double>();
        r.epochs_trained = j.at("epochs_trained").get<int>();
        r.n_train = j.at("n_train").get<std::uint32_t>();
        r.ok = j.at("ok").get<bool>();
        r.error = j.at("error").get<std::string>();
    } catch (const json::exception& e) {
        raise(ErrorCode::Format, std::string("run record: ") + e.what());
    }
    return r;
}

TrainOutput train(const nn::ModelConfig& model_cfg, const synth::Dataset& data,
                  const TrainConfig& cfg) {
    cfg.validate();
    model_cfg.validate();
    if (data.train.empty() || data.valid.empty() || data.test.empty())
        raise(ErrorCode::Validation, "train: all dataset splits must be nonempty");

    nn::Model model = nn::Model::init(model_cfg, cfg.seed);
    Adam adam(model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    Rng shuffle_rng = substream(cfg.seed, "shuffle");

    EarlyStopper stopper(cfg.patience);
    Tensor best = ad::checkpoint_params(model.params());
    double best_valid = -1.0;
    int epochs_run = 0;

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs_max; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            ad::Node batch_sum;
            double lc_sum = 0.0, pen_sum = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                loss::LossTerms terms = loss::gradmask_loss(model, data.train[order[i]], cfg.penalty);
                lc_sum += terms.classification;
                pen_sum += terms.penalty;
                batch_sum = batch_sum.defined() ? ad::add(batch_sum, terms.total) : terms.total;
            }
            const double count = static_cast<double>(end - start);
            ad::Node batch_loss = ad::scale(batch_sum, 1.0 / count);
            if (!std::isfinite(batch_loss.value().scalar_value()))
                raise(ErrorCode::Diverged,
                      "training diverged at epoch " + std::to_string(epoch) +
                          ": mean classification " + std::to_string(lc_sum / count) +
                          ", mean penalty " + std::to_string(pen_sum / count));
            std::vector<ad::Node> grads =
                ad::grad(batch_loss, model.params(), /*create_graph=*/false);
            adam.step(model.params(), grads);
        }
        ++epochs_run;
        // Exploded parameters can yield a finite loss (softplus of -inf is 0)
        // while the scores are NaN; treat that as divergence too.
        const std::vector<double> valid_scores = predict_scores(model, data.valid);
        for (double s : valid_scores)
            if (!std::isfinite(s))
                raise(ErrorCode::Diverged, "training diverged at epoch " + std::to_string(epoch) +
                                               ": non-finite validation scores");
        std::vector<int> valid_labels(data.valid.size());
        for (std::size_t i = 0; i < data.valid.size(); ++i) valid_labels[i] = data.valid[i].y;
        const double valid_auc = metrics::roc_auc(valid_scores, valid_labels);
        if (stopper.observe(valid_auc)) {
            best = ad::checkpoint_params(model.params());
            best_valid = valid_auc;
        }
        if (stopper.should_stop()) break;
    }

    ad::restore_params(model.params(), best);
    TrainOutput out;
    out.result.seed = cfg.seed;
    out.result.variant = loss::variant_name(cfg.penalty.variant);
    out.result.lambda = cfg.penalty.lambda;
    out.result.lr = cfg.lr;
    out.result.best_valid_auc = best_valid;
    out.result.test_auc = evaluate_auc(model, data.test);
    out.result.train_auc = evaluate_auc(model, data.train);
    out.result.epochs_trained = epochs_run;
    out.result.n_train = static_cast<std::uint32_t>(data.train.size());
    out.best_params = std::move(best);
    return out;
}

std::vector<TrialOutcome> sweep(const nn::ModelConfig& model_cfg, const DataSource& data,
                                const SweepConfig& cfg, const loss::PenaltyConfig& penalty) {
    cfg.validate();
    if (!data.fixed && !data.synth)
        raise(ErrorCode::Validation, "sweep: either a dataset or a synth config is required");

    std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(cfg.n_trials));
    std::atomic<int> next{0};

    auto run_trial = [&](int t) {
        const std::uint64_t trial_seed = cfg.base_seed + static_cast<std::uint64_t>(t);
        TrialOutcome& slot = outcomes[static_cast<std::size_t>(t)];
        try {
            Rng hyper = substream(trial_seed, "hyper");
            const double lambda = hyper.log_uniform(cfg.lambda_min, cfg.lambda_max);
            const double lr = hyper.log_uniform(cfg.lr_min, cfg.lr_max);

            TrainConfig tc = cfg.train;
            tc.lr = lr;
            tc.penalty = penalty;
            tc.penalty.lambda = lambda;
            tc.seed = trial_seed;

            TrainOutput out;
            if (data.synth) {
                synth::SynthConfig scfg = *data.synth;
                scfg.seed = trial_seed; // fresh dataset per trial
                out = train(model_cfg, synth::generate(scfg), tc);
            } else {
                out = train(model_cfg, *data.fixed, tc);
            }
            slot.result = std::move(out.result);
            slot.best_params = std::move(out.best_params);
        } catch (const Error& e) {
            slot.result.seed = trial_seed;
            slot.result.variant = loss::variant_name(penalty.variant);
            slot.result.ok = false;
            slot.result.error = std::string(error_code_name(e.code())) + ": " + e.what();
        }
    };

    const int workers = std::min(cfg.threads, cfg.n_trials);
    if (workers <= 1) {
        for (int t = 0; t < cfg.n_trials; ++t) run_trial(t);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int wkr = 0; wkr < workers; ++wkr)
            pool.emplace_back([&] {
                for (;;) {
                    const int t = next.fetch_add(1);
                    if (t >= cfg.n_trials) return;
                    run_trial(t);
                }
            });
        for (std::thread& th : pool) th.join();
    }

    if (std::none_of(outcomes.begin(), outcomes.end(),
                     [](const TrialOutcome& o) { return o.result.ok; })) {
        std::string first = outcomes.empty() ? "no trials" : outcomes.front().result.error;
        raise(ErrorCode::Internal, "sweep: every trial failed; first error: " + first);
    }
    return outcomes;
}

} // namespace gradmask::train
