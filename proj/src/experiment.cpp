#include "gradmask/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gradmask/metrics.hpp"

namespace gradmask::experiment {

void ExperimentSpec::validate() const {
    model.validate();
    sweep.validate();
    penalty_base.validate();
    if (variants.empty()) raise(ErrorCode::Validation, "experiment: at least one variant required");
    if (!data.fixed && !data.synth)
        raise(ErrorCode::Validation, "experiment: either a dataset or a synth config is required");
}

std::vector<VariantSummary> summarize(const std::vector<train::RunResult>& runs) {
    std::vector<std::string> order;
    for (const train::RunResult& r : runs)
        if (std::find(order.begin(), order.end(), r.variant) == order.end())
            order.push_back(r.variant);

    std::vector<VariantSummary> out;
    for (const std::string& variant : order) {
        VariantSummary s;
        s.variant = variant;
        std::vector<double> test, tr, va;
        double best_valid = -1.0;
        for (const train::RunResult& r : runs) {
            if (r.variant != variant) continue;
            ++s.n_trials;
            if (!r.ok) continue;
            ++s.n_ok;
            test.push_back(r.test_auc);
            tr.push_back(r.train_auc);
            va.push_back(r.best_valid_auc);
            if (s.n_samples == 0) s.n_samples = r.n_train;
            if (r.best_valid_auc > best_valid) {
                best_valid = r.best_valid_auc;
                s.best_valid_test_auc = r.test_auc;
            }
        }
        if (test.size() >= 2) {
            const metrics::MeanSd t = metrics::mean_sd(test);
            s.test_auc_mean = t.mean;
            s.test_auc_sd = t.sd;
            s.train_auc_mean = metrics::mean_sd(tr).mean;
            s.valid_auc_mean = metrics::mean_sd(va).mean;
        } else if (test.size() == 1) {
            s.test_auc_mean = test[0];
            s.train_auc_mean = tr[0];
            s.valid_auc_mean = va[0];
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::string render_table(const std::vector<VariantSummary>& summaries) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "Variant" << std::setw(22) << "Test AUC Mean + SD"
       << std::setw(12) << "# Samples" << std::setw(10) << "Trials" << '\n';
    os << std::string(54, '-') << '\n';
    os << std::fixed << std::setprecision(3);
    for (const VariantSummary& s : summaries) {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(3) << s.test_auc_mean << " +- " << s.test_auc_sd;
        os << std::left << std::setw(12) << s.variant << std::setw(22) << cell.str()
           << std::setw(12) << s.n_samples << s.n_ok << "/" << s.n_trials << '\n';
    }
    for (const VariantSummary& s : summaries)
        os << s.variant << ": train AUC mean " << std::setprecision(3) << s.train_auc_mean
           << ", overfit gap " << (s.train_auc_mean - s.test_auc_mean)
           << ", best-valid trial test AUC " << s.best_valid_test_auc << '\n';
    return os.str();
}

void write_report_csv(const std::filesystem::path& path,
                      const std::vector<VariantSummary>& summaries) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) raise(ErrorCode::Io, "cannot write " + path.string());
    os << "variant,test_auc_mean,test_auc_sd,n_samples,n_trials\n";
    os << std::setprecision(17);
    for (const VariantSummary& s : summaries)
        os << s.variant << ',' << s.test_auc_mean << ',' << s.test_auc_sd << ',' << s.n_samples
           << ',' << s.n_trials << '\n';
    if (!os) raise(ErrorCode::Io, "write failed: " + path.string());
}

std::vector<train::RunResult> read_runs_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) raise(ErrorCode::Io, "cannot open " + path.string());
    std::vector<train::RunResult> runs;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        runs.push_back(train::RunResult::from_json_line(line));
    }
    return runs;
}

void write_runs_jsonl(const std::filesystem::path& path,
                      const std::vector<train::RunResult>& runs) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) raise(ErrorCode::Io, "cannot write " + path.string());
    for (const train::RunResult& r : runs) os << r.to_json_line() << '\n';
    if (!os) raise(ErrorCode::Io, "write failed: " + path.string());
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) raise(ErrorCode::Io, "cannot create directory " + out_dir.string());

    ExperimentResult result;
    try {
        for (loss::Variant variant : spec.variants) {
            loss::PenaltyConfig penalty = spec.penalty_base;
            penalty.variant = variant;
            std::vector<train::TrialOutcome> outcomes =
                train::sweep(spec.model, spec.data, spec.sweep, penalty);
            for (std::size_t t = 0; t < outcomes.size(); ++t) {
                result.runs.push_back(outcomes[t].result);
                if (outcomes[t].result.ok && outcomes[t].best_params) {
                    nn::Model m = nn::Model::init(spec.model, outcomes[t].result.seed);
                    ad::restore_params(m.params(), *outcomes[t].best_params);
                    m.save(out_dir / ("ckpt_" + std::string(loss::variant_name(variant)) + "_" +
                                      std::to_string(t) + ".gmc"));
                }
            }
        }
    } catch (...) {
        // Flush whatever completed before propagating.
        if (!result.runs.empty()) write_runs_jsonl(out_dir / "runs.jsonl", result.runs);
        throw;
    }

    write_runs_jsonl(out_dir / "runs.jsonl", result.runs);
    result.summaries = summarize(result.runs);
    write_report_csv(out_dir / "report.csv", result.summaries);
    result.table = render_table(result.summaries);
    return result;
}

namespace {

void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::uint32_t h,
               std::uint32_t w) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) raise(ErrorCode::Io, "cannot write " + path.string());
    os << "P5\n" << w << ' ' << h << "\n255\n";
    for (double v : pixels) {
        const double clamped = std::min(1.0, std::max(0.0, v));
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
    }
    if (!os) raise(ErrorCode::Io, "write failed: " + path.string());
}

} // namespace

void export_saliency_pgm(const nn::Model& model, const synth::Sample& sample,
                         loss::Variant variant, loss::SaliencyTarget target,
                         const std::filesystem::path& prefix) {
    if (variant == loss::Variant::None)
        raise(ErrorCode::Validation, "saliency export requires per_class or contrast");
    ad::Node x = ad::lift(sample.x, true);
    ad::Node s = variant == loss::Variant::PerClass
                     ? loss::saliency_per_class(model, x, 1, target, false)
                     : loss::contrast_saliency(model, x, target, false);

    const std::uint32_t h = sample.x.shape()[1], w = sample.x.shape()[2];
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    // Channel-summed |saliency|, normalized by its own max; an identically
    // zero map stays all black instead of dividing by zero.
    std::vector<double> mag(hw, 0.0);
    for (std::uint32_t c = 0; c < s.value().shape()[0]; ++c)
        for (std::size_t i = 0; i < hw; ++i)
            mag[i] += std::fabs(s.value().at(static_cast<std::size_t>(c) * hw + i));
    const double peak = *std::max_element(mag.begin(), mag.end());
    std::vector<double> sal(hw, 0.0), masked(hw, 0.0);
    if (peak > 0.0) {
        for (std::size_t i = 0; i < hw; ++i) {
            sal[i] = mag[i] / peak;
            masked[i] = sal[i] * (1.0 - sample.seg.at(i));
        }
    }
    write_pgm(prefix.string() + "_input.pgm", sample.x.to_doubles(), h, w);
    write_pgm(prefix.string() + "_saliency.pgm", sal, h, w);
    write_pgm(prefix.string() + "_masked.pgm", masked, h, w);
}

} // namespace gradmask::experiment
