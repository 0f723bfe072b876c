#pragma once

#include "gradmask/autodiff.hpp"
#include "gradmask/nn.hpp"
#include "gradmask/synth.hpp"

namespace gradmask::loss {

enum class Variant { None, PerClass, Contrast };
enum class Norm { L2, L2Squared };
enum class SaliencyTarget { Logits, Probabilities };
// What to do with the penalty on healthy samples, whose segmentation is
// empty and whose mask therefore covers the whole image.
enum class HealthyPolicy { PenalizeAll, Skip };

struct PenaltyConfig {
    Variant variant = Variant::None;
    double lambda = 0.0;
    Norm norm = Norm::L2Squared;
    SaliencyTarget target = SaliencyTarget::Logits;
    HealthyPolicy healthy = HealthyPolicy::PenalizeAll;

    void validate() const;
};

const char* variant_name(Variant v) noexcept;
Variant variant_from_name(const std::string& name);

// Softmax cross-entropy -log softmax(logits)[y], via the two-class identity
// -log p_y = softplus(z_other - z_y).
ad::Node classification_loss(const ad::Node& logits, int y);

// d(output_c)/dx for a single class output; x must be a requires-grad leaf.
ad::Node saliency_per_class(const nn::Model& m, const ad::Node& x, int class_idx,
                            SaliencyTarget target, bool create_graph);

// d|y1 - y0|/dx == sign(y1-y0) * (dy1/dx - dy0/dx), with sign(0) = 0.
ad::Node contrast_saliency(const nn::Model& m, const ad::Node& x, SaliencyTarget target,
                           bool create_graph);

// || s * (1 - seg) ||_2 (via sqrt_eps) or its square. seg is binary [H,W]
// and broadcasts across the channels of s.
ad::Node masked_penalty(const ad::Node& s, const Tensor& seg, Norm norm);

struct LossTerms {
    ad::Node total;           // classification + lambda * penalty
    double classification;    // detached values for logging
    double penalty;
};

// The training objective for one sample. The penalty saliency is built with
// create_graph so that optimizing `total` trains through it. Variant::None
// never runs a saliency pass.
LossTerms gradmask_loss(const nn::Model& m, const synth::Sample& sample, const PenaltyConfig& cfg);

} // namespace gradmask::loss
