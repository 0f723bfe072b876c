#include "gradmask/loss.hpp"

namespace gradmask::loss {

void PenaltyConfig::validate() const {
    if (lambda < 0.0) raise(ErrorCode::Validation, "penalty: lambda must be nonnegative");
    if (!(lambda == lambda)) raise(ErrorCode::Validation, "penalty: lambda must be finite");
}

const char* variant_name(Variant v) noexcept {
    switch (v) {
    case Variant::None: return "none";
    case Variant::PerClass: return "per_class";
    case Variant::Contrast: return "contrast";
    }
    return "unknown";
}

Variant variant_from_name(const std::string& name) {
    if (name == "none") return Variant::None;
    if (name == "per_class") return Variant::PerClass;
    if (name == "contrast") return Variant::Contrast;
    raise(ErrorCode::Validation, "unknown penalty variant '" + name + "'");
}

ad::Node classification_loss(const ad::Node& logits, int y) {
    if (logits.value().shape() != Shape{2})
        raise(ErrorCode::Shape, "classification_loss: logits must be [2]");
    if (y != 0 && y != 1) raise(ErrorCode::Validation, "classification_loss: label must be 0 or 1");
    const std::size_t yi = static_cast<std::size_t>(y);
    return ad::softplus(ad::sub(ad::select(logits, 1 - yi), ad::select(logits, yi)));
}

namespace {

ad::Node class_output(const ad::Node& logits, int class_idx, SaliencyTarget target) {
    if (class_idx != 0 && class_idx != 1)
        raise(ErrorCode::Validation, "saliency: class index must be 0 or 1");
    if (target == SaliencyTarget::Logits)
        return ad::select(logits, static_cast<std::size_t>(class_idx));
    nn::ClassProbs p = nn::class_probabilities(logits);
    return class_idx == 1 ? p.p1 : p.p0;
}

ad::Node contrast_output(const ad::Node& logits, SaliencyTarget target) {
    if (target == SaliencyTarget::Logits)
        return ad::abs(ad::sub(ad::select(logits, 1), ad::select(logits, 0)));
    nn::ClassProbs p = nn::class_probabilities(logits);
    return ad::abs(ad::sub(p.p1, p.p0));
}

ad::Node saliency_of(const ad::Node& scalar, const ad::Node& x, bool create_graph) {
    const ad::Node wrt[] = {x};
    return ad::grad(scalar, wrt, create_graph)[0];
}

bool seg_is_empty(const Tensor& seg) {
    for (std::size_t i = 0; i < seg.numel(); ++i)
        if (seg.at(i) != 0.0) return false;
    return true;
}

} // namespace

ad::Node saliency_per_class(const nn::Model& m, const ad::Node& x, int class_idx,
                            SaliencyTarget target, bool create_graph) {
    if (!x.requires_grad())
        raise(ErrorCode::Contract, "saliency: x must be a leaf with requires_grad");
    return saliency_of(class_output(m.forward(x), class_idx, target), x, create_graph);
}

ad::Node contrast_saliency(const nn::Model& m, const ad::Node& x, SaliencyTarget target,
                           bool create_graph) {
    if (!x.requires_grad())
        raise(ErrorCode::Contract, "saliency: x must be a leaf with requires_grad");
    return saliency_of(contrast_output(m.forward(x), target), x, create_graph);
}

ad::Node masked_penalty(const ad::Node& s, const Tensor& seg, Norm norm) {
    const Shape& ss = s.value().shape();
    if (ss.rank() != 3) raise(ErrorCode::Shape, "masked_penalty: saliency must be [C,H,W]");
    if (seg.shape() != Shape{ss[1], ss[2]})
        raise(ErrorCode::Shape, "masked_penalty: segmentation " + seg.shape().str() +
                                    " does not match saliency " + ss.str());
    Tensor mask(ss, s.value().dtype());
    const std::size_t hw = seg.numel();
    for (std::size_t i = 0; i < hw; ++i) {
        const double v = seg.at(i);
        if (v != 0.0 && v != 1.0)
            raise(ErrorCode::Validation, "masked_penalty: segmentation must be binary");
        for (std::uint32_t c = 0; c < ss[0]; ++c) mask.set(static_cast<std::size_t>(c) * hw + i, 1.0 - v);
    }
    ad::Node masked = ad::mul(s, ad::constant(std::move(mask)));
    ad::Node ssq = ad::sum(ad::mul(masked, masked));
    return norm == Norm::L2 ? ad::sqrt_eps(ssq) : ssq;
}

LossTerms gradmask_loss(const nn::Model& m, const synth::Sample& sample, const PenaltyConfig& cfg) {
    cfg.validate();
    if (cfg.variant == Variant::None) {
        ad::Node x = ad::constant(sample.x);
        ad::Node lc = classification_loss(m.forward(x), sample.y);
        LossTerms t{lc, lc.value().scalar_value(), 0.0};
        return t;
    }

    ad::Node x = ad::lift(sample.x, true);
    ad::Node logits = m.forward(x);
    ad::Node lc = classification_loss(logits, sample.y);

    if (cfg.healthy == HealthyPolicy::Skip && seg_is_empty(sample.seg))
        return {lc, lc.value().scalar_value(), 0.0};

    ad::Node target_scalar = cfg.variant == Variant::PerClass
                                 ? class_output(logits, 1, cfg.target)
                                 : contrast_output(logits, cfg.target);
    ad::Node s = saliency_of(target_scalar, x, /*create_graph=*/true);
    ad::Node pen = masked_penalty(s, sample.seg, cfg.norm);
    ad::Node total = ad::add(lc, ad::scale(pen, cfg.lambda));
    return {total, lc.value().scalar_value(), pen.value().scalar_value()};
}

} // namespace gradmask::loss
