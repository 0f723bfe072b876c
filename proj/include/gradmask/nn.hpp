#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gradmask/autodiff.hpp"
#include "gradmask/tensor.hpp"

namespace gradmask::nn {

enum class Activation { Relu, Softplus };

// Small two-output CNN classifier. Conv blocks are 3x3 stride-1 pad-1
// followed by 2x2/2 max pooling; the head always emits 2 logits
// (index 0 = healthy, index 1 = non-healthy).
struct ModelConfig {
    std::uint32_t in_c = 1;
    std::uint32_t in_h = 32;
    std::uint32_t in_w = 32;
    std::vector<std::uint32_t> conv_filters = {8, 16};
    std::uint32_t dense_width = 32;
    Activation act = Activation::Relu;
    Dtype dtype = Dtype::F32;

    void validate() const;
    std::size_t param_count() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

class Model {
public:
    static Model init(const ModelConfig& cfg, std::uint64_t seed);

    // x: [C,H,W] node matching the config. Returns the 2 logits.
    ad::Node forward(const ad::Node& x) const;

    const ModelConfig& config() const noexcept { return cfg_; }
    std::span<const ad::Node> params() const noexcept { return params_; }
    std::span<ad::Node> params() noexcept { return params_; }
    std::size_t param_count() const;

    // Checkpoint file: one JSON config line, then each parameter tensor as
    // GMT1, in parameter order (conv w/b per block, dense w/b, head w/b).
    void save(const std::filesystem::path& path) const;
    static Model load(const std::filesystem::path& path);

private:
    Model(ModelConfig cfg, std::vector<ad::Node> params)
        : cfg_(std::move(cfg)), params_(std::move(params)) {}

    ModelConfig cfg_;
    std::vector<ad::Node> params_;
};

// Two-class softmax as differentiable nodes: p1 = sigmoid(z1 - z0) and
// p0 = 1 - p1, so p0 + p1 == 1 holds bit-exactly.
struct ClassProbs {
    ad::Node p0;
    ad::Node p1;
};
ClassProbs class_probabilities(const ad::Node& logits);

} // namespace gradmask::nn
