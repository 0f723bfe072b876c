#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gradmask/tensor.hpp"

namespace gradmask::synth {

// One labeled image. y = 1 iff the segmentation has at least one lesion
// pixel; healthy samples carry an all-zero mask.
struct Sample {
    Tensor x;   // [1,H,W], values in [0,1]
    int y = 0;  // 0 healthy, 1 non-healthy
    Tensor seg; // [H,W], {0,1}

    void validate() const;
};

// Lesion-vs-background images with a planted shortcut: a bright corner patch
// whose presence tracks the label with probability rho. rho differs between
// train/valid and test, so a model that leans on the patch overfits.
struct SynthConfig {
    std::uint32_t h = 32;
    std::uint32_t w = 32;
    std::uint32_t n_train = 128;
    std::uint32_t n_valid = 128;
    std::uint32_t n_test = 512;
    double lesion_axis_min = 3.0; // full ellipse axis lengths, pixels
    double lesion_axis_max = 6.0;
    double lesion_offset = 0.35;
    double background_level = 0.25;
    double noise_sigma = 0.15;
    std::uint32_t patch_size = 3;
    double patch_offset = 0.5;
    double rho_train = 0.95; // P(patch presence == label) on train and valid
    double rho_test = 0.5;
    std::uint64_t seed = 0;
    Dtype dtype = Dtype::F32;

    void validate() const;
    std::string to_json() const;
    static SynthConfig from_json(const std::string& text);
};

struct Dataset {
    SynthConfig cfg;
    int patch_corner = 0; // 0 TL, 1 TR, 2 BL, 3 BR; fixed per dataset
    std::vector<Sample> train;
    std::vector<Sample> valid;
    std::vector<Sample> test;

    const std::vector<Sample>& split(const std::string& name) const;
};

// Deterministic given cfg.seed. Valid is drawn with rho_train (model
// selection sees the same bias the model sees); test with rho_test.
Dataset generate(const SynthConfig& cfg);

// Rectangle [r0,r1) x [c0,c1) of the confounder patch.
struct PatchRegion {
    std::uint32_t r0, r1, c0, c1;
};
PatchRegion patch_region(const SynthConfig& cfg, int corner);

// Directory layout: manifest.json plus x_<i>.gmt / seg_<i>.gmt per sample,
// with a global running index across splits. Round trips are lossless.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

} // namespace gradmask::synth
