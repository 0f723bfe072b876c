#include "gradmask/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gradmask/io.hpp"
#include "gradmask/rng.hpp"

namespace gradmask::synth {

using nlohmann::json;

void Sample::validate() const {
    if (x.shape().rank() != 3 || x.shape()[0] != 1)
        raise(ErrorCode::Validation, "sample: image must be [1,H,W], got " + x.shape().str());
    if (seg.shape() != Shape{x.shape()[1], x.shape()[2]})
        raise(ErrorCode::Validation, "sample: segmentation shape " + seg.shape().str() +
                                         " does not match image " + x.shape().str());
    if (y != 0 && y != 1) raise(ErrorCode::Validation, "sample: label must be 0 or 1");
    bool any = false;
    for (std::size_t i = 0; i < seg.numel(); ++i) {
        const double v = seg.at(i);
        if (v != 0.0 && v != 1.0)
            raise(ErrorCode::Validation, "sample: segmentation must be binary");
        any = any || v == 1.0;
    }
    if ((y == 1) != any)
        raise(ErrorCode::Validation, "sample: label does not match segmentation emptiness");
}

void SynthConfig::validate() const {
    if (h < 8 || w < 8) raise(ErrorCode::Validation, "synth: image must be at least 8x8");
    if (n_train == 0 || n_valid == 0 || n_test == 0)
        raise(ErrorCode::Validation, "synth: split counts must be positive");
    if (n_train % 2 || n_valid % 2 || n_test % 2)
        raise(ErrorCode::Validation, "synth: split counts must be even for exact class balance");
    if (lesion_axis_min < 1.0 || lesion_axis_max < lesion_axis_min)
        raise(ErrorCode::Validation, "synth: invalid lesion axis range");
    if (rho_train < 0.0 || rho_train > 1.0 || rho_test < 0.0 || rho_test > 1.0)
        raise(ErrorCode::Validation, "synth: rho must lie in [0,1]");
    if (noise_sigma < 0.0) raise(ErrorCode::Validation, "synth: negative noise sigma");
    if (patch_size == 0 || patch_size >= h / 2 || patch_size >= w / 2)
        raise(ErrorCode::Validation, "synth: patch size out of range");
    // Lesion centers come from the central 50% box; the maximal semi-axis must
    // keep every lesion pixel clear of the corner patch.
    const double semi = lesion_axis_max / 2.0;
    if (static_cast<double>(h) / 4.0 - semi <= static_cast<double>(patch_size) ||
        static_cast<double>(w) / 4.0 - semi <= static_cast<double>(patch_size))
        raise(ErrorCode::Validation,
              "synth: lesion region would not be disjoint from the confounder patch");
}

std::string SynthConfig::to_json() const {
    json j;
    j["h"] = h;
    j["w"] = w;
    j["n_train"] = n_train;
    j["n_valid"] = n_valid;
    j["n_test"] = n_test;
    j["lesion_axis_min"] = lesion_axis_min;
    j["lesion_axis_max"] = lesion_axis_max;
    j["lesion_offset"] = lesion_offset;
    j["background_level"] = background_level;
    j["noise_sigma"] = noise_sigma;
    j["patch_size"] = patch_size;
    j["patch_offset"] = patch_offset;
    j["rho_train"] = rho_train;
    j["rho_test"] = rho_test;
    j["seed"] = seed;
    j["dtype"] = dtype_name(dtype);
    return j.dump();
}

SynthConfig SynthConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        raise(ErrorCode::Validation, std::string("synth config: ") + e.what());
    }
    SynthConfig cfg;
    try {
        if (j.contains("h")) cfg.h = j["h"].get<std::uint32_t>();
        if (j.contains("w")) cfg.w = j["w"].get<std::uint32_t>();
        if (j.contains("n_train")) cfg.n_train = j["n_train"].get<std::uint32_t>();
        if (j.contains("n_valid")) cfg.n_valid = j["n_valid"].get<std::uint32_t>();
        if (j.contains("n_test")) cfg.n_test = j["n_test"].get<std::uint32_t>();
        if (j.contains("lesion_axis_min")) cfg.lesion_axis_min = j["lesion_axis_min"].get<double>();
        if (j.contains("lesion_axis_max")) cfg.lesion_axis_max = j["lesion_axis_max"].get<double>();
        if (j.contains("lesion_offset")) cfg.lesion_offset = j["lesion_offset"].get<double>();
        if (j.contains("background_level")) cfg.background_level = j["background_level"].get<double>();
        if (j.contains("noise_sigma")) cfg.noise_sigma = j["noise_sigma"].get<double>();
        if (j.contains("patch_size")) cfg.patch_size = j["patch_size"].get<std::uint32_t>();
        if (j.contains("patch_offset")) cfg.patch_offset = j["patch_offset"].get<double>();
        if (j.contains("rho_train")) cfg.rho_train = j["rho_train"].get<double>();
        if (j.contains("rho_test")) cfg.rho_test = j["rho_test"].get<double>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("dtype")) {
            const std::string d = j["dtype"].get<std::string>();
            if (d == "f32")
                cfg.dtype = Dtype::F32;
            else if (d == "f64")
                cfg.dtype = Dtype::F64;
            else
                raise(ErrorCode::Validation, "synth config: unknown dtype '" + d + "'");
        }
    } catch (const json::exception& e) {
        raise(ErrorCode::Validation, std::string("synth config: ") + e.what());
    }
    return cfg;
}

const std::vector<Sample>& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    raise(ErrorCode::Validation, "unknown split '" + name + "'");
}

PatchRegion patch_region(const SynthConfig& cfg, int corner) {
    const std::uint32_t s = cfg.patch_size;
    PatchRegion r{};
    r.r0 = (corner == 0 || corner == 1) ? 0 : cfg.h - s;
    r.c0 = (corner == 0 || corner == 2) ? 0 : cfg.w - s;
    r.r1 = r.r0 + s;
    r.c1 = r.c0 + s;
    return r;
}

namespace {

Sample make_sample(const SynthConfig& cfg, int label, double rho, int corner, Rng& rng) {
    const std::uint32_t h = cfg.h, w = cfg.w;
    std::vector<double> img(static_cast<std::size_t>(h) * w);
    for (double& v : img) v = rng.normal(cfg.background_level, cfg.noise_sigma);

    Tensor seg = Tensor::zeros(Shape{h, w}, cfg.dtype);
    if (label == 1) {
        // Axis-aligned ellipse centered in the middle 50% of the image.
        const double cy = rng.uniform(h / 4.0, 3.0 * h / 4.0);
        const double cx = rng.uniform(w / 4.0, 3.0 * w / 4.0);
        const double sa = rng.uniform(cfg.lesion_axis_min, cfg.lesion_axis_max) / 2.0;
        const double sb = rng.uniform(cfg.lesion_axis_min, cfg.lesion_axis_max) / 2.0;
        for (std::uint32_t r = 0; r < h; ++r) {
            for (std::uint32_t c = 0; c < w; ++c) {
                const double dy = (static_cast<double>(r) - cy) / sb;
                const double dx = (static_cast<double>(c) - cx) / sa;
                if (dy * dy + dx * dx <= 1.0) {
                    img[static_cast<std::size_t>(r) * w + c] += cfg.lesion_offset;
                    seg.set(static_cast<std::size_t>(r) * w + c, 1.0);
                }
            }
        }
    }

    const bool present = rng.bernoulli(rho) ? (label == 1) : (label == 0);
    if (present) {
        const PatchRegion pr = patch_region(cfg, corner);
        for (std::uint32_t r = pr.r0; r < pr.r1; ++r)
            for (std::uint32_t c = pr.c0; c < pr.c1; ++c)
                img[static_cast<std::size_t>(r) * w + c] += cfg.patch_offset;
    }

    for (double& v : img) v = std::clamp(v, 0.0, 1.0);
    Sample s;
    s.x = Tensor::from(img, Shape{1, h, w}, cfg.dtype);
    s.y = label;
    s.seg = std::move(seg);
    return s;
}

std::vector<Sample> make_split(const SynthConfig& cfg, std::uint32_t count, double rho, int corner,
                               Rng& rng) {
    // Exactly balanced labels in shuffled order.
    std::vector<int> labels(count);
    for (std::uint32_t i = 0; i < count; ++i) labels[i] = i < count / 2 ? 1 : 0;
    rng.shuffle(labels);
    std::vector<Sample> out;
    out.reserve(count);
    for (int y : labels) out.push_back(make_sample(cfg, y, rho, corner, rng));
    return out;
}

} // namespace

Dataset generate(const SynthConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.cfg = cfg;
    ds.patch_corner = static_cast<int>(substream(cfg.seed, "corner").below(4));
    Rng tr = substream(cfg.seed, "train");
    Rng va = substream(cfg.seed, "valid");
    Rng te = substream(cfg.seed, "test");
    ds.train = make_split(cfg, cfg.n_train, cfg.rho_train, ds.patch_corner, tr);
    ds.valid = make_split(cfg, cfg.n_valid, cfg.rho_train, ds.patch_corner, va);
    ds.test = make_split(cfg, cfg.n_test, cfg.rho_test, ds.patch_corner, te);
    return ds;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) raise(ErrorCode::Io, "cannot create directory " + dir.string());

    json manifest;
    manifest["format"] = "gmds1";
    manifest["synth"] = json::parse(ds.cfg.to_json());
    manifest["patch_corner"] = ds.patch_corner;

    std::size_t index = 0;
    auto dump_split = [&](const char* name, const std::vector<Sample>& samples) {
        json entries = json::array();
        for (const Sample& s : samples) {
            write_gmt_file(dir / ("x_" + std::to_string(index) + ".gmt"), s.x);
            write_gmt_file(dir / ("seg_" + std::to_string(index) + ".gmt"), s.seg);
            entries.push_back({{"i", index}, {"y", s.y}});
            ++index;
        }
        manifest["splits"][name] = std::move(entries);
    };
    dump_split("train", ds.train);
    dump_split("valid", ds.valid);
    dump_split("test", ds.test);

    std::ofstream os(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!os) raise(ErrorCode::Io, "cannot write manifest in " + dir.string());
    os << manifest.dump(2) << '\n';
    if (!os) raise(ErrorCode::Io, "manifest write failed in " + dir.string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json", std::ios::binary);
    if (!is) raise(ErrorCode::Io, "cannot open manifest in " + dir.string());
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        raise(ErrorCode::Format, std::string("manifest: ") + e.what());
    }
    Dataset ds;
    try {
        if (manifest.at("format").get<std::string>() != "gmds1")
            raise(ErrorCode::Format, "manifest: unknown dataset format");
        try {
            ds.cfg = SynthConfig::from_json(manifest.at("synth").dump());
        } catch (const Error& e) {
            raise(ErrorCode::Format, std::string("manifest: ") + e.what());
        }
        ds.patch_corner = manifest.at("patch_corner").get<int>();

        auto load_split = [&](const char* name, std::vector<Sample>& out) {
            for (const json& e : manifest.at("splits").at(name)) {
                const std::size_t i = e.at("i").get<std::size_t>();
                Sample s;
                s.x = read_gmt_file(dir / ("x_" + std::to_string(i) + ".gmt"));
                s.seg = read_gmt_file(dir / ("seg_" + std::to_string(i) + ".gmt"));
                s.y = e.at("y").get<int>();
                if (s.x.shape() != Shape{1, ds.cfg.h, ds.cfg.w})
                    raise(ErrorCode::Format, "dataset: tensor " + std::to_string(i) +
                                                 " disagrees with manifest image size");
                s.validate();
                out.push_back(std::move(s));
            }
        };
        load_split("train", ds.train);
        load_split("valid", ds.valid);
        load_split("test", ds.test);
    } catch (const json::exception& e) {
        raise(ErrorCode::Format, std::string("manifest: ") + e.what());
    }
    return ds;
}

} // namespace gradmask::synth
