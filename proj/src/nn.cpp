#include "gradmask/nn.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gradmask/io.hpp"
#include "gradmask/rng.hpp"

namespace gradmask::nn {

using nlohmann::json;

void ModelConfig::validate() const {
    if (in_c == 0 || in_h == 0 || in_w == 0) raise(ErrorCode::Validation, "model: empty input shape");
    if (conv_filters.empty()) raise(ErrorCode::Validation, "model: at least one conv block required");
    if (dense_width == 0) raise(ErrorCode::Validation, "model: dense width must be positive");
    std::uint32_t h = in_h, w = in_w;
    for (std::size_t i = 0; i < conv_filters.size(); ++i) {
        if (conv_filters[i] == 0) raise(ErrorCode::Validation, "model: conv block with zero filters");
        if (h < 2 || w < 2)
            raise(ErrorCode::Validation, "model: input too small for pooling at block " +
                                             std::to_string(i));
        h /= 2;
        w /= 2;
    }
    if (h == 0 || w == 0) raise(ErrorCode::Validation, "model: spatial extent collapsed to zero");
}

std::size_t ModelConfig::param_count() const {
    std::size_t total = 0;
    std::uint32_t c = in_c, h = in_h, w = in_w;
    for (std::uint32_t f : conv_filters) {
        total += static_cast<std::size_t>(f) * c * 9 + f;
        c = f;
        h /= 2;
        w /= 2;
    }
    const std::size_t flat = static_cast<std::size_t>(c) * h * w;
    total += static_cast<std::size_t>(dense_width) * flat + dense_width;
    total += 2 * static_cast<std::size_t>(dense_width) + 2;
    return total;
}

std::string ModelConfig::to_json() const {
    json j;
    j["in"] = {in_c, in_h, in_w};
    j["conv_filters"] = conv_filters;
    j["dense_width"] = dense_width;
    j["act"] = act == Activation::Relu ? "relu" : "softplus";
    j["dtype"] = dtype_name(dtype);
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        raise(ErrorCode::Validation, std::string("model config: ") + e.what());
    }
    ModelConfig cfg;
    try {
        if (j.contains("in")) {
            cfg.in_c = j["in"].at(0).get<std::uint32_t>();
            cfg.in_h = j["in"].at(1).get<std::uint32_t>();
            cfg.in_w = j["in"].at(2).get<std::uint32_t>();
        }
        if (j.contains("conv_filters")) cfg.conv_filters = j["conv_filters"].get<std::vector<std::uint32_t>>();
        if (j.contains("dense_width")) cfg.dense_width = j["dense_width"].get<std::uint32_t>();
        if (j.contains("act")) {
            const std::string a = j["act"].get<std::string>();
            if (a == "relu")
                cfg.act = Activation::Relu;
            else if (a == "softplus")
                cfg.act = Activation::Softplus;
            else
                raise(ErrorCode::Validation, "model config: unknown activation '" + a + "'");
        }
        if (j.contains("dtype")) {
            const std::string d = j["dtype"].get<std::string>();
            if (d == "f32")
                cfg.dtype = Dtype::F32;
            else if (d == "f64")
                cfg.dtype = Dtype::F64;
            else
                raise(ErrorCode::Validation, "model config: unknown dtype '" + d + "'");
        }
    } catch (const json::exception& e) {
        raise(ErrorCode::Validation, std::string("model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

namespace {

Tensor he_normal(Rng& rng, const Shape& shape, std::size_t fan_in, Dtype dtype) {
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor t(shape, dtype);
    for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(0.0, sd));
    return t;
}

ad::Node activation(const ad::Node& x, Activation act) {
    return act == Activation::Relu ? ad::relu(x) : ad::softplus(x);
}

} // namespace

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng = substream(seed, "init");
    std::vector<ad::Node> params;
    std::uint32_t c = cfg.in_c, h = cfg.in_h, w = cfg.in_w;
    for (std::uint32_t f : cfg.conv_filters) {
        params.push_back(ad::lift(he_normal(rng, Shape{f, c, 3, 3}, static_cast<std::size_t>(c) * 9,
                                            cfg.dtype),
                                  true));
        params.push_back(ad::lift(Tensor::zeros(Shape{f}, cfg.dtype), true));
        c = f;
        h /= 2;
        w /= 2;
    }
    const std::uint32_t flat = c * h * w;
    params.push_back(
        ad::lift(he_normal(rng, Shape{cfg.dense_width, flat}, flat, cfg.dtype), true));
    params.push_back(ad::lift(Tensor::zeros(Shape{cfg.dense_width}, cfg.dtype), true));
    params.push_back(
        ad::lift(he_normal(rng, Shape{2, cfg.dense_width}, cfg.dense_width, cfg.dtype), true));
    params.push_back(ad::lift(Tensor::zeros(Shape{2}, cfg.dtype), true));
    return Model(cfg, std::move(params));
}

ad::Node Model::forward(const ad::Node& x) const {
    if (x.value().shape() != Shape{cfg_.in_c, cfg_.in_h, cfg_.in_w})
        raise(ErrorCode::Shape, "forward: input shape " + x.value().shape().str() +
                                    " does not match model input " +
                                    Shape{cfg_.in_c, cfg_.in_h, cfg_.in_w}.str());
    std::size_t p = 0;
    ad::Node cur = x;
    std::uint32_t h = cfg_.in_h, w = cfg_.in_w;
    for (std::size_t b = 0; b < cfg_.conv_filters.size(); ++b) {
        const ad::Node& wgt = params_[p++];
        const ad::Node& bias = params_[p++];
        cur = ad::add(ad::conv2d(cur, wgt, 1, 1), ad::broadcast_channels(bias, h, w));
        cur = activation(cur, cfg_.act);
        cur = ad::maxpool2d(cur, 2, 2).values;
        h /= 2;
        w /= 2;
    }
    const std::uint32_t flat = cfg_.conv_filters.back() * h * w;
    cur = ad::reshape(cur, Shape{flat, 1});
    const ad::Node& dw = params_[p++];
    const ad::Node& db = params_[p++];
    cur = ad::add(ad::reshape(ad::matmul(dw, cur), Shape{cfg_.dense_width}), db);
    cur = activation(cur, cfg_.act);
    const ad::Node& hw = params_[p++];
    const ad::Node& hb = params_[p++];
    cur = ad::reshape(cur, Shape{cfg_.dense_width, 1});
    return ad::add(ad::reshape(ad::matmul(hw, cur), Shape{2}), hb);
}

std::size_t Model::param_count() const {
    std::size_t total = 0;
    for (const ad::Node& p : params_) total += p.value().numel();
    return total;
}

void Model::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) raise(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    os << cfg_.to_json() << '\n';
    for (const ad::Node& p : params_) write_gmt(os, p.value());
    if (!os) raise(ErrorCode::Io, "checkpoint write failed: " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) raise(ErrorCode::Io, "cannot open " + path.string());
    std::string header;
    if (!std::getline(is, header)) raise(ErrorCode::Format, "checkpoint missing config header");
    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_json(header);
    } catch (const Error& e) {
        raise(ErrorCode::Format, std::string("checkpoint header: ") + e.what());
    }
    Model m = init(cfg, 0);
    for (ad::Node& p : m.params_) {
        Tensor t = read_gmt(is);
        if (t.shape() != p.value().shape() || t.dtype() != p.value().dtype())
            raise(ErrorCode::Format, "checkpoint tensor does not match config: expected " +
                                         p.value().shape().str() + ", got " + t.shape().str());
        p.set_value(std::move(t));
    }
    return m;
}

ClassProbs class_probabilities(const ad::Node& logits) {
    if (logits.value().shape() != Shape{2})
        raise(ErrorCode::Shape, "class_probabilities: logits must be [2]");
    ad::Node margin = ad::sub(ad::select(logits, 1), ad::select(logits, 0));
    ad::Node p1 = ad::sigmoid(margin);
    ad::Node one = ad::constant(Tensor::scalar(1.0, logits.value().dtype()));
    ad::Node p0 = ad::sub(one, p1);
    return {std::move(p0), std::move(p1)};
}

} // namespace gradmask::nn
