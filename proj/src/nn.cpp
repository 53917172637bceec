#include "adagat/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include "adagat/rng.hpp"

namespace adagat::nn {

using autodiff::shape_size;
using autodiff::shape_str;

namespace {

void fill_kaiming_uniform(std::vector<double>& w, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w) v = rng.uniform(-bound, bound);
}

Param make_weight(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
    Param p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value.resize(shape_size(p.shape));
    fill_kaiming_uniform(p.value, fan_in, rng);
    return p;
}

Param make_bias(std::string name, std::size_t n) {
    Param p;
    p.name = std::move(name);
    p.shape = {n};
    p.value.assign(n, 0.0);
    return p;
}

}  // namespace

ModelParams ModelParams::build(const ArchConfig& cfg, std::uint64_t seed) {
    if (cfg.num_classes < 2)
        throw ValueError("build_model: num_classes must be >= 2, got " +
                         std::to_string(cfg.num_classes));
    if (cfg.hidden < 1) throw ValueError("build_model: hidden must be >= 1");

    Rng rng(seed);
    ModelParams m;
    m.arch_ = cfg.arch;
    const std::size_t k = static_cast<std::size_t>(cfg.num_classes);
    const std::size_t h = static_cast<std::size_t>(cfg.hidden);

    if (cfg.arch == "mlp") {
        if (cfg.input_shape.size() != 1)
            throw ValueError("build_model: mlp expects a flat input shape, got " +
                             shape_str(cfg.input_shape));
        const std::size_t d = cfg.input_shape[0];
        m.entries_.push_back(make_weight("fc1.weight", {d, h}, d, rng));
        m.entries_.push_back(make_bias("fc1.bias", h));
        m.entries_.push_back(make_weight("fc2.weight", {h, h}, h, rng));
        m.entries_.push_back(make_bias("fc2.bias", h));
        m.entries_.push_back(make_weight("fc3.weight", {h, k}, h, rng));
        m.entries_.push_back(make_bias("fc3.bias", k));
    } else if (cfg.arch == "small_cnn") {
        if (cfg.input_shape.size() != 3)
            throw ValueError("build_model: small_cnn expects a CxHxW input shape, got " +
                             shape_str(cfg.input_shape));
        const std::size_t c = cfg.input_shape[0];
        const std::size_t ih = cfg.input_shape[1];
        const std::size_t iw = cfg.input_shape[2];
        if (ih % 4 != 0 || iw % 4 != 0)
            throw ValueError("build_model: small_cnn needs spatial dims divisible by 4, got " +
                             shape_str(cfg.input_shape));
        const std::size_t c2 = 2 * h;
        m.entries_.push_back(make_weight("conv1.weight", {h, c, 3, 3}, c * 9, rng));
        m.entries_.push_back(make_bias("conv1.bias", h));
        m.entries_.push_back(make_weight("conv2.weight", {c2, h, 3, 3}, h * 9, rng));
        m.entries_.push_back(make_bias("conv2.bias", c2));
        const std::size_t flat = c2 * (ih / 4) * (iw / 4);
        m.entries_.push_back(make_weight("fc.weight", {flat, k}, flat, rng));
        m.entries_.push_back(make_bias("fc.bias", k));
    } else {
        throw ValueError("build_model: unsupported architecture '" + cfg.arch + "'");
    }
    return m;
}

int ModelParams::num_classes() const {
    if (entries_.empty()) throw ValueError("num_classes: empty model");
    return static_cast<int>(entries_.back().shape.back());
}

BoundModel ModelParams::bind(Graph& g, bool trainable) const {
    BoundModel b;
    b.model = this;
    b.graph = &g;
    b.params.reserve(entries_.size());
    for (const auto& p : entries_) b.params.push_back(g.leaf(p.shape, p.value, trainable));
    return b;
}

Tensor BoundModel::forward(const Tensor& x) const {
    using namespace autodiff;
    if (model == nullptr || graph == nullptr)
        throw ValueError("forward: unbound model");
    const std::string& arch = model->arch();

    if (arch == "mlp") {
        // copy: shape references into the tape go stale once ops are pushed
        const Shape sx = x.shape();
        const std::size_t d = params[0].shape()[0];
        if (sx.size() != 2 || sx[1] != d)
            throw ShapeError("forward: input " + shape_str(sx) +
                             " does not match mlp input dim " + std::to_string(d));
        Tensor h1 = relu(matmul(x, params[0]) + params[1]);
        Tensor h2 = relu(matmul(h1, params[2]) + params[3]);
        return matmul(h2, params[4]) + params[5];
    }

    if (arch == "small_cnn") {
        const Shape sx = x.shape();
        const std::size_t c1 = params[0].shape()[0];
        const std::size_t c2 = params[2].shape()[0];
        if (sx.size() != 4 || sx[1] != params[0].shape()[1])
            throw ShapeError("forward: input " + shape_str(sx) +
                             " does not match small_cnn channels");
        if (sx[2] % 4 != 0 || sx[3] % 4 != 0)
            throw ShapeError("forward: small_cnn needs spatial dims divisible by 4, got " +
                             shape_str(sx));
        Tensor h = relu(conv2d(x, params[0], 1) + reshape(params[1], {c1, 1, 1}));
        h = avg_pool2x2(h);
        h = relu(conv2d(h, params[2], 1) + reshape(params[3], {c2, 1, 1}));
        h = avg_pool2x2(h);
        const std::size_t flat = c2 * (sx[2] / 4) * (sx[3] / 4);
        if (flat != params[4].shape()[0])
            throw ShapeError("forward: flattened features " + std::to_string(flat) +
                             " do not match fc input " + std::to_string(params[4].shape()[0]));
        h = reshape(h, {sx[0], flat});
        return matmul(h, params[4]) + params[5];
    }

    throw ValueError("forward: unsupported architecture '" + arch + "'");
}

void ModelParams::accumulate_grads(const BoundModel& bound) {
    if (bound.model != this)
        throw ValueError("accumulate_grads: bound model belongs to a different ModelParams");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const Tensor& t = bound.params[i];
        if (!t.requires_grad())
            throw ValueError("accumulate_grads: model was bound as constants");
        auto& sink = entries_[i].grad;
        if (sink.empty()) sink.assign(entries_[i].value.size(), 0.0);
        const auto& src = t.grad();
        for (std::size_t j = 0; j < src.size(); ++j) sink[j] += src[j];
    }
}

void ModelParams::clear_grads() {
    for (auto& p : entries_) p.grad.clear();
}

std::vector<double> ModelParams::forward_values(const Shape& batch_shape,
                                                const std::vector<double>& x) const {
    Graph g;
    const BoundModel b = bind(g, false);
    return b.forward(g.constant(batch_shape, x)).values();
}

void sgd_step(ModelParams& model, OptimizerState& state) {
    auto& entries = model.entries();
    if (state.buffers.empty()) state.buffers.resize(entries.size());
    if (state.buffers.size() != entries.size())
        throw ValueError("sgd_step: optimizer state does not match model");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Param& p = entries[i];
        if (p.grad.empty())
            throw ValueError("sgd_step: missing gradient for parameter '" + p.name + "'");
        auto& buf = state.buffers[i];
        if (buf.empty()) buf.assign(p.value.size(), 0.0);
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            buf[j] = state.momentum * buf[j] + p.grad[j] + state.weight_decay * p.value[j];
            p.value[j] -= state.lr * buf[j];
        }
        p.grad.clear();
    }
}

// --- checkpoint format -------------------------------------------------
// little-endian: magic "ADAGATCK", u32 version, length-prefixed arch tag,
// u32 entry count; per entry: length-prefixed name, u32 rank, u64 dims,
// raw f64 data.

namespace {

constexpr char kMagic[8] = {'A', 'D', 'A', 'G', 'A', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

void put_str(std::string& buf, const std::string& s) {
    put_u32(buf, static_cast<std::uint32_t>(s.size()));
    buf.append(s);
}

struct Reader {
    const std::string& buf;
    std::size_t at = 0;
    const std::filesystem::path& path;

    void need(std::size_t n) const {
        if (at + n > buf.size()) throw IoError("truncated checkpoint: " + path.string());
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
        at += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
        at += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = buf.substr(at, n);
        at += n;
        return s;
    }
};

}  // namespace

void ModelParams::save(const std::filesystem::path& path) const {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put_u32(buf, kVersion);
    put_str(buf, arch_);
    put_u32(buf, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& p : entries_) {
        put_str(buf, p.name);
        put_u32(buf, static_cast<std::uint32_t>(p.shape.size()));
        for (std::size_t d : p.shape) put_u64(buf, d);
        for (double v : p.value) put_f64(buf, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

ModelParams ModelParams::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading checkpoint: " + path.string());

    Reader r{buf, 0, path};
    r.need(sizeof(kMagic));
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a checkpoint file (bad magic): " + path.string());
    r.at = sizeof(kMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " +
                      path.string());

    ModelParams m;
    m.arch_ = r.str();
    const std::uint32_t count = r.u32();
    m.entries_.resize(count);
    for (auto& p : m.entries_) {
        p.name = r.str();
        const std::uint32_t rank = r.u32();
        p.shape.resize(rank);
        for (auto& d : p.shape) d = r.u64();
        p.value.resize(shape_size(p.shape));
        for (auto& v : p.value) v = r.f64();
    }
    if (r.at != buf.size())
        throw IoError("trailing bytes in checkpoint: " + path.string());
    return m;
}

}  // namespace adagat::nn
