#include "adagat/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace adagat::autodiff {

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i > 0) out += ",";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

const Shape& Tensor::shape() const { return graph_->node(id_).shape; }
std::size_t Tensor::size() const { return graph_->node(id_).value.size(); }
const std::vector<double>& Tensor::values() const { return graph_->node(id_).value; }
bool Tensor::requires_grad() const { return graph_->node(id_).requires_grad; }

double Tensor::scalar() const {
    const auto& v = values();
    if (v.size() != 1)
        throw ValueError("scalar: tensor has shape " + shape_str(shape()));
    return v[0];
}

const std::vector<double>& Tensor::grad() const {
    const auto& n = graph_->node(id_);
    if (!n.requires_grad)
        throw ValueError("grad: tensor does not require gradients");
    return n.grad;
}

namespace {

// Broadcast plan for one binary op: result shape plus per-dimension strides
// into each operand (stride 0 on broadcast dimensions).
struct Bcast {
    Shape out;
    std::vector<std::size_t> sa;
    std::vector<std::size_t> sb;
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
    std::vector<std::size_t> str(s.size());
    std::size_t acc = 1;
    for (std::size_t i = s.size(); i-- > 0;) {
        str[i] = acc;
        acc *= s[i];
    }
    return str;
}

Bcast make_bcast(const char* op, const Shape& a, const Shape& b) {
    const int ra = static_cast<int>(a.size());
    const int rb = static_cast<int>(b.size());
    const int rank = std::max(ra, rb);
    Bcast bc;
    bc.out.assign(rank, 1);
    bc.sa.assign(rank, 0);
    bc.sb.assign(rank, 0);
    const auto na = contiguous_strides(a);
    const auto nb = contiguous_strides(b);
    for (int d = 0; d < rank; ++d) {
        const int ia = d - (rank - ra);
        const int ib = d - (rank - rb);
        const std::size_t da = ia >= 0 ? a[ia] : 1;
        const std::size_t db = ib >= 0 ? b[ib] : 1;
        if (da != db && da != 1 && db != 1)
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                             shape_str(b) + " are not broadcast-compatible");
        bc.out[d] = std::max(da, db);
        bc.sa[d] = (ia >= 0 && da != 1) ? na[ia] : 0;
        bc.sb[d] = (ib >= 0 && db != 1) ? nb[ib] : 0;
    }
    return bc;
}

// Calls f(out_index, a_index, b_index) for every result element, odometer
// style so there is no div/mod in the hot loop.
template <class F>
void bcast_for_each(const Bcast& bc, F&& f) {
    const int rank = static_cast<int>(bc.out.size());
    const std::size_t n = shape_size(bc.out);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t o = 0; o < n; ++o) {
        f(o, ia, ib);
        for (int d = rank - 1; d >= 0; --d) {
            ++idx[d];
            ia += bc.sa[d];
            ib += bc.sb[d];
            if (idx[d] < bc.out[d]) break;
            idx[d] = 0;
            ia -= bc.sa[d] * bc.out[d];
            ib -= bc.sb[d] * bc.out[d];
        }
    }
}

void check_operand(const char* op, const Tensor& t) {
    if (!t.valid()) throw ValueError(std::string(op) + ": invalid tensor operand");
}

void check_same_graph(const char* op, const Tensor& a, const Tensor& b) {
    check_operand(op, a);
    check_operand(op, b);
    if (a.graph() != b.graph())
        throw ValueError(std::string(op) + ": operands belong to different graphs");
}

template <class F>
Tensor ew_binary(const char* name, Graph::Op op, const Tensor& a, const Tensor& b, F&& f) {
    check_same_graph(name, a, b);
    const Bcast bc = make_bcast(name, a.shape(), b.shape());
    std::vector<double> out(shape_size(bc.out));
    const auto& av = a.values();
    const auto& bv = b.values();
    bcast_for_each(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        out[o] = f(av[ia], bv[ib]);
    });
    Graph::Node n;
    n.op = op;
    n.shape = bc.out;
    n.value = std::move(out);
    n.a = a.id();
    n.b = b.id();
    return a.graph()->push(std::move(n));
}

template <class F>
Tensor ew_unary(const char* name, Graph::Op op, const Tensor& t, F&& f) {
    check_operand(name, t);
    const auto& tv = t.values();
    std::vector<double> out(tv.size());
    for (std::size_t i = 0; i < tv.size(); ++i) out[i] = f(tv[i]);
    Graph::Node n;
    n.op = op;
    n.shape = t.shape();
    n.value = std::move(out);
    n.a = t.id();
    return t.graph()->push(std::move(n));
}

// Views a tensor as (outer, axis_dim, inner) around one reduction axis.
struct AxisView {
    std::size_t outer = 1;
    std::size_t dim = 1;
    std::size_t inner = 1;
};

AxisView make_axis_view(const char* op, const Shape& s, std::size_t axis) {
    if (axis >= s.size())
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(s));
    AxisView v;
    v.dim = s[axis];
    for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
    return v;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out.push_back(s[i]);
    if (out.empty()) out.push_back(1);
    return out;
}

}  // namespace

Tensor Graph::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape.empty()) throw ValueError("leaf: shape must have rank >= 1");
    for (std::size_t d : shape)
        if (d == 0) throw ValueError("leaf: zero-sized dimension in shape " + shape_str(shape));
    if (shape_size(shape) != values.size())
        throw ShapeError("leaf: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    Node n;
    n.op = Op::kLeaf;
    n.shape = std::move(shape);
    n.value = std::move(values);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Tensor Graph::constant(Shape shape, std::vector<double> values) {
    return leaf(std::move(shape), std::move(values), false);
}

Tensor Graph::scalar_constant(double v) { return leaf({1}, {v}, false); }

const Graph::Node& Graph::node(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw ValueError("node: invalid id " + std::to_string(id));
    return nodes_[id];
}

Tensor Graph::push(Node node) {
    if (node.op != Op::kLeaf) {
        // sign is non-differentiable with derivative defined as zero, so its
        // result never carries gradient regardless of its parent.
        bool rg = false;
        if (node.op != Op::kSign) {
            if (node.a >= 0) rg = rg || nodes_[node.a].requires_grad;
            if (node.b >= 0) rg = rg || nodes_[node.b].requires_grad;
        }
        node.requires_grad = rg;
    }
    if (node.requires_grad) node.grad.assign(node.value.size(), 0.0);
    nodes_.push_back(std::move(node));
    return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::clear_grads() {
    for (auto& n : nodes_)
        if (n.requires_grad) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Graph::backward(const Tensor& loss) {
    if (!loss.valid() || loss.graph() != this)
        throw ValueError("backward: loss tensor does not belong to this graph");
    const Node& ln = nodes_[loss.id()];
    if (ln.value.size() != 1)
        throw ValueError("backward: loss must be scalar, got shape " + shape_str(ln.shape));
    if (!ln.requires_grad) return;  // no gradient-bearing ancestors
    nodes_[loss.id()].grad[0] += 1.0;
    for (int i = loss.id(); i >= 0; --i)
        if (nodes_[i].requires_grad) backward_node(i);
}

void Graph::backward_node(int id) {
    Node& n = nodes_[id];
    const std::vector<double>& go = n.grad;
    const auto wants = [&](int p) { return p >= 0 && nodes_[p].requires_grad; };

    switch (n.op) {
        case Op::kLeaf:
            return;

        case Op::kAdd:
        case Op::kSub: {
            const double sgn_b = n.op == Op::kAdd ? 1.0 : -1.0;
            const Bcast bc = make_bcast("add", nodes_[n.a].shape, nodes_[n.b].shape);
            double* ga = wants(n.a) ? nodes_[n.a].grad.data() : nullptr;
            double* gb = wants(n.b) ? nodes_[n.b].grad.data() : nullptr;
            if (!ga && !gb) return;
            bcast_for_each(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                if (ga) ga[ia] += go[o];
                if (gb) gb[ib] += sgn_b * go[o];
            });
            return;
        }

        case Op::kMul: {
            const Bcast bc = make_bcast("mul", nodes_[n.a].shape, nodes_[n.b].shape);
            const double* av = nodes_[n.a].value.data();
            const double* bv = nodes_[n.b].value.data();
            double* ga = wants(n.a) ? nodes_[n.a].grad.data() : nullptr;
            double* gb = wants(n.b) ? nodes_[n.b].grad.data() : nullptr;
            if (!ga && !gb) return;
            bcast_for_each(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                if (ga) ga[ia] += go[o] * bv[ib];
                if (gb) gb[ib] += go[o] * av[ia];
            });
            return;
        }

        case Op::kScale: {
            if (!wants(n.a)) return;
            double* ga = nodes_[n.a].grad.data();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += n.c0 * go[i];
            return;
        }

        case Op::kMatmul: {
            const Node& A = nodes_[n.a];
            const Node& B = nodes_[n.b];
            const std::size_t m = A.shape[0];
            const std::size_t k = A.shape[1];
            const std::size_t p = B.shape[1];
            if (wants(n.a)) {
                double* ga = nodes_[n.a].grad.data();
                const double* bv = B.value.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < p; ++j)
                            acc += go[i * p + j] * bv[kk * p + j];
                        ga[i * k + kk] += acc;
                    }
            }
            if (wants(n.b)) {
                double* gb = nodes_[n.b].grad.data();
                const double* av = A.value.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double a = av[i * k + kk];
                        for (std::size_t j = 0; j < p; ++j)
                            gb[kk * p + j] += a * go[i * p + j];
                    }
            }
            return;
        }

        case Op::kConv2d: {
            const Node& X = nodes_[n.a];
            const Node& K = nodes_[n.b];
            const std::size_t pad = n.attr;
            const std::size_t N = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
            const std::size_t F = K.shape[0], R = K.shape[2], S = K.shape[3];
            const std::size_t OH = n.shape[2], OW = n.shape[3];
            double* gx = wants(n.a) ? nodes_[n.a].grad.data() : nullptr;
            double* gk = wants(n.b) ? nodes_[n.b].grad.data() : nullptr;
            if (!gx && !gk) return;
            const double* xv = X.value.data();
            const double* kv = K.value.data();
            for (std::size_t ni = 0; ni < N; ++ni)
                for (std::size_t f = 0; f < F; ++f)
                    for (std::size_t oh = 0; oh < OH; ++oh)
                        for (std::size_t ow = 0; ow < OW; ++ow) {
                            const double g = go[((ni * F + f) * OH + oh) * OW + ow];
                            if (g == 0.0) continue;
                            for (std::size_t c = 0; c < C; ++c)
                                for (std::size_t r = 0; r < R; ++r) {
                                    const std::ptrdiff_t h =
                                        static_cast<std::ptrdiff_t>(oh + r) -
                                        static_cast<std::ptrdiff_t>(pad);
                                    if (h < 0 || h >= static_cast<std::ptrdiff_t>(H)) continue;
                                    for (std::size_t s = 0; s < S; ++s) {
                                        const std::ptrdiff_t w =
                                            static_cast<std::ptrdiff_t>(ow + s) -
                                            static_cast<std::ptrdiff_t>(pad);
                                        if (w < 0 || w >= static_cast<std::ptrdiff_t>(W)) continue;
                                        const std::size_t xi =
                                            ((ni * C + c) * H + h) * W + w;
                                        const std::size_t ki =
                                            ((f * C + c) * R + r) * S + s;
                                        if (gx) gx[xi] += kv[ki] * g;
                                        if (gk) gk[ki] += xv[xi] * g;
                                    }
                                }
                        }
            return;
        }

        case Op::kAvgPool2x2: {
            if (!wants(n.a)) return;
            const Node& X = nodes_[n.a];
            double* gx = nodes_[n.a].grad.data();
            const std::size_t N = X.shape[0], C = X.shape[1], H = X.shape[2], W = X.shape[3];
            const std::size_t OH = H / 2, OW = W / 2;
            for (std::size_t ni = 0; ni < N; ++ni)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t oh = 0; oh < OH; ++oh)
                        for (std::size_t ow = 0; ow < OW; ++ow) {
                            const double g =
                                0.25 * go[((ni * C + c) * OH + oh) * OW + ow];
                            const std::size_t base = ((ni * C + c) * H + 2 * oh) * W + 2 * ow;
                            gx[base] += g;
                            gx[base + 1] += g;
                            gx[base + W] += g;
                            gx[base + W + 1] += g;
                        }
            return;
        }

        case Op::kRelu: {
            if (!wants(n.a)) return;
            const double* av = nodes_[n.a].value.data();
            double* ga = nodes_[n.a].grad.data();
            for (std::size_t i = 0; i < go.size(); ++i)
                if (av[i] > 0.0) ga[i] += go[i];
            return;
        }

        case Op::kSign:
            return;  // derivative defined as zero

        case Op::kClamp: {
            if (!wants(n.a)) return;
            const double* av = nodes_[n.a].value.data();
            double* ga = nodes_[n.a].grad.data();
            for (std::size_t i = 0; i < go.size(); ++i)
                if (av[i] >= n.c0 && av[i] <= n.c1) ga[i] += go[i];
            return;
        }

        case Op::kSquare: {
            if (!wants(n.a)) return;
            const double* av = nodes_[n.a].value.data();
            double* ga = nodes_[n.a].grad.data();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += 2.0 * av[i] * go[i];
            return;
        }

        case Op::kSqrt: {
            if (!wants(n.a)) return;
            double* ga = nodes_[n.a].grad.data();
            for (std::size_t i = 0; i < go.size(); ++i)
                if (n.value[i] != 0.0) ga[i] += 0.5 / n.value[i] * go[i];
            return;
        }

        case Op::kLog: {
            if (!wants(n.a)) return;
            const double* av = nodes_[n.a].value.data();
            double* ga = nodes_[n.a].grad.data();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / av[i];
            return;
        }

        case Op::kExp: {
            if (!wants(n.a)) return;
            double* ga = nodes_[n.a].grad.data();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += n.value[i] * go[i];
            return;
        }

        case Op::kSum: {
            if (!wants(n.a)) return;
            double* ga = nodes_[n.a].grad.data();
            const std::size_t na = nodes_[n.a].value.size();
            for (std::size_t i = 0; i < na; ++i) ga[i] += go[0];
            return;
        }

        case Op::kMean: {
            if (!wants(n.a)) return;
            double* ga = nodes_[n.a].grad.data();
            const std::size_t na = nodes_[n.a].value.size();
            const double g = go[0] / static_cast<double>(na);
            for (std::size_t i = 0; i < na; ++i) ga[i] += g;
            return;
        }

        case Op::kSumAxis:
        case Op::kMeanAxis: {
            if (!wants(n.a)) return;
            const AxisView v = make_axis_view("sum_axis", nodes_[n.a].shape, n.attr);
            const double inv =
                n.op == Op::kMeanAxis ? 1.0 / static_cast<double>(v.dim) : 1.0;
            double* ga = nodes_[n.a].grad.data();
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t k = 0; k < v.dim; ++k)
                    for (std::size_t i = 0; i < v.inner; ++i)
                        ga[(o * v.dim + k) * v.inner + i] += inv * go[o * v.inner + i];
            return;
        }

        case Op::kLogSumExpRows: {
            if (!wants(n.a)) return;
            const Node& X = nodes_[n.a];
            const std::size_t k = X.shape.back();
            const std::size_t rows = X.value.size() / k;
            const double* xv = X.value.data();
            double* ga = nodes_[n.a].grad.data();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < k; ++j)
                    ga[r * k + j] += go[r] * std::exp(xv[r * k + j] - n.value[r]);
            return;
        }

        case Op::kReshape: {
            if (!wants(n.a)) return;
            double* ga = nodes_[n.a].grad.data();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            return;
        }
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    return ew_binary("add", Graph::Op::kAdd, a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return ew_binary("sub", Graph::Op::kSub, a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return ew_binary("mul", Graph::Op::kMul, a, b, [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& t, double factor) {
    check_operand("scale", t);
    const auto& tv = t.values();
    std::vector<double> out(tv.size());
    for (std::size_t i = 0; i < tv.size(); ++i) out[i] = factor * tv[i];
    Graph::Node n;
    n.op = Graph::Op::kScale;
    n.shape = t.shape();
    n.value = std::move(out);
    n.a = t.id();
    n.c0 = factor;
    return t.graph()->push(std::move(n));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_same_graph("matmul", a, b);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw ShapeError("matmul: shapes " + shape_str(sa) + " and " + shape_str(sb) +
                         " do not form a matrix product");
    const std::size_t m = sa[0], k = sa[1], p = sb[1];
    std::vector<double> out(m * p, 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double x = av[i * k + kk];
            for (std::size_t j = 0; j < p; ++j) out[i * p + j] += x * bv[kk * p + j];
        }
    Graph::Node n;
    n.op = Graph::Op::kMatmul;
    n.shape = {m, p};
    n.value = std::move(out);
    n.a = a.id();
    n.b = b.id();
    return a.graph()->push(std::move(n));
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t zero_pad) {
    check_same_graph("conv2d", x, kernel);
    const Shape& sx = x.shape();
    const Shape& sk = kernel.shape();
    if (sx.size() != 4 || sk.size() != 4 || sx[1] != sk[1])
        throw ShapeError("conv2d: shapes " + shape_str(sx) + " and " + shape_str(sk) +
                         " do not form a convolution");
    const std::size_t N = sx[0], C = sx[1], H = sx[2], W = sx[3];
    const std::size_t F = sk[0], R = sk[2], S = sk[3];
    if (H + 2 * zero_pad < R || W + 2 * zero_pad < S)
        throw ShapeError("conv2d: kernel " + shape_str(sk) + " larger than padded input " +
                         shape_str(sx));
    const std::size_t OH = H + 2 * zero_pad - R + 1;
    const std::size_t OW = W + 2 * zero_pad - S + 1;
    std::vector<double> out(N * F * OH * OW, 0.0);
    const double* xv = x.values().data();
    const double* kv = kernel.values().data();
    for (std::size_t ni = 0; ni < N; ++ni)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t r = 0; r < R; ++r) {
                            const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(oh + r) -
                                                     static_cast<std::ptrdiff_t>(zero_pad);
                            if (h < 0 || h >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t s = 0; s < S; ++s) {
                                const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(ow + s) -
                                                         static_cast<std::ptrdiff_t>(zero_pad);
                                if (w < 0 || w >= static_cast<std::ptrdiff_t>(W)) continue;
                                acc += xv[((ni * C + c) * H + h) * W + w] *
                                       kv[((f * C + c) * R + r) * S + s];
                            }
                        }
                    out[((ni * F + f) * OH + oh) * OW + ow] = acc;
                }
    Graph::Node n;
    n.op = Graph::Op::kConv2d;
    n.shape = {N, F, OH, OW};
    n.value = std::move(out);
    n.a = x.id();
    n.b = kernel.id();
    n.attr = zero_pad;
    return x.graph()->push(std::move(n));
}

Tensor avg_pool2x2(const Tensor& x) {
    check_operand("avg_pool2x2", x);
    const Shape& s = x.shape();
    if (s.size() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0)
        throw ShapeError("avg_pool2x2: shape " + shape_str(s) +
                         " is not rank-4 with even spatial dims");
    const std::size_t N = s[0], C = s[1], H = s[2], W = s[3];
    const std::size_t OH = H / 2, OW = W / 2;
    std::vector<double> out(N * C * OH * OW);
    const double* xv = x.values().data();
    for (std::size_t ni = 0; ni < N; ++ni)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    const std::size_t base = ((ni * C + c) * H + 2 * oh) * W + 2 * ow;
                    out[((ni * C + c) * OH + oh) * OW + ow] =
                        0.25 * (xv[base] + xv[base + 1] + xv[base + W] + xv[base + W + 1]);
                }
    Graph::Node n;
    n.op = Graph::Op::kAvgPool2x2;
    n.shape = {N, C, OH, OW};
    n.value = std::move(out);
    n.a = x.id();
    return x.graph()->push(std::move(n));
}

Tensor relu(const Tensor& t) {
    return ew_unary("relu", Graph::Op::kRelu, t, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor sign(const Tensor& t) {
    return ew_unary("sign", Graph::Op::kSign, t,
                    [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& t, double lo, double hi) {
    if (!(lo <= hi)) throw ValueError("clamp: lo must not exceed hi");
    check_operand("clamp", t);
    const auto& tv = t.values();
    std::vector<double> out(tv.size());
    for (std::size_t i = 0; i < tv.size(); ++i) out[i] = std::min(std::max(tv[i], lo), hi);
    Graph::Node n;
    n.op = Graph::Op::kClamp;
    n.shape = t.shape();
    n.value = std::move(out);
    n.a = t.id();
    n.c0 = lo;
    n.c1 = hi;
    return t.graph()->push(std::move(n));
}

Tensor square(const Tensor& t) {
    return ew_unary("square", Graph::Op::kSquare, t, [](double x) { return x * x; });
}

Tensor sqrt(const Tensor& t) {
    return ew_unary("sqrt", Graph::Op::kSqrt, t, [](double x) { return std::sqrt(x); });
}

Tensor log(const Tensor& t) {
    return ew_unary("log", Graph::Op::kLog, t, [](double x) { return std::log(x); });
}

Tensor exp(const Tensor& t) {
    return ew_unary("exp", Graph::Op::kExp, t, [](double x) { return std::exp(x); });
}

namespace {
Tensor full_reduce(const char* name, Graph::Op op, const Tensor& t) {
    check_operand(name, t);
    const auto& tv = t.values();
    double acc = 0.0;
    for (double v : tv) acc += v;
    if (op == Graph::Op::kMean) acc /= static_cast<double>(tv.size());
    Graph::Node n;
    n.op = op;
    n.shape = {1};
    n.value = {acc};
    n.a = t.id();
    return t.graph()->push(std::move(n));
}
}  // namespace

Tensor sum(const Tensor& t) { return full_reduce("sum", Graph::Op::kSum, t); }
Tensor mean(const Tensor& t) { return full_reduce("mean", Graph::Op::kMean, t); }

namespace {
Tensor axis_reduce(const char* name, Graph::Op op, const Tensor& t, std::size_t axis) {
    check_operand(name, t);
    const AxisView v = make_axis_view(name, t.shape(), axis);
    std::vector<double> out(v.outer * v.inner, 0.0);
    const double* tv = t.values().data();
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t k = 0; k < v.dim; ++k)
            for (std::size_t i = 0; i < v.inner; ++i)
                out[o * v.inner + i] += tv[(o * v.dim + k) * v.inner + i];
    if (op == Graph::Op::kMeanAxis)
        for (double& x : out) x /= static_cast<double>(v.dim);
    Graph::Node n;
    n.op = op;
    n.shape = drop_axis(t.shape(), axis);
    n.value = std::move(out);
    n.a = t.id();
    n.attr = axis;
    return t.graph()->push(std::move(n));
}
}  // namespace

Tensor sum_axis(const Tensor& t, std::size_t axis) {
    return axis_reduce("sum_axis", Graph::Op::kSumAxis, t, axis);
}

Tensor mean_axis(const Tensor& t, std::size_t axis) {
    return axis_reduce("mean_axis", Graph::Op::kMeanAxis, t, axis);
}

Tensor logsumexp_rows(const Tensor& t) {
    check_operand("logsumexp_rows", t);
    const Shape& s = t.shape();
    const std::size_t k = s.back();
    const std::size_t rows = t.size() / k;
    std::vector<double> out(rows);
    const double* tv = t.values().data();
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, tv[r * k + j]);
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += std::exp(tv[r * k + j] - mx);
        out[r] = mx + std::log(acc);
    }
    Graph::Node n;
    n.op = Graph::Op::kLogSumExpRows;
    n.shape = drop_axis(s, s.size() - 1);
    n.value = std::move(out);
    n.a = t.id();
    return t.graph()->push(std::move(n));
}

Tensor reshape(const Tensor& t, Shape shape) {
    check_operand("reshape", t);
    if (shape_size(shape) != t.size())
        throw ShapeError("reshape: cannot view " + shape_str(t.shape()) + " as " +
                         shape_str(shape));
    Graph::Node n;
    n.op = Graph::Op::kReshape;
    n.shape = std::move(shape);
    n.value = t.values();
    n.a = t.id();
    return t.graph()->push(std::move(n));
}

Tensor stop_gradient(const Tensor& t) {
    check_operand("stop_gradient", t);
    return t.graph()->leaf(t.shape(), t.values(), false);
}

}  // namespace adagat::autodiff
