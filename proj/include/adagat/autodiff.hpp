#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "adagat/errors.hpp"

namespace adagat::autodiff {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

class Graph;

// Lightweight handle into a Graph's tape. Valid only while the owning graph
// is alive; a default-constructed tensor is invalid.
class Tensor {
public:
    Tensor() = default;

    bool valid() const { return graph_ != nullptr; }
    Graph* graph() const { return graph_; }
    int id() const { return id_; }

    const Shape& shape() const;
    std::size_t size() const;
    const std::vector<double>& values() const;
    double scalar() const;  // requires size() == 1
    bool requires_grad() const;
    const std::vector<double>& grad() const;

private:
    friend class Graph;
    Tensor(Graph* graph, int id) : graph_(graph), id_(id) {}

    Graph* graph_ = nullptr;
    int id_ = -1;
};

// Dynamic tape: append-only operation records in creation order, rebuilt for
// every step. Parents always precede children, so the reverse pass is a
// single reverse sweep that visits each node exactly once.
class Graph {
public:
    enum class Op : std::uint8_t {
        kLeaf,
        kAdd,
        kSub,
        kMul,
        kScale,
        kMatmul,
        kConv2d,
        kAvgPool2x2,
        kRelu,
        kSign,
        kClamp,
        kSquare,
        kSqrt,
        kLog,
        kExp,
        kSum,
        kMean,
        kSumAxis,
        kMeanAxis,
        kLogSumExpRows,
        kReshape,
    };

    struct Node {
        Op op = Op::kLeaf;
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;  // sized only when requires_grad
        bool requires_grad = false;
        int a = -1;  // parent handles
        int b = -1;
        double c0 = 0.0;  // op payload: scale factor / clamp lo
        double c1 = 0.0;  // clamp hi
        std::size_t attr = 0;  // reduction axis / conv padding
    };

    Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = false);
    Tensor constant(Shape shape, std::vector<double> values);
    Tensor scalar_constant(double v);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse creation
    // order; every requires-grad ancestor accumulates its gradient, adding
    // across multiple uses.
    void backward(const Tensor& loss);

    void clear_grads();

    std::size_t size() const { return nodes_.size(); }
    const Node& node(int id) const;

    // Used by the op constructors below; not intended for direct use.
    Tensor push(Node node);

private:
    void backward_node(int id);

    std::vector<Node> nodes_;
};

// Elementwise ops broadcast by the usual trailing-dimension rules.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, double factor);
Tensor matmul(const Tensor& a, const Tensor& b);  // (m,n) x (n,p)
// x: (N,C,H,W), kernel: (F,C,R,S), stride 1, configurable zero padding.
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t zero_pad);
Tensor avg_pool2x2(const Tensor& x);  // (N,C,H,W) -> (N,C,H/2,W/2)
Tensor relu(const Tensor& t);
Tensor sign(const Tensor& t);  // derivative defined as zero everywhere; sign(0) = 0
Tensor clamp(const Tensor& t, double lo, double hi);
Tensor square(const Tensor& t);
Tensor sqrt(const Tensor& t);  // gradient at 0 defined as 0
Tensor log(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
Tensor sum_axis(const Tensor& t, std::size_t axis);
Tensor mean_axis(const Tensor& t, std::size_t axis);
Tensor logsumexp_rows(const Tensor& t);  // max-stabilized, reduces the last axis
Tensor reshape(const Tensor& t, Shape shape);

// Forward identity that re-enters the tape as a fresh non-gradient leaf:
// backward deposits nothing into the wrapped tensor or any of its ancestors.
Tensor stop_gradient(const Tensor& t);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace adagat::autodiff
