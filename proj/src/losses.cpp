#include "adagat/losses.hpp"

namespace adagat::losses {

using namespace autodiff;

Method method_from_string(std::string_view s) {
    if (s == "plain_at") return Method::plain_at;
    if (s == "lbgat") return Method::lbgat;
    if (s == "adagat_mse") return Method::adagat_mse;
    if (s == "adagat_rmse") return Method::adagat_rmse;
    throw ValueError("unknown method '" + std::string(s) + "'");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::plain_at: return "plain_at";
        case Method::lbgat: return "lbgat";
        case Method::adagat_mse: return "adagat_mse";
        case Method::adagat_rmse: return "adagat_rmse";
    }
    return "?";
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const Shape& s = logits.shape();
    if (s.size() != 2)
        throw ShapeError("cross_entropy: logits must be (m,K), got " + shape_str(s));
    const std::size_t m = s[0];
    const std::size_t k = s[1];
    if (labels.size() != m)
        throw ValueError("cross_entropy: expected " + std::to_string(m) + " labels, got " +
                         std::to_string(labels.size()));
    std::vector<double> onehot(m * k, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw ValueError("cross_entropy: label " + std::to_string(y) +
                             " out of range [0," + std::to_string(k) + ")");
        onehot[i * k + static_cast<std::size_t>(y)] = 1.0;
    }
    Graph& g = *logits.graph();
    Tensor lse = logsumexp_rows(logits);                                    // (m)
    Tensor picked = sum_axis(mul(logits, g.constant({m, k}, onehot)), 1);   // (m)
    return mean(sub(lse, picked));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mse: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " must match");
    return mean(square(sub(a, b)));
}

Tensor shared_loss(const Tensor& target_adv_logits, const Tensor& guide_clean_logits) {
    return mse(target_adv_logits, guide_clean_logits);
}

Tensor ada_mse(const Tensor& target_adv_logits, const Tensor& guide_clean_logits) {
    if (target_adv_logits.shape() != guide_clean_logits.shape())
        throw ShapeError("ada_mse: shapes " + shape_str(target_adv_logits.shape()) + " and " +
                         shape_str(guide_clean_logits.shape()) + " must match");
    return mse(stop_gradient(target_adv_logits), guide_clean_logits);
}

Tensor ada_rmse(const Tensor& target_adv_logits, const Tensor& guide_clean_logits) {
    return autodiff::sqrt(ada_mse(target_adv_logits, guide_clean_logits));
}

LossBreakdown GuideObjective::breakdown() const {
    LossBreakdown b;
    b.ce = ce.scalar();
    b.shared = shared.scalar();
    b.ada = ada ? ada->scalar() : 0.0;
    b.lambda = lambda;
    b.total_guide = total.scalar();
    b.total_target = b.shared;
    return b;
}

GuideObjective guide_objective(Method method, const Tensor& guide_clean_logits,
                               const Tensor& target_adv_logits,
                               const std::vector<int>& labels, double lambda) {
    if (method == Method::plain_at)
        throw ValueError("guide_objective: plain_at has no guide objective");
    if (lambda < 0.0) throw ValueError("guide_objective: lambda must be non-negative");

    GuideObjective o;
    o.lambda = is_adagat(method) ? lambda : 0.0;
    o.ce = cross_entropy(guide_clean_logits, labels);
    o.shared = shared_loss(target_adv_logits, guide_clean_logits);
    o.total = add(o.ce, o.shared);
    if (is_adagat(method)) {
        o.ada = method == Method::adagat_mse
                    ? ada_mse(target_adv_logits, guide_clean_logits)
                    : ada_rmse(target_adv_logits, guide_clean_logits);
        // lambda == 0 leaves the term out of the objective entirely so the
        // update is bit-identical to lbgat; the component is still reported.
        if (lambda > 0.0) o.total = add(o.total, scale(*o.ada, lambda));
    }
    return o;
}

Tensor target_objective(const Tensor& target_adv_logits, const Tensor& guide_clean_logits) {
    return shared_loss(target_adv_logits, guide_clean_logits);
}

}  // namespace adagat::losses
