#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adagat/autodiff.hpp"

namespace adagat::losses {

using autodiff::Tensor;

enum class Method { plain_at, lbgat, adagat_mse, adagat_rmse };

Method method_from_string(std::string_view s);
std::string to_string(Method m);
inline bool is_adagat(Method m) {
    return m == Method::adagat_mse || m == Method::adagat_rmse;
}

// Mean over the batch of -log softmax(logits)[label], computed through a
// max-stabilized log-sum-exp (never through naive softmax + log).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Mean over all m*K elements of (a - b)^2; gradients flow to both arguments.
Tensor mse(const Tensor& a, const Tensor& b);

// MSE between target adversarial logits and guide clean logits; both sides
// receive gradient.
Tensor shared_loss(const Tensor& target_adv_logits, const Tensor& guide_clean_logits);

// Same value as shared_loss, but the target branch is wrapped in
// stop_gradient: only the guide side receives gradient.
Tensor ada_mse(const Tensor& target_adv_logits, const Tensor& guide_clean_logits);

// sqrt(ada_mse); amplifies discrepancies below one. Gradient at an exact
// zero is defined as zero.
Tensor ada_rmse(const Tensor& target_adv_logits, const Tensor& guide_clean_logits);

// Raw component values, pre-weighting, so logs can reconstruct any
// re-weighting offline.
struct LossBreakdown {
    double ce = 0.0;
    double shared = 0.0;
    double ada = 0.0;
    double lambda = 0.0;
    double total_guide = 0.0;
    double total_target = 0.0;
};

struct GuideObjective {
    Tensor ce;
    Tensor shared;
    std::optional<Tensor> ada;  // absent for lbgat
    Tensor total;
    double lambda = 0.0;

    LossBreakdown breakdown() const;
};

// ce + shared (+ lambda * ada for the adagat variants). lbgat ignores lambda
// and reports the ada component as zero.
GuideObjective guide_objective(Method method, const Tensor& guide_clean_logits,
                               const Tensor& target_adv_logits,
                               const std::vector<int>& labels, double lambda);

// The target minimizes the shared loss and nothing else.
Tensor target_objective(const Tensor& target_adv_logits, const Tensor& guide_clean_logits);

}  // namespace adagat::losses
