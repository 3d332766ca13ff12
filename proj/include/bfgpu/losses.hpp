#pragma once

// Risk estimators for PN, PU and fine-grained (bag-aware) PU learning.
//
// Every estimator uses the probability surrogate
//     L[g(x), +1] = g_neg(x),   L[g(x), -1] = g_pos(x) = 1 - g_neg(x),
// which satisfies L[t,+1] + L[t,-1] = 1 exactly and is 1-Lipschitz.
//
// Each estimator has a plain form returning a RiskEstimate and an objective
// form returning the value together with dLoss/dg_neg for every input row,
// which is what the model's backward pass consumes.

#include "bfgpu/core.hpp"

#include <functional>
#include <span>
#include <vector>

namespace bfgpu::losses {

inline double loss_pos(const Prediction& p) { return p.g_neg; }  // L[g, +1]
inline double loss_neg(const Prediction& p) { return p.g_pos; }  // L[g, -1]
inline double surrogate(const Prediction& p, Label y) { return y == Label::Normal ? loss_pos(p) : loss_neg(p); }

/// value == positive_term + unlabeled_term + correction_term.
struct RiskEstimate {
    double value = 0.0;
    double positive_term = 0.0;
    double unlabeled_term = 0.0;
    double correction_term = 0.0;
};

enum class BalancedPuForm { ThreeTerm, Symmetric };

/// PN risk on labeled predictions. Unbalanced weights the class-conditional
/// means by (prior, 1 - prior); balanced weights both by 1/2.
RiskEstimate pn_risk(std::span<const Prediction> preds_pos, std::span<const Prediction> preds_neg, bool balanced,
                     double prior = 0.5);

/// Unbiased PU risk. May be negative.
RiskEstimate upu_risk(std::span<const Prediction> preds_p, std::span<const Prediction> preds_u, double prior);

/// Non-negative PU risk: prior * R_P+ + max(0, R_U- - prior * R_P-).
RiskEstimate nnpu_risk(std::span<const Prediction> preds_p, std::span<const Prediction> preds_u, double prior);

/// Balanced PU risk, either the three-term form or the symmetric-loss
/// simplification. Both agree under the probability surrogate.
RiskEstimate balanced_pu_risk(std::span<const Prediction> preds_p, std::span<const Prediction> preds_u, double prior,
                              BalancedPuForm form);

/// Per-bag normalized exponential of g_neg.
std::vector<double> attention_weights(std::span<const Prediction> bag_preds);

/// Bag-grouped predictions: one inner vector per bag.
using BagPredictions = std::vector<std::vector<Prediction>>;

/// Balanced fine-grained PU risk with attention-weighted instances.
RiskEstimate bfgpu_risk(const BagPredictions& pos_bags, const BagPredictions& neg_bags);

struct PseudoPair {
    Prediction prediction;
    Label label = Label::Normal;
};

/// Unweighted sum of surrogate losses over the pseudo-labeled set.
double pseudo_loss(std::span<const PseudoPair> pairs);

// ---------------------------------------------------------------------------
// Objective forms
// ---------------------------------------------------------------------------

/// Loss value plus dLoss/dg_neg for each input row, in row order.
struct Objective {
    double value = 0.0;
    std::vector<double> d_score;
};

/// A differentiable loss over a batch of predictions laid out in a fixed row
/// order. The row layout is fixed by the factory that built it.
using LossDefinition = std::function<Objective(std::span<const Prediction>)>;

/// Rows [0, n_pos) are labeled positive, the remainder negative.
LossDefinition pn_objective(std::size_t n_pos, bool balanced, double prior = 0.5);
/// Rows [0, n_p) are P, the remainder U.
LossDefinition upu_objective(std::size_t n_p, double prior);
LossDefinition nnpu_objective(std::size_t n_p, double prior);
LossDefinition balanced_pu_objective(std::size_t n_p, double prior, BalancedPuForm form);

/// Rows are positive bags back to back, then negative bags, with the given
/// bag sizes. Attention weights are computed from the current predictions
/// and held constant when differentiating.
LossDefinition bfgpu_objective(std::vector<std::size_t> pos_bag_sizes, std::vector<std::size_t> neg_bag_sizes);

/// One label per row.
LossDefinition pseudo_objective(std::vector<Label> labels);

/// Multiplies value and gradient by a constant (the lambda coefficients).
LossDefinition scaled(LossDefinition inner, double factor);

}  // namespace bfgpu::losses
