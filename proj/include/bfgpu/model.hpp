#pragma once

// Two-logit classifier d -> h -> 2 (tanh hidden layer, softmax output) with
// hand-written backpropagation, Adam with cosine learning-rate decay, and a
// central-difference gradient checker.

#include "bfgpu/core.hpp"
#include "bfgpu/losses.hpp"

#include <cstdint>
#include <json.hpp>
#include <span>
#include <vector>

namespace bfgpu::model {

/// Flat parameter layout: W1 (h x d, row-major), b1 (h), W2 (2 x h), b2 (2).
/// Output row 0 is the anomalous (-1) score, row 1 the normal (+1) score.
class Classifier {
public:
    Classifier() = default;
    /// W1 and b1 uniform in +-1/sqrt(d); the output layer starts at zero so
    /// every instance initially scores (0.5, 0.5).
    Classifier(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t hidden() const { return hidden_; }
    std::size_t parameter_count() const { return params_.size(); }

    std::span<const double> parameters() const { return params_; }
    std::span<double> parameters() { return params_; }

    Prediction forward(std::span<const double> x) const;

    /// grad += coeff * d g_neg(x) / d theta. Returns the forward prediction.
    Prediction add_score_gradient(std::span<const double> x, double coeff, std::span<double> grad) const;

    nlohmann::json to_json() const;
    static Classifier from_json(const nlohmann::json& j);

    bool operator==(const Classifier&) const = default;

private:
    std::size_t w1() const { return 0; }
    std::size_t b1() const { return hidden_ * input_dim_; }
    std::size_t w2() const { return b1() + hidden_; }
    std::size_t b2() const { return w2() + 2 * hidden_; }

    // Writes tanh activations into `act`; returns the output logits.
    std::pair<double, double> logits(std::span<const double> x, std::span<double> act) const;

    std::size_t input_dim_ = 0;
    std::size_t hidden_ = 0;
    std::vector<double> params_;
};

struct BatchGrad {
    double loss = 0.0;
    std::vector<double> gradient;
};

/// Forward over every row, evaluate the loss, and backpropagate its
/// dLoss/dg_neg through the network. Throws NumericError on a non-finite
/// intermediate (layer 0 = hidden, 1 = output, 2 = loss).
BatchGrad backward(const Classifier& classifier, const FeatureMatrix& batch, const losses::LossDefinition& loss);

/// Loss value only, same row layout as backward.
double evaluate(const Classifier& classifier, const FeatureMatrix& batch, const losses::LossDefinition& loss);

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
};

/// Central differences on every parameter. `loss` is rebuilt from scratch for
/// each perturbation, so any weights it derives from predictions must be
/// frozen by the caller when the analytic gradient treats them as constant.
GradCheck check_gradient(const Classifier& classifier, const FeatureMatrix& batch,
                         const losses::LossDefinition& loss, double step = 1e-5);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t total_steps = 1;  // cosine schedule length
};

class Adam {
public:
    Adam(std::size_t n_params, AdamConfig config);

    /// Cosine-annealed rate for a zero-based step index: lr/2 (1 + cos(pi t / T)).
    double learning_rate(std::size_t step) const;

    /// One bias-corrected Adam update. An all-zero gradient leaves the
    /// parameters and moments untouched (the schedule still advances).
    void step(Classifier& classifier, std::span<const double> grad);
    void step(std::span<double> params, std::span<const double> grad);

    std::size_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t t_ = 0;       // schedule position
    std::size_t updates_ = 0; // bias-correction count
};

}  // namespace bfgpu::model
