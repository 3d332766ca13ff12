#include "bfgpu/model.hpp"

#include "bfgpu/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace bfgpu::model {

namespace {

std::vector<double>& scratch(std::size_t n)
{
    thread_local std::vector<double> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

// Softmax over (z_neg, z_pos), evaluated on the logit difference.
Prediction two_way_softmax(double z_neg, double z_pos)
{
    const double d = z_pos - z_neg;
    double g_neg;
    if (d > 0.0) {
        const double e = std::exp(-d);
        g_neg = e / (1.0 + e);
    } else {
        g_neg = 1.0 / (1.0 + std::exp(d));
    }
    return {g_neg, 1.0 - g_neg};
}

}  // namespace

Classifier::Classifier(std::size_t input_dim, std::size_t hidden, std::uint64_t seed)
    : input_dim_(input_dim), hidden_(hidden)
{
    if (input_dim == 0 || hidden == 0) throw InvalidConfig("classifier dimensions must be positive");
    params_.assign(b2() + 2, 0.0);
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (std::size_t i = w1(); i < w2(); ++i) params_[i] = unif(rng);
}

std::pair<double, double> Classifier::logits(std::span<const double> x, std::span<double> act) const
{
    if (x.size() != input_dim_) {
        throw ShapeError("input has dimension " + std::to_string(x.size()) + ", classifier expects "
                         + std::to_string(input_dim_));
    }
    const double* W1 = params_.data() + w1();
    const double* B1 = params_.data() + b1();
    const double* W2 = params_.data() + w2();
    const double* B2 = params_.data() + b2();
    double z_neg = B2[0];
    double z_pos = B2[1];
    for (std::size_t j = 0; j < hidden_; ++j) {
        double a = B1[j];
        const double* row = W1 + j * input_dim_;
        for (std::size_t k = 0; k < input_dim_; ++k) a += row[k] * x[k];
        const double h = std::tanh(a);
        if (!std::isfinite(h)) throw NumericError("non-finite hidden activation", 0);
        act[j] = h;
        z_neg += W2[j] * h;
        z_pos += W2[hidden_ + j] * h;
    }
    if (!std::isfinite(z_neg) || !std::isfinite(z_pos)) throw NumericError("non-finite output logit", 1);
    return {z_neg, z_pos};
}

Prediction Classifier::forward(std::span<const double> x) const
{
    auto& act = scratch(hidden_);
    const auto [z_neg, z_pos] = logits(x, std::span<double>(act.data(), hidden_));
    return two_way_softmax(z_neg, z_pos);
}

Prediction Classifier::add_score_gradient(std::span<const double> x, double coeff, std::span<double> grad) const
{
    if (grad.size() != params_.size()) throw ShapeError("gradient buffer does not match parameter count");
    auto& act = scratch(hidden_);
    const std::span<double> h(act.data(), hidden_);
    const auto [z_neg, z_pos] = logits(x, h);
    const Prediction p = two_way_softmax(z_neg, z_pos);
    if (coeff == 0.0) return p;

    // d g_neg / d z_neg = g_neg g_pos = -d g_neg / d z_pos
    const double delta = coeff * p.g_neg * p.g_pos;
    const double* W2 = params_.data() + w2();
    double* gW1 = grad.data() + w1();
    double* gB1 = grad.data() + b1();
    double* gW2 = grad.data() + w2();
    double* gB2 = grad.data() + b2();
    gB2[0] += delta;
    gB2[1] -= delta;
    for (std::size_t j = 0; j < hidden_; ++j) {
        gW2[j] += delta * h[j];
        gW2[hidden_ + j] -= delta * h[j];
        const double da = delta * (W2[j] - W2[hidden_ + j]) * (1.0 - h[j] * h[j]);
        gB1[j] += da;
        double* row = gW1 + j * input_dim_;
        for (std::size_t k = 0; k < input_dim_; ++k) row[k] += da * x[k];
    }
    return p;
}

nlohmann::json Classifier::to_json() const
{
    auto tensor = [this](const char* name, std::vector<std::size_t> shape, std::size_t offset) {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return nlohmann::json{{"name", name},
                              {"shape", shape},
                              {"data", std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(offset),
                                                           params_.begin() + static_cast<std::ptrdiff_t>(offset + n))}};
    };
    nlohmann::json j;
    j["architecture"] = {{"input_dim", input_dim_}, {"hidden", hidden_}, {"outputs", 2}, {"activation", "tanh"}};
    j["parameters"] = nlohmann::json::array({tensor("W1", {hidden_, input_dim_}, w1()), tensor("b1", {hidden_}, b1()),
                                             tensor("W2", {2, hidden_}, w2()), tensor("b2", {2}, b2())});
    return j;
}

Classifier Classifier::from_json(const nlohmann::json& j)
{
    try {
        const auto& arch = j.at("architecture");
        if (arch.at("outputs").get<int>() != 2 || arch.at("activation").get<std::string>() != "tanh")
            throw SchemaError("unsupported classifier architecture");
        Classifier c;
        c.input_dim_ = arch.at("input_dim").get<std::size_t>();
        c.hidden_ = arch.at("hidden").get<std::size_t>();
        if (c.input_dim_ == 0 || c.hidden_ == 0) throw SchemaError("classifier dimensions must be positive");
        c.params_.assign(c.b2() + 2, 0.0);
        const std::vector<std::pair<std::string, std::pair<std::vector<std::size_t>, std::size_t>>> layout = {
            {"W1", {{c.hidden_, c.input_dim_}, c.w1()}},
            {"b1", {{c.hidden_}, c.b1()}},
            {"W2", {{2, c.hidden_}, c.w2()}},
            {"b2", {{2}, c.b2()}},
        };
        const auto& tensors = j.at("parameters");
        if (!tensors.is_array() || tensors.size() != layout.size()) throw SchemaError("expected 4 parameter tensors");
        for (std::size_t t = 0; t < layout.size(); ++t) {
            const auto& [name, spec] = layout[t];
            const auto& tj = tensors[t];
            if (tj.at("name").get<std::string>() != name) throw SchemaError("parameter tensor order mismatch");
            if (tj.at("shape").get<std::vector<std::size_t>>() != spec.first)
                throw SchemaError("shape mismatch for " + name);
            const auto data = tj.at("data").get<std::vector<double>>();
            std::size_t n = 1;
            for (std::size_t s : spec.first) n *= s;
            if (data.size() != n) throw SchemaError("data length mismatch for " + name);
            std::copy(data.begin(), data.end(), c.params_.begin() + static_cast<std::ptrdiff_t>(spec.second));
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed checkpoint: ") + e.what());
    }
}

BatchGrad backward(const Classifier& classifier, const FeatureMatrix& batch, const losses::LossDefinition& loss)
{
    const std::vector<Prediction> preds = kernels::predict(classifier, batch);
    const losses::Objective obj = loss(preds);
    if (obj.d_score.size() != batch.rows()) throw ShapeError("loss gradient does not match batch rows");
    if (!std::isfinite(obj.value)) throw NumericError("non-finite loss value", 2);
    for (double d : obj.d_score)
        if (!std::isfinite(d)) throw NumericError("non-finite loss derivative", 2);
    BatchGrad out{obj.value, kernels::score_gradient(classifier, batch, obj.d_score)};
    for (double g : out.gradient)
        if (!std::isfinite(g)) throw NumericError("non-finite parameter gradient", 0);
    return out;
}

double evaluate(const Classifier& classifier, const FeatureMatrix& batch, const losses::LossDefinition& loss)
{
    return loss(kernels::predict(classifier, batch)).value;
}

GradCheck check_gradient(const Classifier& classifier, const FeatureMatrix& batch,
                         const losses::LossDefinition& loss, double step)
{
    const BatchGrad analytic = backward(classifier, batch, loss);
    Classifier probe = classifier;
    GradCheck out;
    for (std::size_t i = 0; i < probe.parameter_count(); ++i) {
        const double saved = probe.parameters()[i];
        probe.parameters()[i] = saved + step;
        const double up = evaluate(probe, batch, loss);
        probe.parameters()[i] = saved - step;
        const double down = evaluate(probe, batch, loss);
        probe.parameters()[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic.gradient[i];
        // Floor keeps exact-zero components from turning rounding noise into
        // a large ratio.
        const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
        const double rel = std::abs(a - numeric) / scale;
        if (rel > out.max_rel_error) {
            out.max_rel_error = rel;
            out.worst_index = i;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(std::size_t n_params, AdamConfig config) : config_(config), m_(n_params, 0.0), v_(n_params, 0.0)
{
    if (!(config_.lr >= 0.0)) throw InvalidConfig("learning rate must be >= 0");
    if (config_.total_steps == 0) config_.total_steps = 1;
}

double Adam::learning_rate(std::size_t step) const
{
    const double t = static_cast<double>(std::min(step, config_.total_steps));
    const double T = static_cast<double>(config_.total_steps);
    return config_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t / T));
}

void Adam::step(Classifier& classifier, std::span<const double> grad)
{
    step(classifier.parameters(), grad);
}

void Adam::step(std::span<double> params, std::span<const double> grad)
{
    if (params.size() != m_.size() || grad.size() != m_.size()) throw ShapeError("optimizer/parameter size mismatch");
    const std::size_t schedule_pos = t_++;
    if (std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; })) return;

    ++updates_;
    const double lr = learning_rate(schedule_pos);
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(updates_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(updates_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
}

}  // namespace bfgpu::model
