#include "bfgpu/train.hpp"

#include "bfgpu/format.hpp"
#include "bfgpu/kernels.hpp"
#include "bfgpu/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace bfgpu::train {

namespace {

constexpr std::uint64_t kBatchStream = 0x74726e62ULL;

const std::vector<std::pair<Method, std::string>>& method_names()
{
    static const std::vector<std::pair<Method, std::string>> names = {
        {Method::Bfgpu, "bfgpu"},
        {Method::Upu, "upu"},
        {Method::Nnpu, "nnpu"},
        {Method::BalancedPu, "balancedpu"},
        {Method::MilMax, "mil_max"},
        {Method::MilTopk, "mil_topk"},
        {Method::MilAttention, "mil_attention"},
        {Method::MacroSupervised, "macro_supervised"},
        {Method::MacroUnder, "macro_under"},
        {Method::MacroOver, "macro_over"},
    };
    return names;
}

std::mt19937_64 batch_rng(std::uint64_t seed)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(kBatchStream)};
    return std::mt19937_64(seq);
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

/// One optimizer step's worth of bag indices from each side.
struct BagBatch {
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
};

/// Walks the larger side once in chunks of `per_side`; the smaller side is
/// cycled so every step sees both classes.
std::size_t paired_step_count(std::size_t n_pos, std::size_t n_neg, std::size_t per_side)
{
    return ceil_div(std::max(n_pos, n_neg), per_side);
}

std::vector<BagBatch> paired_batches(std::vector<std::size_t> pos, std::vector<std::size_t> neg, std::size_t per_side,
                                     std::mt19937_64& rng)
{
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    const bool pos_larger = pos.size() >= neg.size();
    const auto& large = pos_larger ? pos : neg;
    const auto& small = pos_larger ? neg : pos;
    const std::size_t steps = paired_step_count(pos.size(), neg.size(), per_side);
    const std::size_t small_take = std::min(per_side, small.size());

    std::vector<BagBatch> out(steps);
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < steps; ++s) {
        std::vector<std::size_t> big_part(large.begin() + static_cast<std::ptrdiff_t>(s * per_side),
                                          large.begin() + static_cast<std::ptrdiff_t>(std::min(large.size(), (s + 1) * per_side)));
        std::vector<std::size_t> small_part;
        for (std::size_t i = 0; i < small_take; ++i) {
            small_part.push_back(small[cursor]);
            cursor = (cursor + 1) % small.size();
        }
        out[s].pos = pos_larger ? std::move(big_part) : std::move(small_part);
        out[s].neg = pos_larger ? std::move(small_part) : std::move(big_part);
    }
    return out;
}

std::vector<std::size_t> bags_with_label(const Dataset& d, Label y)
{
    std::vector<std::size_t> out;
    for (std::size_t b = 0; b < d.size(); ++b)
        if (d.bags()[b].macro_label == y) out.push_back(b);
    return out;
}

void append_bag(FeatureMatrix& m, const Bag& bag)
{
    for (const Instance& x : bag.instances) m.append_row(x.features);
}

/// Runs one gradient step; maps numeric failures to TrainingFailure.
double gradient_step(model::Classifier& c, model::Adam& opt, const FeatureMatrix& rows,
                     const losses::LossDefinition& loss, int epoch)
{
    try {
        const model::BatchGrad g = model::backward(c, rows, loss);
        opt.step(c, g.gradient);
        return g.loss;
    } catch (const NumericError& e) {
        throw TrainingFailure(std::string("training diverged: ") + e.what(), epoch);
    }
}

struct StageAccumulator {
    double total = 0.0;
    std::size_t steps = 0;
    std::size_t pos_items = 0;
    std::size_t neg_items = 0;

    EpochLog finish(int epoch, const char* stage) const
    {
        return {epoch, stage, steps ? total / static_cast<double>(steps) : 0.0, steps, pos_items, neg_items};
    }
};

std::vector<double> u_micro_scores(const Dataset& dataset, const model::Classifier& c)
{
    const MicroSplit s = split(dataset);
    const auto preds = kernels::predict(c, gather(dataset, s.u_micro));
    std::vector<double> scores(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) scores[i] = preds[i].g_neg;
    return scores;
}

double final_threshold(const Dataset& dataset, const model::Classifier& c, const TrainConfig& config, double prior)
{
    if (!config.adt_enabled()) return 0.5;
    return adjusted_threshold(u_micro_scores(dataset, c), prior);
}

std::size_t argmax_first(std::span<const double> v)
{
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> softmax(std::span<const double> logits)
{
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> w(logits.size());
    double total = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) total += (w[j] = std::exp(logits[j] - top));
    for (double& x : w) x /= total;
    return w;
}

std::vector<double> attention_of(const Bag& bag, std::span<const double> v)
{
    std::vector<double> logits(bag.size(), 0.0);
    for (std::size_t j = 0; j < bag.size(); ++j)
        for (std::size_t k = 0; k < v.size(); ++k) logits[j] += v[k] * bag.instances[j].features[k];
    return softmax(logits);
}

/// Indices of the k largest scores, ordered by score then index.
std::vector<std::size_t> topk_indices(std::span<const double> scores, int k)
{
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(k, 1))));
    return idx;
}

TrainedModel make_model(const Dataset& dataset, const TrainConfig& config, double prior)
{
    TrainedModel m;
    m.classifier = model::Classifier(dataset.dim(), static_cast<std::size_t>(config.hidden), config.seed);
    m.pooling = pooling_for(config.method);
    m.topk = config.topk;
    m.prior = prior;
    m.config = config;
    if (m.pooling == Pooling::Attention) m.attention.assign(dataset.dim(), 0.0);
    return m;
}

// ---------------------------------------------------------------------------
// Baseline pipelines
// ---------------------------------------------------------------------------

TrainedModel train_micro_pu(const Dataset& dataset, const TrainConfig& config, double prior)
{
    TrainedModel m = make_model(dataset, config, prior);
    const auto pos = bags_with_label(dataset, Label::Normal);
    const auto neg = bags_with_label(dataset, Label::Anomalous);
    const auto per_side = static_cast<std::size_t>(config.batch_bags);
    const std::size_t steps = paired_step_count(pos.size(), neg.size(), per_side);
    model::Adam opt(m.classifier.parameter_count(),
                    {config.lr, 0.9, 0.999, 1e-8, steps * static_cast<std::size_t>(config.epochs)});
    auto rng = batch_rng(config.seed);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        StageAccumulator acc;
        for (const BagBatch& batch : paired_batches(pos, neg, per_side, rng)) {
            FeatureMatrix rows;
            for (std::size_t b : batch.pos) append_bag(rows, dataset.bags()[b]);
            const std::size_t n_p = rows.rows();
            for (std::size_t b : batch.neg) append_bag(rows, dataset.bags()[b]);
            losses::LossDefinition loss;
            switch (config.method) {
            case Method::Upu: loss = losses::upu_objective(n_p, prior); break;
            case Method::Nnpu: loss = losses::nnpu_objective(n_p, prior); break;
            default: loss = losses::balanced_pu_objective(n_p, prior, losses::BalancedPuForm::Symmetric); break;
            }
            acc.total += gradient_step(m.classifier, opt, rows, loss, epoch);
            ++acc.steps;
            acc.pos_items += n_p;
            acc.neg_items += rows.rows() - n_p;
        }
        m.curve.push_back(acc.finish(epoch, to_string(config.method).c_str()));
    }
    m.threshold = final_threshold(dataset, m.classifier, config, prior);
    return m;
}

/// Balanced PN on pooled bag scores. Normal bags pull the pooled score
/// towards 0, anomalous bags towards 1.
TrainedModel train_mil(const Dataset& dataset, const TrainConfig& config, double prior)
{
    TrainedModel m = make_model(dataset, config, prior);
    const auto pos = bags_with_label(dataset, Label::Normal);
    const auto neg = bags_with_label(dataset, Label::Anomalous);
    const auto per_side = static_cast<std::size_t>(config.batch_bags);
    const std::size_t steps = paired_step_count(pos.size(), neg.size(), per_side);
    const model::AdamConfig adam_cfg{config.lr, 0.9, 0.999, 1e-8, steps * static_cast<std::size_t>(config.epochs)};
    model::Adam opt(m.classifier.parameter_count(), adam_cfg);
    model::Adam attn_opt(m.attention.size(), adam_cfg);
    auto rng = batch_rng(config.seed);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        StageAccumulator acc;
        for (const BagBatch& batch : paired_batches(pos, neg, per_side, rng)) {
            struct Slot {
                std::size_t bag, offset, size;
                double d_pool;  // dLoss/dS for this bag
                std::vector<double> attn;
            };
            std::vector<Slot> slots;
            FeatureMatrix rows;
            auto add = [&](std::size_t b, double d_pool) {
                const Bag& bag = dataset.bags()[b];
                Slot s{b, rows.rows(), bag.size(), d_pool, {}};
                if (m.pooling == Pooling::Attention) s.attn = attention_of(bag, m.attention);
                append_bag(rows, bag);
                slots.push_back(std::move(s));
            };
            for (std::size_t b : batch.pos) add(b, 0.5 / static_cast<double>(batch.pos.size()));
            for (std::size_t b : batch.neg) add(b, -0.5 / static_cast<double>(batch.neg.size()));

            std::vector<double> pooled(slots.size());
            const losses::LossDefinition loss = [&](std::span<const Prediction> preds) {
                losses::Objective obj{0.0, std::vector<double>(preds.size(), 0.0)};
                for (std::size_t i = 0; i < slots.size(); ++i) {
                    const Slot& s = slots[i];
                    std::vector<double> sc(s.size);
                    for (std::size_t j = 0; j < s.size; ++j) sc[j] = preds[s.offset + j].g_neg;
                    double S = 0.0;
                    switch (m.pooling) {
                    case Pooling::InstanceMax: {
                        const std::size_t j = argmax_first(sc);
                        S = sc[j];
                        obj.d_score[s.offset + j] = s.d_pool;
                        break;
                    }
                    case Pooling::TopkMean: {
                        const auto top = topk_indices(sc, m.topk);
                        const double inv = 1.0 / static_cast<double>(top.size());
                        for (std::size_t j : top) {
                            S += sc[j] * inv;
                            obj.d_score[s.offset + j] = s.d_pool * inv;
                        }
                        break;
                    }
                    default:
                        for (std::size_t j = 0; j < s.size; ++j) {
                            S += s.attn[j] * sc[j];
                            obj.d_score[s.offset + j] = s.d_pool * s.attn[j];
                        }
                        break;
                    }
                    pooled[i] = S;
                    // 0.5 mean(S) over normal bags + 0.5 mean(1 - S) over anomalous bags.
                    obj.value += s.d_pool > 0 ? s.d_pool * S : -s.d_pool * (1.0 - S);
                }
                return obj;
            };

            if (m.pooling == Pooling::Attention) {
                // d/dv sum_j a_j s_j = sum_j a_j (s_j - S) x_j, evaluated before the step.
                const auto preds = kernels::predict(m.classifier, rows);
                std::vector<double> gv(m.attention.size(), 0.0);
                for (const Slot& s : slots) {
                    double S = 0.0;
                    for (std::size_t j = 0; j < s.size; ++j) S += s.attn[j] * preds[s.offset + j].g_neg;
                    for (std::size_t j = 0; j < s.size; ++j) {
                        const double w = s.d_pool * s.attn[j] * (preds[s.offset + j].g_neg - S);
                        const auto x = rows.row(s.offset + j);
                        for (std::size_t k = 0; k < gv.size(); ++k) gv[k] += w * x[k];
                    }
                }
                acc.total += gradient_step(m.classifier, opt, rows, loss, epoch);
                attn_opt.step(m.attention, gv);
            } else {
                acc.total += gradient_step(m.classifier, opt, rows, loss, epoch);
            }
            ++acc.steps;
            acc.pos_items += batch.pos.size();
            acc.neg_items += batch.neg.size();
        }
        m.curve.push_back(acc.finish(epoch, to_string(config.method).c_str()));
    }
    m.threshold = final_threshold(dataset, m.classifier, config, prior);
    return m;
}

/// Mean-pooled bag features classified directly with balanced PN. The
/// under/over variants rebalance the bag list every epoch.
TrainedModel train_macro(const Dataset& dataset, const TrainConfig& config, double prior)
{
    TrainedModel m = make_model(dataset, config, prior);
    FeatureMatrix pooled(dataset.size(), dataset.dim());
    for (std::size_t b = 0; b < dataset.size(); ++b) {
        const Bag& bag = dataset.bags()[b];
        auto row = pooled.row(b);
        for (const Instance& x : bag.instances)
            for (std::size_t k = 0; k < row.size(); ++k) row[k] += x.features[k];
        for (double& v : row) v /= static_cast<double>(bag.size());
    }
    const auto pos = bags_with_label(dataset, Label::Normal);
    const auto neg = bags_with_label(dataset, Label::Anomalous);
    const std::size_t per_batch = 2 * static_cast<std::size_t>(config.batch_bags);
    std::size_t epoch_size = pos.size() + neg.size();
    if (config.method == Method::MacroUnder) epoch_size = 2 * std::min(pos.size(), neg.size());
    if (config.method == Method::MacroOver) epoch_size = 2 * std::max(pos.size(), neg.size());
    model::Adam opt(m.classifier.parameter_count(), {config.lr, 0.9, 0.999, 1e-8,
                                                     ceil_div(epoch_size, per_batch) * static_cast<std::size_t>(config.epochs)});
    auto rng = batch_rng(config.seed);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> p = pos, n = neg;
        if (config.method == Method::MacroUnder) {
            auto& major = p.size() > n.size() ? p : n;
            const std::size_t keep = std::min(p.size(), n.size());
            std::shuffle(major.begin(), major.end(), rng);
            major.resize(keep);
        } else if (config.method == Method::MacroOver) {
            auto& minor = p.size() < n.size() ? p : n;
            const std::size_t target = std::max(p.size(), n.size());
            const std::vector<std::size_t> base = minor;
            std::uniform_int_distribution<std::size_t> pick(0, base.size() - 1);
            while (minor.size() < target) minor.push_back(base[pick(rng)]);
        }
        std::vector<std::size_t> order = p;
        order.insert(order.end(), n.begin(), n.end());
        std::shuffle(order.begin(), order.end(), rng);

        StageAccumulator acc;
        for (std::size_t start = 0; start < order.size(); start += per_batch) {
            const std::size_t end = std::min(order.size(), start + per_batch);
            FeatureMatrix rows;
            std::size_t n_pos = 0;
            for (std::size_t i = start; i < end; ++i) {
                if (dataset.bags()[order[i]].macro_label != Label::Normal) continue;
                rows.append_row(pooled.row(order[i]));
                ++n_pos;
            }
            for (std::size_t i = start; i < end; ++i) {
                if (dataset.bags()[order[i]].macro_label == Label::Normal) continue;
                rows.append_row(pooled.row(order[i]));
            }
            acc.total += gradient_step(m.classifier, opt, rows, losses::pn_objective(n_pos, true), epoch);
            ++acc.steps;
            acc.pos_items += n_pos;
            acc.neg_items += rows.rows() - n_pos;
        }
        m.curve.push_back(acc.finish(epoch, to_string(config.method).c_str()));
    }
    m.threshold = 0.5;
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Names and configuration
// ---------------------------------------------------------------------------

std::string to_string(Method m)
{
    for (const auto& [method, name] : method_names())
        if (method == m) return name;
    return "unknown";
}

Method method_from_string(const std::string& s)
{
    for (const auto& [method, name] : method_names())
        if (name == s) return method;
    throw InvalidConfig("unknown method '" + s + "'");
}

const std::vector<Method>& all_methods()
{
    static const std::vector<Method> all = [] {
        std::vector<Method> v;
        for (const auto& entry : method_names()) v.push_back(entry.first);
        return v;
    }();
    return all;
}

std::string to_string(Pooling p)
{
    switch (p) {
    case Pooling::InstanceMax: return "instance_max";
    case Pooling::TopkMean: return "topk_mean";
    case Pooling::Attention: return "attention";
    case Pooling::MeanFeatures: return "mean_features";
    }
    return "unknown";
}

Pooling pooling_from_string(const std::string& s)
{
    for (Pooling p : {Pooling::InstanceMax, Pooling::TopkMean, Pooling::Attention, Pooling::MeanFeatures})
        if (to_string(p) == s) return p;
    throw SchemaError("unknown pooling '" + s + "'");
}

Pooling pooling_for(Method m)
{
    switch (m) {
    case Method::MilTopk: return Pooling::TopkMean;
    case Method::MilAttention: return Pooling::Attention;
    case Method::MacroSupervised:
    case Method::MacroUnder:
    case Method::MacroOver: return Pooling::MeanFeatures;
    default: return Pooling::InstanceMax;
    }
}

void TrainConfig::validate() const
{
    if (lambda_bfgpu && !(*lambda_bfgpu >= 0.0)) throw InvalidConfig("lambda_bfgpu must be >= 0");
    if (!(lambda_pse >= 0.0)) throw InvalidConfig("lambda_pse must be >= 0");
    if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
    if (batch_bags < 1) throw InvalidConfig("batch_bags must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidConfig("learning rate must be finite and >= 0");
    if (prior && !(*prior > 0.0 && *prior < 1.0)) throw InvalidConfig("prior must lie in (0, 1)");
    if (topk < 1) throw InvalidConfig("topk must be >= 1");
    if (hidden < 1) throw InvalidConfig("hidden must be >= 1");
    if (use_adt && *use_adt && pooling_for(method) != Pooling::InstanceMax)
        throw InvalidConfig("adjusted threshold applies only to instance-scored methods");
}

bool TrainConfig::adt_enabled() const
{
    if (use_adt) return *use_adt;
    return method == Method::Bfgpu;
}

nlohmann::json TrainConfig::to_json() const
{
    nlohmann::json j;
    j["method"] = to_string(method);
    j["lambda_bfgpu"] = lambda_bfgpu ? nlohmann::json(*lambda_bfgpu) : nlohmann::json(nullptr);
    j["lambda_pse"] = lambda_pse;
    j["epochs"] = epochs;
    j["batch_bags"] = batch_bags;
    j["lr"] = lr;
    j["seed"] = seed;
    j["prior"] = prior ? nlohmann::json(*prior) : nlohmann::json(nullptr);
    j["prior_level"] = bfgpu::to_string(prior_level);
    j["topk"] = topk;
    j["hidden"] = hidden;
    j["use_bfgpu_loss"] = use_bfgpu_loss;
    j["use_pseudo"] = use_pseudo;
    j["use_adt"] = use_adt ? nlohmann::json(*use_adt) : nlohmann::json(nullptr);
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j)
{
    TrainConfig c;
    c.method = method_from_string(j.at("method").get<std::string>());
    if (!j.at("lambda_bfgpu").is_null()) c.lambda_bfgpu = j.at("lambda_bfgpu").get<double>();
    c.lambda_pse = j.at("lambda_pse").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_bags = j.at("batch_bags").get<int>();
    c.lr = j.at("lr").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("prior").is_null()) c.prior = j.at("prior").get<double>();
    c.prior_level = prior_level_from_string(j.at("prior_level").get<std::string>());
    c.topk = j.at("topk").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.use_bfgpu_loss = j.at("use_bfgpu_loss").get<bool>();
    c.use_pseudo = j.at("use_pseudo").get<bool>();
    if (!j.at("use_adt").is_null()) c.use_adt = j.at("use_adt").get<bool>();
    return c;
}

double resolve_prior(const Dataset& dataset, const TrainConfig& config)
{
    if (config.prior) return *config.prior;
    return class_prior(dataset.mean_sigma_micro(), dataset.sigma_macro(), config.prior_level);
}

// ---------------------------------------------------------------------------
// TrainedModel
// ---------------------------------------------------------------------------

std::pair<double, std::optional<std::size_t>> TrainedModel::bag_score(const Bag& bag) const
{
    if (bag.instances.empty()) throw InvalidInput("cannot score an empty bag");
    if (pooling == Pooling::MeanFeatures) {
        std::vector<double> mean(classifier.input_dim(), 0.0);
        for (const Instance& x : bag.instances) {
            if (x.features.size() != mean.size()) throw ShapeError("instance dimension does not match the model");
            for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += x.features[k];
        }
        for (double& v : mean) v /= static_cast<double>(bag.size());
        return {classifier.forward(mean).g_neg, std::nullopt};
    }
    const auto preds = kernels::predict(classifier, gather(bag));
    std::vector<double> sc(preds.size());
    for (std::size_t j = 0; j < preds.size(); ++j) sc[j] = preds[j].g_neg;
    const std::size_t top = argmax_first(sc);
    switch (pooling) {
    case Pooling::TopkMean: return {topk_mean(sc, topk), top};
    case Pooling::Attention: {
        const auto a = attention_of(bag, attention);
        double S = 0.0;
        for (std::size_t j = 0; j < sc.size(); ++j) S += a[j] * sc[j];
        return {S, top};
    }
    default: return {sc[top], top};
    }
}

nlohmann::json TrainedModel::to_json() const
{
    nlohmann::json j;
    j["format"] = "bfgpu-checkpoint";
    j["version"] = 1;
    j["method"] = to_string(config.method);
    j["pooling"] = to_string(pooling);
    j["threshold"] = threshold;
    j["prior"] = prior;
    j["topk"] = topk;
    j["attention"] = attention;
    j["config"] = config.to_json();
    j["classifier"] = classifier.to_json();
    auto curve_j = nlohmann::json::array();
    for (const EpochLog& e : curve)
        curve_j.push_back({{"epoch", e.epoch},
                           {"stage", e.stage},
                           {"mean_loss", e.mean_loss},
                           {"steps", e.steps},
                           {"pos_items", e.pos_items},
                           {"neg_items", e.neg_items}});
    j["curve"] = curve_j;
    return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j)
{
    try {
        if (j.at("format").get<std::string>() != "bfgpu-checkpoint") throw SchemaError("not a bfgpu checkpoint");
        TrainedModel m;
        m.classifier = model::Classifier::from_json(j.at("classifier"));
        m.threshold = j.at("threshold").get<double>();
        if (!(m.threshold >= 0.0 && m.threshold <= 1.0)) throw SchemaError("threshold outside [0, 1]");
        m.pooling = pooling_from_string(j.at("pooling").get<std::string>());
        m.prior = j.at("prior").get<double>();
        m.topk = j.at("topk").get<int>();
        m.attention = j.at("attention").get<std::vector<double>>();
        m.config = TrainConfig::from_json(j.at("config"));
        for (const auto& e : j.at("curve")) {
            m.curve.push_back({e.at("epoch").get<int>(), e.at("stage").get<std::string>(), e.at("mean_loss").get<double>(),
                               e.at("steps").get<std::size_t>(), e.at("pos_items").get<std::size_t>(),
                               e.at("neg_items").get<std::size_t>()});
        }
        if (m.pooling == Pooling::Attention && m.attention.size() != m.classifier.input_dim())
            throw SchemaError("attention vector does not match input dimension");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed checkpoint: ") + e.what());
    } catch (const InvalidConfig& e) {
        throw SchemaError(std::string("malformed checkpoint config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Pseudo labels and threshold
// ---------------------------------------------------------------------------

PseudoSets select_pseudo(const Dataset& dataset, const model::Classifier& classifier)
{
    PseudoSets out;
    const MicroSplit s = split(dataset);
    const auto preds = kernels::predict(classifier, gather(dataset, s.u_micro));
    for (const BagGroup& g : s.u_groups) {
        std::size_t hi = g.begin, lo = g.begin;
        for (std::size_t i = g.begin; i < g.end; ++i) {
            if (preds[i].g_neg > preds[hi].g_neg) hi = i;
            if (preds[i].g_neg < preds[lo].g_neg) lo = i;
        }
        out.n_pse.push_back({s.u_micro[hi], Label::Anomalous});
        if (lo != hi) out.p_pse.push_back({s.u_micro[lo], Label::Normal});
    }
    return out;
}

double adjusted_threshold(std::span<const double> u_scores, double prior)
{
    if (u_scores.empty()) throw InvalidInput("adjusted threshold needs at least one unlabeled score");
    if (!(prior > 0.0 && prior < 1.0)) throw InvalidConfig("prior must lie in (0, 1)");
    std::vector<double> sorted(u_scores.begin(), u_scores.end());
    std::sort(sorted.begin(), sorted.end());
    auto idx = static_cast<std::size_t>(std::floor(static_cast<double>(sorted.size()) * prior));
    idx = std::min(idx, sorted.size() - 1);
    return sorted[idx];
}

double topk_mean(std::span<const double> scores, int k)
{
    if (scores.empty()) throw InvalidInput("top-k of an empty bag");
    const auto top = topk_indices(scores, k);
    double total = 0.0;
    for (std::size_t j : top) total += scores[j];
    return total / static_cast<double>(top.size());
}

// ---------------------------------------------------------------------------
// BFGPU
// ---------------------------------------------------------------------------

TrainedModel train_bfgpu(const Dataset& dataset, const TrainConfig& config)
{
    config.validate();
    if (config.method != Method::Bfgpu) throw InvalidConfig("train_bfgpu called with method " + to_string(config.method));
    split(dataset);  // precondition: both macro classes present
    const double prior = resolve_prior(dataset, config);
    const double lambda_bfgpu = config.lambda_bfgpu.value_or(1.0 / prior);

    TrainedModel m = make_model(dataset, config, prior);
    const auto pos = bags_with_label(dataset, Label::Normal);
    const auto neg = bags_with_label(dataset, Label::Anomalous);
    const auto per_side = static_cast<std::size_t>(config.batch_bags);
    const std::size_t bfgpu_steps = config.use_bfgpu_loss ? paired_step_count(pos.size(), neg.size(), per_side) : 0;
    const std::size_t pseudo_steps = config.use_pseudo ? ceil_div(neg.size(), per_side) : 0;
    model::Adam opt(m.classifier.parameter_count(),
                    {config.lr, 0.9, 0.999, 1e-8, (bfgpu_steps + pseudo_steps) * static_cast<std::size_t>(config.epochs)});
    auto rng = batch_rng(config.seed);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.use_bfgpu_loss) {
            StageAccumulator acc;
            for (const BagBatch& batch : paired_batches(pos, neg, per_side, rng)) {
                FeatureMatrix rows;
                std::vector<std::size_t> pos_sizes, neg_sizes;
                for (std::size_t b : batch.pos) {
                    append_bag(rows, dataset.bags()[b]);
                    pos_sizes.push_back(dataset.bags()[b].size());
                }
                for (std::size_t b : batch.neg) {
                    append_bag(rows, dataset.bags()[b]);
                    neg_sizes.push_back(dataset.bags()[b].size());
                }
                const std::size_t n_p = rows.rows() - std::accumulate(neg_sizes.begin(), neg_sizes.end(), std::size_t{0});
                const auto loss = losses::scaled(losses::bfgpu_objective(pos_sizes, neg_sizes), lambda_bfgpu);
                acc.total += gradient_step(m.classifier, opt, rows, loss, epoch);
                ++acc.steps;
                acc.pos_items += n_p;
                acc.neg_items += rows.rows() - n_p;
            }
            m.curve.push_back(acc.finish(epoch, "bfgpu"));
        }

        if (config.use_pseudo) {
            const PseudoSets sets = select_pseudo(dataset, m.classifier);
            // Pair each bag's anomalous pick with its normal pick, if any.
            struct Pair {
                InstanceRef anomalous;
                std::optional<InstanceRef> normal;
            };
            std::vector<Pair> pairs;
            std::size_t p_cursor = 0;
            for (const PseudoEntry& n : sets.n_pse) {
                Pair pr{n.ref, std::nullopt};
                if (p_cursor < sets.p_pse.size() && sets.p_pse[p_cursor].ref.bag == n.ref.bag)
                    pr.normal = sets.p_pse[p_cursor++].ref;
                pairs.push_back(pr);
            }
            std::shuffle(pairs.begin(), pairs.end(), rng);

            StageAccumulator acc;
            for (std::size_t start = 0; start < pairs.size(); start += per_side) {
                FeatureMatrix rows;
                std::vector<Label> labels;
                for (std::size_t i = start; i < std::min(pairs.size(), start + per_side); ++i) {
                    const auto& a = pairs[i].anomalous;
                    rows.append_row(dataset.bags()[a.bag].instances[a.instance].features);
                    labels.push_back(Label::Anomalous);
                    if (pairs[i].normal) {
                        const auto& n = *pairs[i].normal;
                        rows.append_row(dataset.bags()[n.bag].instances[n.instance].features);
                        labels.push_back(Label::Normal);
                        ++acc.pos_items;
                    }
                    ++acc.neg_items;
                }
                const auto loss = losses::scaled(losses::pseudo_objective(std::move(labels)), config.lambda_pse);
                acc.total += gradient_step(m.classifier, opt, rows, loss, epoch);
                ++acc.steps;
            }
            m.curve.push_back(acc.finish(epoch, "pseudo"));
        }
    }
    m.threshold = final_threshold(dataset, m.classifier, config, prior);
    return m;
}

TrainedModel train_baseline(const Dataset& dataset, const TrainConfig& config)
{
    config.validate();
    split(dataset);  // precondition: both macro classes present
    const double prior = resolve_prior(dataset, config);
    switch (config.method) {
    case Method::Upu:
    case Method::Nnpu:
    case Method::BalancedPu: return train_micro_pu(dataset, config, prior);
    case Method::MilMax:
    case Method::MilTopk:
    case Method::MilAttention: return train_mil(dataset, config, prior);
    case Method::MacroSupervised:
    case Method::MacroUnder:
    case Method::MacroOver: return train_macro(dataset, config, prior);
    case Method::Bfgpu: break;
    }
    throw InvalidConfig("train_baseline does not handle method bfgpu");
}

TrainedModel train(const Dataset& dataset, const TrainConfig& config)
{
    return config.method == Method::Bfgpu ? train_bfgpu(dataset, config) : train_baseline(dataset, config);
}

void write_curve_csv(const TrainedModel& model, std::ostream& out)
{
    out << "epoch,stage,mean_loss\n";
    for (const EpochLog& e : model.curve) out << e.epoch << ',' << e.stage << ',' << format_double(e.mean_loss) << '\n';
}

}  // namespace bfgpu::train
