#pragma once

// Training pipelines: the BFGPU loop (fine-grained PU stage, pseudo-label
// stage, adjusted decision threshold) and the comparison baselines.

#include "bfgpu/core.hpp"
#include "bfgpu/model.hpp"

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace bfgpu::train {

enum class Method {
    Bfgpu,
    Upu,
    Nnpu,
    BalancedPu,
    MilMax,
    MilTopk,
    MilAttention,
    MacroSupervised,
    MacroUnder,
    MacroOver,
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);
const std::vector<Method>& all_methods();

/// How a bag's anomaly score is formed from the classifier.
enum class Pooling { InstanceMax, TopkMean, Attention, MeanFeatures };

std::string to_string(Pooling p);
Pooling pooling_from_string(const std::string& s);
Pooling pooling_for(Method m);

struct TrainConfig {
    Method method = Method::Bfgpu;
    std::optional<double> lambda_bfgpu;  // unset: 1 / prior
    double lambda_pse = 1.0;
    int epochs = 5;
    int batch_bags = 16;                 // bags per side per step
    double lr = 1e-5;
    std::uint64_t seed = 0;
    std::optional<double> prior;         // unset: from the dataset's imbalance
    PriorLevel prior_level = PriorLevel::Micro;
    int topk = 3;
    int hidden = 32;
    bool use_bfgpu_loss = true;          // ablation switches (BFGPU only)
    bool use_pseudo = true;
    std::optional<bool> use_adt;         // unset: on for BFGPU, off otherwise

    void validate() const;
    bool adt_enabled() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Prior used for a dataset: the configured one, or class_prior of the
/// dataset's mean sigma_micro and sigma_macro at the configured level.
double resolve_prior(const Dataset& dataset, const TrainConfig& config);

struct EpochLog {
    int epoch = 0;
    std::string stage;
    double mean_loss = 0.0;
    std::size_t steps = 0;
    std::size_t pos_items = 0;  // normal bags (or P rows) consumed
    std::size_t neg_items = 0;  // anomalous bags (or U rows) consumed
};

struct TrainedModel {
    model::Classifier classifier;
    double threshold = 0.5;
    Pooling pooling = Pooling::InstanceMax;
    int topk = 3;
    std::vector<double> attention;  // scoring vector for Pooling::Attention
    double prior = 0.5;
    TrainConfig config;
    std::vector<EpochLog> curve;

    /// Anomaly score of a bag under this model's pooling, and the index of
    /// the instance that dominates it (none for mean-feature pooling).
    std::pair<double, std::optional<std::size_t>> bag_score(const Bag& bag) const;

    nlohmann::json to_json() const;
    static TrainedModel from_json(const nlohmann::json& j);
};

struct PseudoEntry {
    InstanceRef ref;
    Label label = Label::Anomalous;
};

struct PseudoSets {
    std::vector<PseudoEntry> n_pse;  // most anomalous instance of each anomalous bag, labeled -1
    std::vector<PseudoEntry> p_pse;  // most normal instance of each anomalous bag, labeled +1
};

/// Per anomalous bag: argmax g_neg goes to n_pse, argmin g_neg to p_pse,
/// ties to the lowest index. A bag whose argmax and argmin coincide
/// contributes only its n_pse entry.
PseudoSets select_pseudo(const Dataset& dataset, const model::Classifier& classifier);

/// sorted(u_scores)[floor(|U| * prior)], index clamped to the last element.
double adjusted_threshold(std::span<const double> u_scores, double prior);

/// Mean of the k largest scores (k clamped to the bag size).
double topk_mean(std::span<const double> scores, int k);

TrainedModel train_bfgpu(const Dataset& dataset, const TrainConfig& config);
TrainedModel train_baseline(const Dataset& dataset, const TrainConfig& config);
/// Dispatches on config.method.
TrainedModel train(const Dataset& dataset, const TrainConfig& config);

void write_curve_csv(const TrainedModel& model, std::ostream& out);

}  // namespace bfgpu::train
