#pragma once

// Synthetic dual-imbalance MIL datasets built from a two-cluster Gaussian
// base pool, plus JSON-lines / CSV serialization.

#include "bfgpu/core.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace bfgpu::datagen {

struct SynthConfig {
    ImbalanceSpec spec;
    int n_negative_bags = 50;
    int dim = 2;
    double cluster_separation = 4.0;
    double noise_scale = 1.0;
    int pool_per_class = 1000;
    std::uint64_t seed = 0;

    void validate() const;
    /// round(sigma_macro * n_negative_bags), ties to even.
    int n_positive_bags() const;
};

/// Micro-normal and micro-anomalous feature vectors to draw bags from.
struct BasePool {
    std::vector<std::vector<double>> positives;
    std::vector<std::vector<double>> negatives;
    std::size_t dim = 0;
};

/// Two isotropic Gaussians with means at -sep/2 and +sep/2 along the first
/// axis (normal and anomalous respectively).
BasePool make_base_pool(const SynthConfig& config);

/// Anomalous bags hold sigma_micro normal draws plus one anomalous draw,
/// shuffled; normal bags hold sigma_micro + 1 normal draws. Sampling is with
/// replacement. Anomalous bags come first in the output.
Dataset synthesize(const BasePool& pool, const SynthConfig& config);

/// make_base_pool followed by synthesize.
Dataset generate(const SynthConfig& config);

void write_jsonl(const Dataset& dataset, std::ostream& out);
Dataset read_jsonl(std::istream& in);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Flat instance table: bag_id, instance_idx, f0..f{d-1}, macro_label.
void write_instance_csv(const Dataset& dataset, std::ostream& out);

}  // namespace bfgpu::datagen
