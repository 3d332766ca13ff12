#pragma once

// Domain types shared by every module: labels, instances, bags, datasets,
// imbalance specifications and the micro-level split of a macro dataset.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bfgpu {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error { public: using Error::Error; };
class InvalidConfig : public Error { public: using Error::Error; };
class InsufficientData : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };
class SchemaError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class UndefinedMetric : public Error { public: using Error::Error; };

/// Raised when a forward/backward pass produces a non-finite value.
class NumericError : public Error {
public:
    NumericError(const std::string& what, int layer) : Error(what), layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

/// Raised when training diverges; carries the (zero-based) epoch index.
class TrainingFailure : public Error {
public:
    TrainingFailure(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// +1 is the normal (majority) class, -1 the anomalous class.
enum class Label : int { Anomalous = -1, Normal = +1 };

inline int to_int(Label y) { return static_cast<int>(y); }
Label label_from_int(int v);

/// Classifier output for one instance: probabilities of the anomalous (-1)
/// and normal (+1) class. g_neg + g_pos = 1.
struct Prediction {
    double g_neg = 0.5;
    double g_pos = 0.5;
    bool operator==(const Prediction&) const = default;
};

// ---------------------------------------------------------------------------
// Instances, bags, datasets
// ---------------------------------------------------------------------------

struct Instance {
    std::vector<double> features;
    // Ground truth for diagnostics only. Training code never reads it.
    std::optional<Label> micro_label;

    bool operator==(const Instance&) const = default;
};

struct Bag {
    std::string id;
    std::vector<Instance> instances;
    Label macro_label = Label::Normal;

    std::size_t size() const { return instances.size(); }
    bool has_micro_labels() const;

    bool operator==(const Bag&) const = default;
};

class Dataset {
public:
    Dataset() = default;
    /// Validates dimensions, finiteness, non-empty bags and micro/macro label
    /// consistency. Throws SchemaError on violation.
    Dataset(std::vector<Bag> bags, std::size_t dim);

    const std::vector<Bag>& bags() const { return bags_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return bags_.size(); }
    bool empty() const { return bags_.empty(); }

    std::size_t count(Label macro) const;
    std::size_t instance_count() const;

    /// Mean (l - 1) over anomalous bags; the dataset-level sigma_micro.
    double mean_sigma_micro() const;
    /// |P_macro| / |N_macro|.
    double sigma_macro() const;

    bool operator==(const Dataset&) const = default;

private:
    std::vector<Bag> bags_;
    std::size_t dim_ = 0;
};

/// Row-major n x d block of feature vectors; the layout kernels work on.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

    void append_row(std::span<const double> values);

    const std::vector<double>& data() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Imbalance specification and class priors
// ---------------------------------------------------------------------------

struct ImbalanceSpec {
    int sigma_micro = 1;      // normal:anomalous instances inside anomalous bags
    double sigma_macro = 1.0; // normal:anomalous bags
    int bag_len() const { return sigma_micro + 1; }

    void validate() const;
};

enum class PriorLevel { Micro, Dual };

PriorLevel prior_level_from_string(const std::string& s);
std::string to_string(PriorLevel level);

/// Micro: sigma_micro / (sigma_micro + 1).
/// Dual:  1 - 1 / ((sigma_micro + 1)(sigma_macro + 1)).
double class_prior(const ImbalanceSpec& spec, PriorLevel level);
double class_prior(double sigma_micro, double sigma_macro, PriorLevel level);

// ---------------------------------------------------------------------------
// Label transform and micro split
// ---------------------------------------------------------------------------

/// +1 iff every micro label is +1.
Label macro_label_from_micro(std::span<const Label> micro_labels);

struct InstanceRef {
    std::size_t bag = 0;
    std::size_t instance = 0;
    bool operator==(const InstanceRef&) const = default;
};

/// Contiguous run [begin, end) of a flattened pool that came from one bag.
struct BagGroup {
    std::size_t bag = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

struct MicroSplit {
    std::vector<InstanceRef> p_micro;   // instances of positive (normal) bags
    std::vector<InstanceRef> u_micro;   // instances of negative (anomalous) bags
    std::vector<BagGroup> p_groups;
    std::vector<BagGroup> u_groups;
};

/// Flattens P_macro and N_macro into instance pools, keeping bag grouping.
/// Throws InsufficientData when either macro class is missing.
MicroSplit split(const Dataset& dataset);

/// Copies the referenced instances' features into a contiguous matrix.
FeatureMatrix gather(const Dataset& dataset, std::span<const InstanceRef> refs);
FeatureMatrix gather(const Bag& bag);

}  // namespace bfgpu
