#pragma once

// Macro inference, balanced metrics and the sigma-sweep harness.

#include "bfgpu/core.hpp"
#include "bfgpu/datagen.hpp"
#include "bfgpu/train.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bfgpu::eval {

struct MacroPrediction {
    std::string bag_id;
    Label label = Label::Normal;
    double max_score = 0.0;                     // bag anomaly score
    std::optional<std::size_t> offending;       // set when label is -1 and an instance is responsible
};

/// -1 iff the bag's anomaly score is strictly above the model threshold.
MacroPrediction predict_macro(const train::TrainedModel& model, const Bag& bag);

/// All bags of a dataset; instance scoring runs through the batch kernels.
std::vector<MacroPrediction> predict_dataset(const train::TrainedModel& model, const Dataset& dataset);

/// Anomalous (-1) is the F1-positive class.
struct MetricReport {
    double avg_acc = 0.0;
    double f1_anomalous = 0.0;
    std::size_t tp = 0;  // anomalous predicted anomalous
    std::size_t fp = 0;  // normal predicted anomalous
    std::size_t tn = 0;
    std::size_t fn = 0;
};

MetricReport metrics(std::span<const Label> predictions, std::span<const Label> truths);

MetricReport evaluate(const train::TrainedModel& model, const Dataset& dataset);

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

/// Mean of the available per-sigma means; missing points are skipped.
/// Throws UndefinedMetric if none are present.
double sweep_auc(std::span<const std::optional<double>> per_sigma_means);

struct SweepGrid {
    std::vector<train::Method> methods;
    std::vector<int> sigma_micro;
    std::vector<double> sigma_macro;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    train::TrainConfig base;              // method and seed are overridden per cell
    datagen::SynthConfig data;            // spec and seed are overridden per cell
    int test_negative_bags = 0;           // 0: same as data.n_negative_bags
    std::uint64_t test_seed_offset = 1000;

    void validate() const;
    std::size_t cell_count() const;
};

enum class CellStatus { Ok, Skipped, Failed };

struct SweepRow {
    std::string method;
    int sigma_micro = 0;
    double sigma_macro = 0.0;
    std::uint64_t seed = 0;
    CellStatus status = CellStatus::Ok;
    double avg_acc = 0.0;
    double f1 = 0.0;
    std::string message;
};

struct SigmaAggregate {
    int sigma_micro = 0;
    std::optional<double> avg_acc_mean, avg_acc_std, f1_mean, f1_std;
    std::size_t runs = 0;
};

struct MethodAggregate {
    std::string method;
    double sigma_macro = 0.0;
    std::vector<SigmaAggregate> per_sigma;
    std::optional<double> auc_avg_acc;
    std::optional<double> auc_f1;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::vector<MethodAggregate> aggregates;
    std::size_t failures = 0;
    std::size_t skipped = 0;
};

/// Whether a cell is degenerate and skipped rather than run: top-k pooling
/// with k covering the whole bag is mean pooling.
bool skip_cell(train::Method method, int sigma_micro, const train::TrainConfig& base);

/// Aggregates rows (sample std, n - 1) and AUC columns per (method, sigma_macro).
std::vector<MethodAggregate> aggregate(std::span<const SweepRow> rows);

/// Runs every (method, sigma_micro, sigma_macro, seed) cell. Cells run in
/// parallel with `jobs` workers (0: OpenMP default); row order is the grid
/// order regardless.
SweepReport sweep(const SweepGrid& grid, int jobs = 0);

void write_sweep_csv(const SweepReport& report, std::ostream& out);
nlohmann::json sweep_summary_json(const SweepReport& report);

nlohmann::json to_json(const MetricReport& report);

}  // namespace bfgpu::eval
