#include "bfgpu/eval.hpp"

#include "bfgpu/format.hpp"
#include "bfgpu/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bfgpu::eval {

MacroPrediction predict_macro(const train::TrainedModel& model, const Bag& bag)
{
    const auto [score, top] = model.bag_score(bag);
    MacroPrediction p{bag.id, score > model.threshold ? Label::Anomalous : Label::Normal, score, std::nullopt};
    if (p.label == Label::Anomalous) p.offending = top;
    return p;
}

std::vector<MacroPrediction> predict_dataset(const train::TrainedModel& model, const Dataset& dataset)
{
    std::vector<MacroPrediction> out;
    out.reserve(dataset.size());
    if (model.pooling != train::Pooling::InstanceMax) {
        for (const Bag& bag : dataset.bags()) out.push_back(predict_macro(model, bag));
        return out;
    }
    FeatureMatrix all;
    for (const Bag& bag : dataset.bags())
        for (const Instance& x : bag.instances) all.append_row(x.features);
    const auto preds = kernels::predict(model.classifier, all);
    std::size_t offset = 0;
    for (const Bag& bag : dataset.bags()) {
        std::size_t top = 0;
        for (std::size_t j = 1; j < bag.size(); ++j)
            if (preds[offset + j].g_neg > preds[offset + top].g_neg) top = j;
        const double score = preds[offset + top].g_neg;
        MacroPrediction p{bag.id, score > model.threshold ? Label::Anomalous : Label::Normal, score, std::nullopt};
        if (p.label == Label::Anomalous) p.offending = top;
        out.push_back(std::move(p));
        offset += bag.size();
    }
    return out;
}

MetricReport metrics(std::span<const Label> predictions, std::span<const Label> truths)
{
    if (predictions.size() != truths.size()) throw InvalidInput("prediction and truth counts differ");
    if (truths.empty()) throw InvalidInput("metrics need at least one sample");
    MetricReport r;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const bool truth_anom = truths[i] == Label::Anomalous;
        const bool pred_anom = predictions[i] == Label::Anomalous;
        if (truth_anom && pred_anom) ++r.tp;
        else if (!truth_anom && pred_anom) ++r.fp;
        else if (!truth_anom) ++r.tn;
        else ++r.fn;
    }
    if (r.tp + r.fn == 0 || r.tn + r.fp == 0) throw UndefinedMetric("balanced metrics need both classes in the truths");
    const double recall_anom = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    const double recall_norm = static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fp);
    r.avg_acc = 0.5 * (recall_anom + recall_norm);
    r.f1_anomalous = static_cast<double>(2 * r.tp) / static_cast<double>(2 * r.tp + r.fp + r.fn);
    return r;
}

MetricReport evaluate(const train::TrainedModel& model, const Dataset& dataset)
{
    const auto preds = predict_dataset(model, dataset);
    std::vector<Label> p, t;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        p.push_back(preds[i].label);
        t.push_back(dataset.bags()[i].macro_label);
    }
    return metrics(p, t);
}

nlohmann::json to_json(const MetricReport& r)
{
    return {{"avg_acc", r.avg_acc}, {"f1", r.f1_anomalous}, {"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}};
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

double sweep_auc(std::span<const std::optional<double>> per_sigma_means)
{
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& m : per_sigma_means) {
        if (!m) continue;
        total += *m;
        ++n;
    }
    if (n == 0) throw UndefinedMetric("no sigma point has a value");
    return total / static_cast<double>(n);
}

void SweepGrid::validate() const
{
    if (methods.empty() || sigma_micro.empty() || sigma_macro.empty() || seeds.empty())
        throw InvalidConfig("sweep grid is empty");
    for (int s : sigma_micro)
        if (s < 1) throw InvalidConfig("sigma_micro values must be >= 1");
    for (double s : sigma_macro)
        if (!(s > 0.0)) throw InvalidConfig("sigma_macro values must be > 0");
    if (test_negative_bags < 0) throw InvalidConfig("test_negative_bags must be >= 0");
    base.validate();
    data.validate();
}

std::size_t SweepGrid::cell_count() const
{
    return methods.size() * sigma_micro.size() * sigma_macro.size() * seeds.size();
}

bool skip_cell(train::Method method, int sigma_micro, const train::TrainConfig& base)
{
    return method == train::Method::MilTopk && base.topk >= sigma_micro + 1;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v)
{
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

std::vector<MethodAggregate> aggregate(std::span<const SweepRow> rows)
{
    // Keys keep first-appearance order of methods and ascending sigma values.
    std::vector<std::pair<std::string, double>> keys;
    for (const SweepRow& r : rows) {
        const std::pair<std::string, double> k{r.method, r.sigma_macro};
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    std::vector<MethodAggregate> out;
    for (const auto& [method, sigma_macro] : keys) {
        MethodAggregate agg{method, sigma_macro, {}, std::nullopt, std::nullopt};
        std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_sigma;
        for (const SweepRow& r : rows) {
            if (r.method != method || r.sigma_macro != sigma_macro) continue;
            auto& slot = by_sigma[r.sigma_micro];
            if (r.status != CellStatus::Ok) continue;
            slot.first.push_back(r.avg_acc);
            slot.second.push_back(r.f1);
        }
        std::vector<std::optional<double>> acc_means, f1_means;
        for (const auto& [sigma, vals] : by_sigma) {
            SigmaAggregate s{sigma, std::nullopt, std::nullopt, std::nullopt, std::nullopt, vals.first.size()};
            if (!vals.first.empty()) {
                const auto [acc_mean, acc_std] = mean_std(vals.first);
                const auto [f1_mean, f1_std] = mean_std(vals.second);
                s.avg_acc_mean = acc_mean;
                s.avg_acc_std = acc_std;
                s.f1_mean = f1_mean;
                s.f1_std = f1_std;
            }
            acc_means.push_back(s.avg_acc_mean);
            f1_means.push_back(s.f1_mean);
            agg.per_sigma.push_back(s);
        }
        if (std::any_of(acc_means.begin(), acc_means.end(), [](const auto& m) { return m.has_value(); })) {
            agg.auc_avg_acc = sweep_auc(acc_means);
            agg.auc_f1 = sweep_auc(f1_means);
        }
        out.push_back(std::move(agg));
    }
    return out;
}

SweepReport sweep(const SweepGrid& grid, int jobs)
{
    grid.validate();
    struct Cell {
        train::Method method;
        int sigma_micro;
        double sigma_macro;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (train::Method m : grid.methods)
        for (double sM : grid.sigma_macro)
            for (int sm : grid.sigma_micro)
                for (std::uint64_t seed : grid.seeds) cells.push_back({m, sm, sM, seed});

    std::vector<SweepRow> rows(cells.size());

#ifdef _OPENMP
    const int workers = jobs > 0 ? jobs : omp_get_max_threads();
#else
    const int workers = 1;
    (void)jobs;
#endif
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(cells.size()); ++i) {
        const Cell& c = cells[static_cast<std::size_t>(i)];
        SweepRow& row = rows[static_cast<std::size_t>(i)];
        row.method = train::to_string(c.method);
        row.sigma_micro = c.sigma_micro;
        row.sigma_macro = c.sigma_macro;
        row.seed = c.seed;
        if (skip_cell(c.method, c.sigma_micro, grid.base)) {
            row.status = CellStatus::Skipped;
            row.message = "top-k covers the whole bag";
            continue;
        }
        try {
            // Every method sees the same train/test draws for a given cell.
            datagen::SynthConfig data = grid.data;
            data.spec = {c.sigma_micro, c.sigma_macro};
            data.seed = c.seed;
            const Dataset train_set = datagen::generate(data);
            datagen::SynthConfig test = data;
            test.seed = c.seed + grid.test_seed_offset;
            if (grid.test_negative_bags > 0) test.n_negative_bags = grid.test_negative_bags;
            const Dataset test_set = datagen::generate(test);

            train::TrainConfig cfg = grid.base;
            cfg.method = c.method;
            cfg.seed = c.seed;
            const train::TrainedModel model = train::train(train_set, cfg);
            const MetricReport r = evaluate(model, test_set);
            row.avg_acc = r.avg_acc;
            row.f1 = r.f1_anomalous;
        } catch (const std::exception& e) {
            row.status = CellStatus::Failed;
            row.message = e.what();
        }
    }

    SweepReport report;
    report.rows = std::move(rows);
    for (const SweepRow& r : report.rows) {
        if (r.status == CellStatus::Failed) ++report.failures;
        if (r.status == CellStatus::Skipped) ++report.skipped;
    }
    report.aggregates = aggregate(report.rows);
    return report;
}

void write_sweep_csv(const SweepReport& report, std::ostream& out)
{
    out << "method,sigma_micro,sigma_macro,seed,avg_acc,f1\n";
    for (const SweepRow& r : report.rows) {
        out << r.method << ',' << r.sigma_micro << ',' << format_double(r.sigma_macro) << ',' << r.seed << ',';
        switch (r.status) {
        case CellStatus::Ok: out << format_double(r.avg_acc) << ',' << format_double(r.f1); break;
        case CellStatus::Skipped: out << "skipped,skipped"; break;
        case CellStatus::Failed: out << "failed,failed"; break;
        }
        out << '\n';
    }
}

nlohmann::json sweep_summary_json(const SweepReport& report)
{
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    auto methods = nlohmann::json::array();
    for (const MethodAggregate& a : report.aggregates) {
        auto per = nlohmann::json::array();
        for (const SigmaAggregate& s : a.per_sigma) {
            per.push_back({{"sigma_micro", s.sigma_micro},
                           {"runs", s.runs},
                           {"avg_acc_mean", opt(s.avg_acc_mean)},
                           {"avg_acc_std", opt(s.avg_acc_std)},
                           {"f1_mean", opt(s.f1_mean)},
                           {"f1_std", opt(s.f1_std)}});
        }
        methods.push_back({{"method", a.method},
                           {"sigma_macro", a.sigma_macro},
                           {"auc_avg_acc", opt(a.auc_avg_acc)},
                           {"auc_f1", opt(a.auc_f1)},
                           {"per_sigma", per}});
    }
    j["aggregates"] = methods;
    j["cells"] = report.rows.size();
    j["failures"] = report.failures;
    j["skipped"] = report.skipped;
    auto failed = nlohmann::json::array();
    for (const SweepRow& r : report.rows) {
        if (r.status != CellStatus::Failed) continue;
        failed.push_back({{"method", r.method},
                          {"sigma_micro", r.sigma_micro},
                          {"sigma_macro", r.sigma_macro},
                          {"seed", r.seed},
                          {"error", r.message}});
    }
    j["failed_cells"] = failed;
    return j;
}

}  // namespace bfgpu::eval
