#include "bfgpu/cli.hpp"

#include "bfgpu/bounds.hpp"
#include "bfgpu/datagen.hpp"
#include "bfgpu/eval.hpp"
#include "bfgpu/format.hpp"
#include "bfgpu/kernels.hpp"
#include "bfgpu/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

namespace bfgpu::cli {

namespace {

namespace fs = std::filesystem;

struct SynthOptions {
    int sigma_micro = 5;
    double sigma_macro = 1.0;
    int neg_bags = 50;
    int dim = 2;
    double separation = 4.0;
    double noise = 1.0;
    int pool_size = 1000;
    std::uint64_t seed = 0;
    std::string output;
    std::string csv;
};

struct TrainOptions {
    std::string method = "bfgpu";
    std::string data;
    std::string test;
    std::uint64_t seed = 0;
    int epochs = 5;
    int batch = 16;
    double lr = 1e-5;
    std::optional<double> lambda_bfgpu;
    double lambda_pse = 1.0;
    std::optional<double> prior;
    std::string prior_level = "micro";
    int topk = 3;
    int hidden = 32;
    std::optional<bool> adt;
    bool no_pseudo = false;
    bool no_bfgpu_loss = false;
    int threads = 0;
    std::string output = "model.json";
    std::string curve;
    std::string report;
};

struct EvalOptions {
    std::string model;
    std::string data;
    std::string report;
    std::string predictions;
};

struct SweepOptions {
    std::vector<std::string> methods{"bfgpu", "mil_max"};
    std::vector<int> sigma_micro{2, 4, 6, 8, 10};
    std::vector<double> sigma_macro{1.0};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int neg_bags = 50;
    int test_neg_bags = 0;
    int dim = 2;
    double separation = 4.0;
    double noise = 1.0;
    int pool_size = 1000;
    int epochs = 5;
    int batch = 16;
    double lr = 1e-5;
    std::optional<double> lambda_bfgpu;
    double lambda_pse = 1.0;
    std::string prior_level = "micro";
    int topk = 3;
    int hidden = 32;
    bool baseline_adt = false;
    int jobs = 0;
    std::string csv = "sweep.csv";
    std::string summary = "sweep_summary.json";
};

struct BoundsOptions {
    std::vector<double> sigma_micro{1, 2, 5, 10};
    std::vector<double> sigma_macro{1, 2, 5, 10};
    double c_g = 1.0;
    double alpha_l = 1.0;
    double delta = 0.05;
    double n_p = 1e4;
    double n_u = 1e4;
    double disc = 0.0;
    double p_inc = 0.0;
    std::string output;
};

std::ofstream open_out(const std::string& path)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot open '" + path + "' for writing");
    return f;
}

Dataset load_data(const std::string& path, const char* flag)
{
    if (path.empty()) throw InvalidConfig(std::string(flag) + " is required");
    if (!fs::exists(path)) throw InvalidInput(std::string(flag) + ": file '" + path + "' does not exist");
    return datagen::load_dataset(path);
}

void require(bool ok, const std::string& message)
{
    if (!ok) throw InvalidConfig(message);
}

int cmd_synth(const SynthOptions& o, std::ostream& out)
{
    require(o.sigma_micro >= 1, "--sigma-micro must be >= 1");
    require(o.sigma_macro > 0.0, "--sigma-macro must be > 0");
    require(o.neg_bags >= 1, "--neg-bags must be >= 1");
    require(o.dim >= 1, "--dim must be >= 1");
    require(o.separation >= 0.0, "--separation must be >= 0");
    require(o.noise >= 0.0, "--noise must be >= 0");
    require(o.pool_size >= 1, "--pool-size must be >= 1");
    require(!o.output.empty(), "--output is required");

    datagen::SynthConfig cfg;
    cfg.spec = {o.sigma_micro, o.sigma_macro};
    cfg.n_negative_bags = o.neg_bags;
    cfg.dim = o.dim;
    cfg.cluster_separation = o.separation;
    cfg.noise_scale = o.noise;
    cfg.pool_per_class = o.pool_size;
    cfg.seed = o.seed;
    const Dataset d = datagen::generate(cfg);
    datagen::save_dataset(d, o.output);
    if (!o.csv.empty()) {
        auto f = open_out(o.csv);
        datagen::write_instance_csv(d, f);
    }
    out << "wrote " << d.size() << " bags (" << d.count(Label::Anomalous) << " anomalous, "
        << d.count(Label::Normal) << " normal) to " << o.output << '\n';
    return kOk;
}

train::TrainConfig train_config(const TrainOptions& o)
{
    train::TrainConfig c;
    c.method = train::method_from_string(o.method);
    c.lambda_bfgpu = o.lambda_bfgpu;
    c.lambda_pse = o.lambda_pse;
    c.epochs = o.epochs;
    c.batch_bags = o.batch;
    c.lr = o.lr;
    c.seed = o.seed;
    c.prior = o.prior;
    c.prior_level = prior_level_from_string(o.prior_level);
    c.topk = o.topk;
    c.hidden = o.hidden;
    c.use_adt = o.adt;
    c.use_pseudo = !o.no_pseudo;
    c.use_bfgpu_loss = !o.no_bfgpu_loss;
    c.validate();
    return c;
}

int cmd_train(const TrainOptions& o, std::ostream& out)
{
    const train::TrainConfig cfg = train_config(o);
    if (o.threads > 0) kernels::set_threads(o.threads);
    const Dataset data = load_data(o.data, "--data");
    std::optional<Dataset> test;
    if (!o.test.empty()) test = load_data(o.test, "--test");

    const train::TrainedModel model = train::train(data, cfg);
    {
        auto f = open_out(o.output);
        f << model.to_json().dump(2) << '\n';
    }
    if (!o.curve.empty()) {
        auto f = open_out(o.curve);
        train::write_curve_csv(model, f);
    }
    out << "method " << train::to_string(cfg.method) << ", threshold " << format_double(model.threshold)
        << ", checkpoint " << o.output << '\n';
    if (test) {
        const nlohmann::json report = eval::to_json(eval::evaluate(model, *test));
        if (!o.report.empty()) {
            auto f = open_out(o.report);
            f << report.dump(2) << '\n';
        }
        out << report.dump() << '\n';
    }
    return kOk;
}

int cmd_eval(const EvalOptions& o, std::ostream& out)
{
    require(!o.model.empty(), "--model is required");
    if (!fs::exists(o.model)) throw InvalidInput("--model: file '" + o.model + "' does not exist");
    std::ifstream mf(o.model);
    nlohmann::json mj;
    try {
        mj = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("--model: " + std::string(e.what()));
    }
    const train::TrainedModel model = train::TrainedModel::from_json(mj);
    const Dataset data = load_data(o.data, "--data");

    const auto preds = eval::predict_dataset(model, data);
    if (!o.predictions.empty()) {
        auto f = open_out(o.predictions);
        f << "bag_id,predicted,score,offending\n";
        for (const auto& p : preds) {
            f << p.bag_id << ',' << to_int(p.label) << ',' << format_double(p.max_score) << ',';
            if (p.offending) f << *p.offending;
            f << '\n';
        }
    }
    std::vector<Label> pl, tl;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        pl.push_back(preds[i].label);
        tl.push_back(data.bags()[i].macro_label);
    }
    const nlohmann::json report = eval::to_json(eval::metrics(pl, tl));
    if (!o.report.empty()) {
        auto f = open_out(o.report);
        f << report.dump(2) << '\n';
    }
    out << report.dump() << '\n';
    return kOk;
}

int cmd_sweep(const SweepOptions& o, std::ostream& out, std::ostream& err)
{
    eval::SweepGrid grid;
    for (const std::string& m : o.methods) grid.methods.push_back(train::method_from_string(m));
    grid.sigma_micro = o.sigma_micro;
    grid.sigma_macro = o.sigma_macro;
    grid.seeds = o.seeds;
    grid.data.n_negative_bags = o.neg_bags;
    grid.data.dim = o.dim;
    grid.data.cluster_separation = o.separation;
    grid.data.noise_scale = o.noise;
    grid.data.pool_per_class = o.pool_size;
    grid.test_negative_bags = o.test_neg_bags;
    grid.base.epochs = o.epochs;
    grid.base.batch_bags = o.batch;
    grid.base.lr = o.lr;
    grid.base.lambda_bfgpu = o.lambda_bfgpu;
    grid.base.lambda_pse = o.lambda_pse;
    grid.base.prior_level = prior_level_from_string(o.prior_level);
    grid.base.topk = o.topk;
    grid.base.hidden = o.hidden;
    require(o.jobs >= 0, "--jobs must be >= 0");
    grid.validate();

    eval::SweepReport report;
    if (o.baseline_adt) {
        // ADT is only defined for instance-scored methods, so cells run one
        // method at a time with the switch set accordingly.
        for (train::Method m : grid.methods) {
            eval::SweepGrid one = grid;
            one.methods = {m};
            one.base.use_adt = train::pooling_for(m) == train::Pooling::InstanceMax;
            const eval::SweepReport part = eval::sweep(one, o.jobs);
            report.rows.insert(report.rows.end(), part.rows.begin(), part.rows.end());
            report.failures += part.failures;
            report.skipped += part.skipped;
        }
        report.aggregates = eval::aggregate(report.rows);
    } else {
        report = eval::sweep(grid, o.jobs);
    }

    {
        auto f = open_out(o.csv);
        eval::write_sweep_csv(report, f);
    }
    {
        auto f = open_out(o.summary);
        f << eval::sweep_summary_json(report).dump(2) << '\n';
    }
    for (const auto& r : report.rows) {
        if (r.status == eval::CellStatus::Failed)
            err << "warning: cell " << r.method << " sigma_micro=" << r.sigma_micro << " seed=" << r.seed
                << " failed: " << r.message << '\n';
    }
    out << "sweep: " << report.rows.size() << " cells, " << report.failures << " failed, " << report.skipped
        << " skipped; wrote " << o.csv << " and " << o.summary << '\n';
    const std::size_t runnable = report.rows.size() - report.skipped;
    if (runnable > 0 && report.failures == runnable) return kTrainingFailure;
    return kOk;
}

int cmd_bounds(const BoundsOptions& o, std::ostream& out)
{
    require(o.delta > 0.0 && o.delta < 1.0, "--delta must lie in (0, 1)");
    require(!o.sigma_micro.empty() && !o.sigma_macro.empty(), "bounds grid is empty");
    std::ostringstream csv;
    csv << "sigma_micro,sigma_macro,cgpn,mil,bfgpu\n";
    for (double sm : o.sigma_micro) {
        for (double sM : o.sigma_macro) {
            bounds::BoundInputs in{o.c_g, o.alpha_l, o.delta, o.n_p, o.n_u, sm, sM, o.disc, o.p_inc};
            csv << format_double(sm) << ',' << format_double(sM) << ',' << format_double(bounds::bound_cgpn(in)) << ','
                << format_double(bounds::bound_mil(in)) << ',' << format_double(bounds::bound_bfgpu(in)) << '\n';
        }
    }
    if (o.output.empty()) {
        out << csv.str();
    } else {
        auto f = open_out(o.output);
        f << csv.str();
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Balanced fine-grained PU learning for dual-imbalanced multi-instance anomaly detection"};
    app.name(args.empty() ? "bfgpu" : fs::path(args.front()).filename().string());
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "TOML/INI file with one section per subcommand; flags override it");
    app.allow_config_extras(false);
    app.require_subcommand(1);

    SynthOptions so;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dual-imbalance dataset (JSON lines)");
    synth->add_option("--sigma-micro", so.sigma_micro, "Normal:anomalous instances inside anomalous bags");
    synth->add_option("--sigma-macro", so.sigma_macro, "Normal:anomalous bag ratio");
    synth->add_option("--neg-bags", so.neg_bags, "Number of anomalous bags");
    synth->add_option("--dim", so.dim, "Feature dimension");
    synth->add_option("--separation", so.separation, "Distance between the two cluster means");
    synth->add_option("--noise", so.noise, "Isotropic standard deviation");
    synth->add_option("--pool-size", so.pool_size, "Base pool size per class");
    synth->add_option("--seed", so.seed, "Random seed");
    synth->add_option("-o,--output", so.output, "Output dataset path (.jsonl)");
    synth->add_option("--csv", so.csv, "Optional flat instance CSV");

    TrainOptions to;
    auto* trn = app.add_subcommand("train", "Train a model and write a checkpoint");
    trn->add_option("--method", to.method,
                    "bfgpu|upu|nnpu|balancedpu|mil_max|mil_topk|mil_attention|macro_supervised|macro_under|macro_over");
    trn->add_option("--data", to.data, "Training dataset (.jsonl)");
    trn->add_option("--test", to.test, "Held-out dataset to report metrics on");
    trn->add_option("--seed", to.seed, "Random seed");
    trn->add_option("--epochs", to.epochs, "Epochs");
    trn->add_option("--batch", to.batch, "Bags per side per step");
    trn->add_option("--lr", to.lr, "Base learning rate (1e-3 recommended for the small default network)");
    trn->add_option("--lambda-bfgpu", to.lambda_bfgpu, "Fine-grained loss weight (default 1/prior)");
    trn->add_option("--lambda-pse", to.lambda_pse, "Pseudo-label loss weight");
    trn->add_option("--prior", to.prior, "Class prior (default from the dataset's imbalance)");
    trn->add_option("--prior-level", to.prior_level, "micro|dual: how the default prior is computed");
    trn->add_option("--topk", to.topk, "k for mil_topk");
    trn->add_option("--hidden", to.hidden, "Hidden units");
    trn->add_flag("--adt,!--no-adt", to.adt, "Adjusted decision threshold (default on for bfgpu only)");
    trn->add_flag("--no-pseudo", to.no_pseudo, "Skip the pseudo-label stage (bfgpu)");
    trn->add_flag("--no-bfgpu-loss", to.no_bfgpu_loss, "Skip the fine-grained PU stage (bfgpu)");
    trn->add_option("--threads", to.threads, "OpenMP threads for the batch kernels (0: default)");
    trn->add_option("-o,--output", to.output, "Checkpoint path (.json)");
    trn->add_option("--curve", to.curve, "Training-curve CSV path");
    trn->add_option("--report", to.report, "Metric report path (needs --test)");

    EvalOptions eo;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    ev->add_option("--model", eo.model, "Checkpoint (.json)");
    ev->add_option("--data", eo.data, "Dataset (.jsonl)");
    ev->add_option("--report", eo.report, "Metric report path");
    ev->add_option("--predictions", eo.predictions, "Per-bag prediction CSV path");

    SweepOptions wo;
    auto* sw = app.add_subcommand("sweep", "Run methods x sigma_micro x sigma_macro x seeds and aggregate");
    sw->add_option("--methods", wo.methods, "Methods to compare")->delimiter(',');
    sw->add_option("--sigma-micro", wo.sigma_micro, "sigma_micro values")->delimiter(',');
    sw->add_option("--sigma-macro", wo.sigma_macro, "sigma_macro values")->delimiter(',');
    sw->add_option("--seeds", wo.seeds, "Seeds")->delimiter(',');
    sw->add_option("--neg-bags", wo.neg_bags, "Anomalous bags per training set");
    sw->add_option("--test-neg-bags", wo.test_neg_bags, "Anomalous bags per test set (0: same as training)");
    sw->add_option("--dim", wo.dim, "Feature dimension");
    sw->add_option("--separation", wo.separation, "Distance between the two cluster means");
    sw->add_option("--noise", wo.noise, "Isotropic standard deviation");
    sw->add_option("--pool-size", wo.pool_size, "Base pool size per class");
    sw->add_option("--epochs", wo.epochs, "Epochs");
    sw->add_option("--batch", wo.batch, "Bags per side per step");
    sw->add_option("--lr", wo.lr, "Base learning rate");
    sw->add_option("--lambda-bfgpu", wo.lambda_bfgpu, "Fine-grained loss weight (default 1/prior)");
    sw->add_option("--lambda-pse", wo.lambda_pse, "Pseudo-label loss weight");
    sw->add_option("--prior-level", wo.prior_level, "micro|dual");
    sw->add_option("--topk", wo.topk, "k for mil_topk");
    sw->add_option("--hidden", wo.hidden, "Hidden units");
    sw->add_flag("--baseline-adt", wo.baseline_adt, "Use the adjusted threshold for instance-scored baselines too");
    sw->add_option("--jobs", wo.jobs, "Parallel sweep cells (0: OpenMP default)");
    sw->add_option("--csv", wo.csv, "Per-cell CSV path");
    sw->add_option("--summary", wo.summary, "Aggregate JSON path");

    BoundsOptions bo;
    auto* bd = app.add_subcommand("bounds", "Tabulate the three generalization bounds over a sigma grid");
    bd->add_option("--sigma-micro", bo.sigma_micro, "sigma_micro values")->delimiter(',');
    bd->add_option("--sigma-macro", bo.sigma_macro, "sigma_macro values")->delimiter(',');
    bd->add_option("--c-g", bo.c_g, "Complexity constant C_G");
    bd->add_option("--alpha-l", bo.alpha_l, "Lipschitz constant alpha_L");
    bd->add_option("--delta", bo.delta, "Confidence parameter in (0, 1)");
    bd->add_option("--n-p", bo.n_p, "|P_micro|");
    bd->add_option("--n-u", bo.n_u, "|U_micro|");
    bd->add_option("--disc", bo.disc, "Discrepancy term");
    bd->add_option("--p-inc", bo.p_inc, "Inconsistency term");
    bd->add_option("-o,--output", bo.output, "CSV path (default stdout)");

    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("bfgpu");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        // Subcommand help is raised from the subcommand itself.
        if (e.get_exit_code() == 0) {
            for (auto* sub : app.get_subcommands()) out << sub->help();
            return kOk;
        }
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }

    try {
        if (*synth) return cmd_synth(so, out);
        if (*trn) return cmd_train(to, out);
        if (*ev) return cmd_eval(eo, out);
        if (*sw) return cmd_sweep(wo, out, err);
        if (*bd) return cmd_bounds(bo, out);
    } catch (const InvalidConfig& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const TrainingFailure& e) {
        err << "training failure (epoch " << e.epoch() << "): " << e.what() << '\n';
        return kTrainingFailure;
    } catch (const NumericError& e) {
        err << "training failure: " << e.what() << '\n';
        return kTrainingFailure;
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    }
    return kConfigError;
}

}  // namespace bfgpu::cli
