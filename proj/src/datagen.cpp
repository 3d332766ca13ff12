#include "bfgpu/datagen.hpp"

#include "bfgpu/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace bfgpu::datagen {

namespace {

// Independent streams for the pool and for bag assembly.
constexpr std::uint64_t kPoolStream = 0x706f6f6cULL;
constexpr std::uint64_t kBagStream = 0x62616773ULL;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

std::string bag_name(const char* prefix, int index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%05d", prefix, index);
    return buf;
}

}  // namespace

void SynthConfig::validate() const
{
    spec.validate();
    if (n_negative_bags < 1) throw InvalidConfig("n_negative_bags must be >= 1");
    if (dim < 1) throw InvalidConfig("dim must be >= 1");
    if (!(cluster_separation >= 0.0) || !std::isfinite(cluster_separation))
        throw InvalidConfig("cluster_separation must be finite and >= 0");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
        throw InvalidConfig("noise_scale must be finite and >= 0");
    if (pool_per_class < 1) throw InvalidConfig("pool_per_class must be >= 1");
}

int SynthConfig::n_positive_bags() const
{
    const int saved = std::fegetround();
    std::fesetround(FE_TONEAREST);
    const double r = std::nearbyint(spec.sigma_macro * static_cast<double>(n_negative_bags));
    std::fesetround(saved);
    return static_cast<int>(r);
}

BasePool make_base_pool(const SynthConfig& config)
{
    config.validate();
    auto rng = make_rng(config.seed, kPoolStream);
    std::normal_distribution<double> gauss(0.0, 1.0);

    BasePool pool;
    pool.dim = static_cast<std::size_t>(config.dim);
    const double half = config.cluster_separation / 2.0;
    auto draw = [&](double center) {
        std::vector<double> x(pool.dim);
        for (std::size_t k = 0; k < pool.dim; ++k) {
            const double mean = k == 0 ? center : 0.0;
            x[k] = mean + config.noise_scale * gauss(rng);
        }
        return x;
    };
    pool.positives.reserve(config.pool_per_class);
    pool.negatives.reserve(config.pool_per_class);
    for (int i = 0; i < config.pool_per_class; ++i) pool.positives.push_back(draw(-half));
    for (int i = 0; i < config.pool_per_class; ++i) pool.negatives.push_back(draw(+half));
    return pool;
}

Dataset synthesize(const BasePool& pool, const SynthConfig& config)
{
    config.validate();
    if (pool.positives.empty() || pool.negatives.empty()) throw InvalidInput("base pool has an empty class");
    auto rng = make_rng(config.seed, kBagStream);
    std::uniform_int_distribution<std::size_t> pick_pos(0, pool.positives.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_neg(0, pool.negatives.size() - 1);

    const int sigma = config.spec.sigma_micro;
    std::vector<Bag> bags;
    bags.reserve(static_cast<std::size_t>(config.n_negative_bags + config.n_positive_bags()));

    for (int i = 0; i < config.n_negative_bags; ++i) {
        Bag bag;
        bag.id = bag_name("neg", i);
        bag.macro_label = Label::Anomalous;
        for (int j = 0; j < sigma; ++j) bag.instances.push_back({pool.positives[pick_pos(rng)], Label::Normal});
        bag.instances.push_back({pool.negatives[pick_neg(rng)], Label::Anomalous});
        std::shuffle(bag.instances.begin(), bag.instances.end(), rng);
        bags.push_back(std::move(bag));
    }
    const int n_pos = config.n_positive_bags();
    for (int i = 0; i < n_pos; ++i) {
        Bag bag;
        bag.id = bag_name("pos", i);
        bag.macro_label = Label::Normal;
        for (int j = 0; j <= sigma; ++j) bag.instances.push_back({pool.positives[pick_pos(rng)], Label::Normal});
        bags.push_back(std::move(bag));
    }
    return Dataset(std::move(bags), pool.dim);
}

Dataset generate(const SynthConfig& config)
{
    return synthesize(make_base_pool(config), config);
}

// ---------------------------------------------------------------------------
// JSON lines
// ---------------------------------------------------------------------------

void write_jsonl(const Dataset& dataset, std::ostream& out)
{
    for (const Bag& bag : dataset.bags()) {
        nlohmann::ordered_json rec;
        rec["bag_id"] = bag.id;
        rec["macro_label"] = to_int(bag.macro_label);
        auto instances = nlohmann::ordered_json::array();
        for (const Instance& x : bag.instances) instances.push_back(x.features);
        rec["instances"] = std::move(instances);
        if (bag.has_micro_labels()) {
            auto micro = nlohmann::ordered_json::array();
            for (const Instance& x : bag.instances) micro.push_back(to_int(*x.micro_label));
            rec["micro_labels"] = std::move(micro);
        }
        out << rec.dump() << '\n';
    }
}

Dataset read_jsonl(std::istream& in)
{
    std::vector<Bag> bags;
    std::size_t dim = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            if (line.find("NaN") != std::string::npos || line.find("Infinity") != std::string::npos)
                throw SchemaError(where + "non-finite feature value");
            throw ParseError(where + "malformed JSON (" + e.what() + ")");
        }
        try {
            if (!rec.is_object()) throw ParseError(where + "record is not an object");
            for (const char* key : {"bag_id", "macro_label", "instances"}) {
                if (!rec.contains(key)) throw ParseError(where + "missing field '" + key + "'");
            }
            Bag bag;
            bag.id = rec.at("bag_id").get<std::string>();
            bag.macro_label = label_from_int(rec.at("macro_label").get<int>());
            const auto& insts = rec.at("instances");
            if (!insts.is_array()) throw ParseError(where + "'instances' must be an array");
            for (const auto& row : insts) {
                Instance x;
                if (!row.is_array()) throw ParseError(where + "instance must be an array of numbers");
                for (const auto& v : row) {
                    // NaN/Inf are written as null by the JSON layer.
                    if (v.is_null()) throw SchemaError(where + "non-finite feature value");
                    if (!v.is_number()) throw ParseError(where + "feature must be a number");
                    x.features.push_back(v.get<double>());
                }
                bag.instances.push_back(std::move(x));
            }
            if (rec.contains("micro_labels")) {
                const auto& micro = rec.at("micro_labels");
                if (!micro.is_array() || micro.size() != bag.instances.size())
                    throw ParseError(where + "'micro_labels' must match 'instances' in length");
                for (std::size_t j = 0; j < micro.size(); ++j)
                    bag.instances[j].micro_label = label_from_int(micro[j].get<int>());
            }
            if (bag.instances.empty()) throw SchemaError(where + "bag has no instances");
            if (dim == 0) dim = bag.instances.front().features.size();
            for (const Instance& x : bag.instances) {
                if (x.features.size() != dim)
                    throw SchemaError(where + "dimension " + std::to_string(x.features.size()) + " != "
                                      + std::to_string(dim));
            }
            bags.push_back(std::move(bag));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + e.what());
        } catch (const InvalidInput& e) {
            throw ParseError(where + e.what());
        }
    }
    if (bags.empty()) throw ParseError("dataset has no records");
    return Dataset(std::move(bags), dim);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot open '" + path.string() + "' for writing");
    write_jsonl(dataset, out);
    if (!out) throw InvalidInput("write to '" + path.string() + "' failed");
}

Dataset load_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
    return read_jsonl(in);
}

void write_instance_csv(const Dataset& dataset, std::ostream& out)
{
    out << "bag_id,instance_idx";
    for (std::size_t k = 0; k < dataset.dim(); ++k) out << ",f" << k;
    out << ",macro_label\n";
    for (const Bag& bag : dataset.bags()) {
        for (std::size_t j = 0; j < bag.size(); ++j) {
            out << bag.id << ',' << j;
            for (double v : bag.instances[j].features) out << ',' << format_double(v);
            out << ',' << to_int(bag.macro_label) << '\n';
        }
    }
}

}  // namespace bfgpu::datagen
