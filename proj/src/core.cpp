#include "bfgpu/core.hpp"

#include <algorithm>
#include <cmath>

namespace bfgpu {

Label label_from_int(int v)
{
    if (v == 1) return Label::Normal;
    if (v == -1) return Label::Anomalous;
    throw InvalidInput("label must be +1 or -1, got " + std::to_string(v));
}

bool Bag::has_micro_labels() const
{
    return !instances.empty()
        && std::all_of(instances.begin(), instances.end(), [](const Instance& x) { return x.micro_label.has_value(); });
}

Dataset::Dataset(std::vector<Bag> bags, std::size_t dim) : bags_(std::move(bags)), dim_(dim)
{
    if (dim_ == 0) throw SchemaError("dataset dimension must be positive");
    for (const Bag& bag : bags_) {
        if (bag.instances.empty()) throw SchemaError("bag '" + bag.id + "' has no instances");
        std::vector<Label> micro;
        for (const Instance& x : bag.instances) {
            if (x.features.size() != dim_) {
                throw SchemaError("bag '" + bag.id + "': instance dimension " + std::to_string(x.features.size())
                                  + " != " + std::to_string(dim_));
            }
            for (double v : x.features) {
                if (!std::isfinite(v)) throw SchemaError("bag '" + bag.id + "': non-finite feature value");
            }
            if (x.micro_label) micro.push_back(*x.micro_label);
        }
        if (!micro.empty() && micro.size() != bag.instances.size()) {
            throw SchemaError("bag '" + bag.id + "': micro labels present for only some instances");
        }
        if (!micro.empty() && macro_label_from_micro(micro) != bag.macro_label) {
            throw SchemaError("bag '" + bag.id + "': macro label disagrees with micro labels");
        }
    }
}

std::size_t Dataset::count(Label macro) const
{
    return static_cast<std::size_t>(
        std::count_if(bags_.begin(), bags_.end(), [macro](const Bag& b) { return b.macro_label == macro; }));
}

std::size_t Dataset::instance_count() const
{
    std::size_t n = 0;
    for (const Bag& b : bags_) n += b.size();
    return n;
}

double Dataset::mean_sigma_micro() const
{
    double total = 0.0;
    std::size_t n = 0;
    for (const Bag& b : bags_) {
        if (b.macro_label != Label::Anomalous) continue;
        total += static_cast<double>(b.size()) - 1.0;
        ++n;
    }
    if (n == 0) throw InsufficientData("dataset has no anomalous bags");
    return total / static_cast<double>(n);
}

double Dataset::sigma_macro() const
{
    const std::size_t neg = count(Label::Anomalous);
    if (neg == 0) throw InsufficientData("dataset has no anomalous bags");
    return static_cast<double>(count(Label::Normal)) / static_cast<double>(neg);
}

void FeatureMatrix::append_row(std::span<const double> values)
{
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw ShapeError("row width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

void ImbalanceSpec::validate() const
{
    if (sigma_micro < 1) throw InvalidConfig("sigma_micro must be >= 1");
    if (!(sigma_macro > 0.0) || !std::isfinite(sigma_macro)) throw InvalidConfig("sigma_macro must be > 0");
}

PriorLevel prior_level_from_string(const std::string& s)
{
    if (s == "micro") return PriorLevel::Micro;
    if (s == "dual") return PriorLevel::Dual;
    throw InvalidConfig("prior level must be 'micro' or 'dual', got '" + s + "'");
}

std::string to_string(PriorLevel level)
{
    return level == PriorLevel::Micro ? "micro" : "dual";
}

double class_prior(double sigma_micro, double sigma_macro, PriorLevel level)
{
    if (!(sigma_micro > 0.0)) throw InvalidConfig("sigma_micro must be > 0");
    if (level == PriorLevel::Micro) return sigma_micro / (sigma_micro + 1.0);
    if (!(sigma_macro > 0.0)) throw InvalidConfig("sigma_macro must be > 0");
    return 1.0 - 1.0 / ((sigma_micro + 1.0) * (sigma_macro + 1.0));
}

double class_prior(const ImbalanceSpec& spec, PriorLevel level)
{
    spec.validate();
    return class_prior(static_cast<double>(spec.sigma_micro), spec.sigma_macro, level);
}

Label macro_label_from_micro(std::span<const Label> micro_labels)
{
    if (micro_labels.empty()) throw InvalidInput("macro label of an empty bag is undefined");
    const bool any_anomalous =
        std::any_of(micro_labels.begin(), micro_labels.end(), [](Label y) { return y == Label::Anomalous; });
    return any_anomalous ? Label::Anomalous : Label::Normal;
}

MicroSplit split(const Dataset& dataset)
{
    if (dataset.count(Label::Normal) == 0 || dataset.count(Label::Anomalous) == 0) {
        throw InsufficientData("split needs at least one normal and one anomalous bag");
    }
    MicroSplit out;
    const auto& bags = dataset.bags();
    for (std::size_t b = 0; b < bags.size(); ++b) {
        const bool positive = bags[b].macro_label == Label::Normal;
        auto& pool = positive ? out.p_micro : out.u_micro;
        auto& groups = positive ? out.p_groups : out.u_groups;
        BagGroup g{b, pool.size(), pool.size()};
        for (std::size_t j = 0; j < bags[b].size(); ++j) pool.push_back({b, j});
        g.end = pool.size();
        groups.push_back(g);
    }
    return out;
}

FeatureMatrix gather(const Dataset& dataset, std::span<const InstanceRef> refs)
{
    FeatureMatrix m;
    for (const InstanceRef& r : refs) m.append_row(dataset.bags().at(r.bag).instances.at(r.instance).features);
    return m;
}

FeatureMatrix gather(const Bag& bag)
{
    FeatureMatrix m;
    for (const Instance& x : bag.instances) m.append_row(x.features);
    return m;
}

}  // namespace bfgpu
