#include "bfgpu/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bfgpu::losses {

namespace {

struct Sums {
    double pos = 0.0;  // sum of L[., +1]
    double neg = 0.0;  // sum of L[., -1]
    std::size_t n = 0;
};

Sums sums(std::span<const Prediction> preds)
{
    Sums s;
    for (const Prediction& p : preds) {
        s.pos += loss_pos(p);
        s.neg += loss_neg(p);
    }
    s.n = preds.size();
    return s;
}

void check_open_prior(double prior)
{
    if (!(prior > 0.0 && prior < 1.0)) throw InvalidConfig("class prior must lie in (0, 1)");
}

void check_balanced_prior(double prior)
{
    if (!(prior >= 0.0 && prior < 1.0)) throw InvalidConfig("balanced PU needs a class prior in [0, 1)");
}

void check_pu_sets(std::size_t n_p, std::size_t n_u)
{
    if (n_p == 0 || n_u == 0) throw InvalidInput("PU risk needs non-empty P and U sets");
}

RiskEstimate finish(double pos, double unl, double corr)
{
    return {pos + unl + corr, pos, unl, corr};
}

std::span<const Prediction> head(std::span<const Prediction> rows, std::size_t n)
{
    if (n > rows.size()) throw ShapeError("batch has fewer rows than the loss layout expects");
    return rows.first(n);
}

}  // namespace

RiskEstimate pn_risk(std::span<const Prediction> preds_pos, std::span<const Prediction> preds_neg, bool balanced,
                     double prior)
{
    if (preds_pos.empty() && preds_neg.empty()) throw InvalidInput("PN risk needs at least one prediction");
    if (!balanced) check_open_prior(prior);
    const Sums p = sums(preds_pos);
    const Sums n = sums(preds_neg);
    const double w_pos = balanced ? 0.5 : prior;
    const double w_neg = balanced ? 0.5 : 1.0 - prior;
    const double pos = p.n ? w_pos * p.pos / static_cast<double>(p.n) : 0.0;
    const double neg = n.n ? w_neg * n.neg / static_cast<double>(n.n) : 0.0;
    return finish(pos, neg, 0.0);
}

RiskEstimate upu_risk(std::span<const Prediction> preds_p, std::span<const Prediction> preds_u, double prior)
{
    check_open_prior(prior);
    check_pu_sets(preds_p.size(), preds_u.size());
    const Sums p = sums(preds_p);
    const Sums u = sums(preds_u);
    const double np = static_cast<double>(p.n);
    return finish(prior * p.pos / np, u.neg / static_cast<double>(u.n), -prior * p.neg / np);
}

RiskEstimate nnpu_risk(std::span<const Prediction> preds_p, std::span<const Prediction> preds_u, double prior)
{
    const RiskEstimate u = upu_risk(preds_p, preds_u, prior);
    // Clamp the estimated negative-class risk at zero.
    const double corr = std::max(u.correction_term, -u.unlabeled_term);
    return finish(u.positive_term, u.unlabeled_term, corr);
}

RiskEstimate balanced_pu_risk(std::span<const Prediction> preds_p, std::span<const Prediction> preds_u, double prior,
                              BalancedPuForm form)
{
    check_balanced_prior(prior);
    check_pu_sets(preds_p.size(), preds_u.size());
    const Sums p = sums(preds_p);
    const Sums u = sums(preds_u);
    const double np = static_cast<double>(p.n);
    const double nu = static_cast<double>(u.n);
    const double q = 1.0 - prior;
    const double unl = u.neg / (2.0 * nu * q);
    if (form == BalancedPuForm::ThreeTerm) return finish(p.pos / (2.0 * np), unl, -prior * p.neg / (2.0 * np * q));
    return finish(p.pos / (2.0 * np * q), unl, -prior / (2.0 * q));
}

std::vector<double> attention_weights(std::span<const Prediction> bag_preds)
{
    if (bag_preds.empty()) throw InvalidInput("attention weights of an empty bag");
    double top = bag_preds.front().g_neg;
    for (const Prediction& p : bag_preds) top = std::max(top, p.g_neg);
    std::vector<double> w(bag_preds.size());
    double total = 0.0;
    for (std::size_t j = 0; j < bag_preds.size(); ++j) {
        w[j] = std::exp(bag_preds[j].g_neg - top);
        total += w[j];
    }
    for (double& v : w) v /= total;
    return w;
}

RiskEstimate bfgpu_risk(const BagPredictions& pos_bags, const BagPredictions& neg_bags)
{
    if (pos_bags.empty() || neg_bags.empty()) throw InvalidInput("BFGPU risk needs at least one bag per side");
    auto side = [](const BagPredictions& bags, bool positive) {
        double total = 0.0;
        std::size_t n = 0;
        for (const auto& bag : bags) {
            const std::vector<double> w = attention_weights(bag);
            for (std::size_t j = 0; j < bag.size(); ++j)
                total += w[j] * (positive ? loss_pos(bag[j]) : loss_neg(bag[j]));
            n += bag.size();
        }
        return total / (2.0 * static_cast<double>(n));
    };
    return finish(side(pos_bags, true), side(neg_bags, false), 0.0);
}

double pseudo_loss(std::span<const PseudoPair> pairs)
{
    double total = 0.0;
    for (const PseudoPair& pair : pairs) total += surrogate(pair.prediction, pair.label);
    return total;
}

// ---------------------------------------------------------------------------
// Objective forms
// ---------------------------------------------------------------------------

LossDefinition pn_objective(std::size_t n_pos, bool balanced, double prior)
{
    if (!balanced) check_open_prior(prior);
    return [=](std::span<const Prediction> rows) {
        const auto pos = head(rows, n_pos);
        const auto neg = rows.subspan(n_pos);
        Objective obj{pn_risk(pos, neg, balanced, prior).value, std::vector<double>(rows.size())};
        const double w_pos = balanced ? 0.5 : prior;
        const double w_neg = balanced ? 0.5 : 1.0 - prior;
        for (std::size_t i = 0; i < pos.size(); ++i) obj.d_score[i] = w_pos / static_cast<double>(pos.size());
        for (std::size_t i = 0; i < neg.size(); ++i)
            obj.d_score[n_pos + i] = -w_neg / static_cast<double>(neg.size());
        return obj;
    };
}

LossDefinition upu_objective(std::size_t n_p, double prior)
{
    check_open_prior(prior);
    return [=](std::span<const Prediction> rows) {
        const auto p = head(rows, n_p);
        const auto u = rows.subspan(n_p);
        Objective obj{upu_risk(p, u, prior).value, std::vector<double>(rows.size())};
        for (std::size_t i = 0; i < p.size(); ++i) obj.d_score[i] = 2.0 * prior / static_cast<double>(p.size());
        for (std::size_t i = 0; i < u.size(); ++i) obj.d_score[n_p + i] = -1.0 / static_cast<double>(u.size());
        return obj;
    };
}

LossDefinition nnpu_objective(std::size_t n_p, double prior)
{
    check_open_prior(prior);
    return [=](std::span<const Prediction> rows) {
        const auto p = head(rows, n_p);
        const auto u = rows.subspan(n_p);
        const RiskEstimate r = nnpu_risk(p, u, prior);
        Objective obj{r.value, std::vector<double>(rows.size())};
        const double np = static_cast<double>(p.size());
        const bool clamped = r.unlabeled_term + prior * (-sums(p).neg / np) < 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) obj.d_score[i] = (clamped ? prior : 2.0 * prior) / np;
        if (!clamped) {
            for (std::size_t i = 0; i < u.size(); ++i) obj.d_score[n_p + i] = -1.0 / static_cast<double>(u.size());
        }
        return obj;
    };
}

LossDefinition balanced_pu_objective(std::size_t n_p, double prior, BalancedPuForm form)
{
    check_balanced_prior(prior);
    return [=](std::span<const Prediction> rows) {
        const auto p = head(rows, n_p);
        const auto u = rows.subspan(n_p);
        Objective obj{balanced_pu_risk(p, u, prior, form).value, std::vector<double>(rows.size())};
        const double q = 1.0 - prior;
        // Both forms share the same derivative under the symmetric surrogate.
        for (std::size_t i = 0; i < p.size(); ++i) obj.d_score[i] = 1.0 / (2.0 * static_cast<double>(p.size()) * q);
        for (std::size_t i = 0; i < u.size(); ++i)
            obj.d_score[n_p + i] = -1.0 / (2.0 * static_cast<double>(u.size()) * q);
        return obj;
    };
}

LossDefinition bfgpu_objective(std::vector<std::size_t> pos_bag_sizes, std::vector<std::size_t> neg_bag_sizes)
{
    if (pos_bag_sizes.empty() || neg_bag_sizes.empty())
        throw InvalidInput("BFGPU objective needs at least one bag per side");
    for (std::size_t s : pos_bag_sizes)
        if (s == 0) throw InvalidInput("empty bag in BFGPU layout");
    for (std::size_t s : neg_bag_sizes)
        if (s == 0) throw InvalidInput("empty bag in BFGPU layout");
    const std::size_t n_pos = std::accumulate(pos_bag_sizes.begin(), pos_bag_sizes.end(), std::size_t{0});
    const std::size_t n_neg = std::accumulate(neg_bag_sizes.begin(), neg_bag_sizes.end(), std::size_t{0});

    return [pos = std::move(pos_bag_sizes), neg = std::move(neg_bag_sizes), n_pos,
            n_neg](std::span<const Prediction> rows) {
        if (rows.size() != n_pos + n_neg) throw ShapeError("batch size does not match the BFGPU bag layout");
        Objective obj{0.0, std::vector<double>(rows.size())};
        BagPredictions pos_bags, neg_bags;
        std::size_t offset = 0;
        auto walk = [&](const std::vector<std::size_t>& sizes, BagPredictions& out, double scale) {
            for (std::size_t s : sizes) {
                const auto bag = rows.subspan(offset, s);
                const std::vector<double> w = attention_weights(bag);
                for (std::size_t j = 0; j < s; ++j) obj.d_score[offset + j] = scale * w[j];
                out.emplace_back(bag.begin(), bag.end());
                offset += s;
            }
        };
        walk(pos, pos_bags, 1.0 / (2.0 * static_cast<double>(n_pos)));
        walk(neg, neg_bags, -1.0 / (2.0 * static_cast<double>(n_neg)));
        obj.value = bfgpu_risk(pos_bags, neg_bags).value;
        return obj;
    };
}

LossDefinition pseudo_objective(std::vector<Label> labels)
{
    return [labels = std::move(labels)](std::span<const Prediction> rows) {
        if (rows.size() != labels.size()) throw ShapeError("pseudo batch and label count differ");
        Objective obj{0.0, std::vector<double>(rows.size())};
        for (std::size_t i = 0; i < rows.size(); ++i) {
            obj.value += surrogate(rows[i], labels[i]);
            obj.d_score[i] = labels[i] == Label::Normal ? 1.0 : -1.0;
        }
        return obj;
    };
}

LossDefinition scaled(LossDefinition inner, double factor)
{
    return [inner = std::move(inner), factor](std::span<const Prediction> rows) {
        Objective obj = inner(rows);
        obj.value *= factor;
        for (double& d : obj.d_score) d *= factor;
        return obj;
    };
}

}  // namespace bfgpu::losses
