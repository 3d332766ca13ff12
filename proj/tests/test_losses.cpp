#include "bfgpu/losses.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace bfgpu;
using namespace bfgpu::losses;

namespace {

Prediction P(double g_neg) { return {g_neg, 1.0 - g_neg}; }

std::vector<Prediction> random_preds(std::mt19937_64& rng, std::size_t n)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Prediction> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(P(u(rng)));
    return out;
}

void check_terms_sum(const RiskEstimate& r)
{
    CHECK(std::abs(r.value - (r.positive_term + r.unlabeled_term + r.correction_term)) < 1e-15);
}

}  // namespace

TEST_CASE("surrogate is symmetric")
{
    for (double g : {0.0, 0.1, 0.37, 0.5, 0.99, 1.0}) {
        const Prediction p = P(g);
        CHECK(loss_pos(p) + loss_neg(p) == 1.0);
        CHECK(surrogate(p, Label::Normal) == g);
    }
}

TEST_CASE("pn risk")
{
    const std::vector<Prediction> perfect_pos{P(0.0), P(0.0)}, perfect_neg{P(1.0)};
    CHECK(pn_risk(perfect_pos, perfect_neg, true).value == 0.0);
    CHECK(pn_risk(perfect_pos, perfect_neg, false, 0.3).value == 0.0);

    const std::vector<Prediction> uniform{P(0.5), P(0.5), P(0.5)};
    CHECK(pn_risk(uniform, uniform, true).value == doctest::Approx(0.5));

    const std::vector<Prediction> pos{P(0.2), P(0.4)}, neg{P(0.9), P(0.7)};
    CHECK(pn_risk(pos, neg, true).value == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(pn_risk(pos, neg, false, 0.8).value == doctest::Approx(0.8 * 0.3 + 0.2 * 0.2).epsilon(1e-14));
    check_terms_sum(pn_risk(pos, neg, true));

    CHECK_THROWS_AS(pn_risk({}, {}, true), InvalidInput);
}

TEST_CASE("upu risk")
{
    const std::vector<Prediction> uniform{P(0.5), P(0.5)};
    for (double prior : {0.1, 0.5, 0.9}) CHECK(upu_risk(uniform, uniform, prior).value == doctest::Approx(0.5));

    const std::vector<Prediction> p{P(0.0)}, u{P(0.0)};
    CHECK(upu_risk(p, u, 0.5).value == doctest::Approx(0.5));
    check_terms_sum(upu_risk(p, u, 0.5));

    CHECK_THROWS_AS(upu_risk(p, u, 0.0), InvalidConfig);
    CHECK_THROWS_AS(upu_risk(p, u, 1.0), InvalidConfig);
    CHECK_THROWS_AS(upu_risk({}, u, 0.5), InvalidInput);
}

TEST_CASE("nnpu clamps the corrected negative term")
{
    // P scored fully normal, U scored fully normal: R_U- = 1, R_P- = 1.
    const std::vector<Prediction> p{P(0.0)}, u{P(0.0)};
    CHECK(nnpu_risk(p, u, 0.9).value == doctest::Approx(upu_risk(p, u, 0.9).value));

    // P with g_pos = 1, U with g_pos = 0: U term 0 - 0.9 < 0, clamp active.
    const std::vector<Prediction> u2{P(1.0)};
    CHECK(nnpu_risk(p, u2, 0.9).value == 0.0);
    CHECK(upu_risk(p, u2, 0.9).value < 0.0);
    check_terms_sum(nnpu_risk(p, u2, 0.9));
}

TEST_CASE("nnpu dominates upu")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> prior(0.05, 0.95);
    for (int t = 0; t < 200; ++t) {
        const auto p = random_preds(rng, 1 + t % 5), u = random_preds(rng, 1 + t % 7);
        const double pi = prior(rng);
        const double nn = nnpu_risk(p, u, pi).value, up = upu_risk(p, u, pi).value;
        CHECK(nn >= up - 1e-15);
        double rp = 0.0;
        for (const auto& x : p) rp += loss_pos(x) / double(p.size());
        CHECK(nn >= pi * rp - 1e-15);
    }
}

TEST_CASE("balanced pu forms agree")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> prior(0.01, 0.99);
    for (int t = 0; t < 50; ++t) {
        const auto p = random_preds(rng, 1 + t % 9), u = random_preds(rng, 1 + t % 13);
        const double pi = prior(rng);
        const double a = balanced_pu_risk(p, u, pi, BalancedPuForm::ThreeTerm).value;
        const double b = balanced_pu_risk(p, u, pi, BalancedPuForm::Symmetric).value;
        CHECK(std::abs(a - b) < 1e-12);
        check_terms_sum(balanced_pu_risk(p, u, pi, BalancedPuForm::ThreeTerm));
    }
}

TEST_CASE("balanced pu values")
{
    const std::vector<Prediction> uniform{P(0.5), P(0.5)};
    CHECK(balanced_pu_risk(uniform, uniform, 0.5, BalancedPuForm::Symmetric).value == doctest::Approx(0.5));

    // prior 0 is balanced PN with U taken as negative
    const std::vector<Prediction> p{P(0.2), P(0.4)}, u{P(0.9), P(0.7)};
    CHECK(balanced_pu_risk(p, u, 0.0, BalancedPuForm::Symmetric).value ==
          doctest::Approx(pn_risk(p, u, true).value).epsilon(1e-14));
    CHECK_THROWS_AS(balanced_pu_risk(p, u, 1.0, BalancedPuForm::Symmetric), InvalidConfig);
}

TEST_CASE("attention weights")
{
    const std::vector<Prediction> flat{P(0.3), P(0.3), P(0.3)};
    for (double w : attention_weights(flat)) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    const std::vector<Prediction> two{P(0.0), P(1.0)};
    const auto w = attention_weights(two);
    CHECK(std::abs(w[0] - 0.2689414213699951) < 1e-15);
    CHECK(std::abs(w[1] - 0.7310585786300049) < 1e-15);

    CHECK_THROWS_AS(attention_weights({}), InvalidInput);
}

TEST_CASE("attention weights sum to one and are permutation equivariant")
{
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        auto bag = random_preds(rng, 1 + t % 12);
        const auto w = attention_weights(bag);
        double s = 0.0;
        for (double v : w) {
            CHECK(v > 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);

        std::vector<std::size_t> perm(bag.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<Prediction> shuffled;
        for (std::size_t i : perm) shuffled.push_back(bag[i]);
        const auto ws = attention_weights(shuffled);
        for (std::size_t i = 0; i < perm.size(); ++i) CHECK(std::abs(ws[i] - w[perm[i]]) < 1e-15);
    }
}

TEST_CASE("dominant instance weight")
{
    const std::vector<Prediction> bag{P(1.0), P(0.0), P(0.0), P(0.0)};
    CHECK(attention_weights(bag)[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 3.0)).epsilon(1e-14));
}

TEST_CASE("bfgpu risk")
{
    const BagPredictions pos{{P(0.5), P(0.5)}}, neg{{P(0.5), P(0.5)}};
    CHECK(bfgpu_risk(pos, neg).value == doctest::Approx(0.25).epsilon(1e-15));
    CHECK_THROWS_AS(bfgpu_risk({}, neg), InvalidInput);
}

TEST_CASE("bfgpu risk with singleton bags")
{
    // Length-1 bags have unit weight, so the risk is the balanced PN risk with
    // U as negative: the prior-free part of the symmetric form times (1 - prior).
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const auto p = random_preds(rng, 3 + t % 4), u = random_preds(rng, 2 + t % 5);
        BagPredictions pos, neg;
        for (const auto& x : p) pos.push_back({x});
        for (const auto& x : u) neg.push_back({x});
        const double ref = pn_risk(p, u, true).value;
        CHECK(std::abs(bfgpu_risk(pos, neg).value - ref) < 1e-14);
        const double pi = 0.3;
        const double sym = balanced_pu_risk(p, u, pi, BalancedPuForm::Symmetric).value;
        CHECK(std::abs(bfgpu_risk(pos, neg).value - (1.0 - pi) * (sym + pi / (2.0 * (1.0 - pi)))) < 1e-14);
    }
}

TEST_CASE("pseudo loss")
{
    const std::vector<PseudoPair> perfect{{P(0.0), Label::Normal}, {P(1.0), Label::Anomalous}};
    CHECK(pseudo_loss(perfect) == 0.0);
    CHECK(pseudo_loss(std::vector<PseudoPair>{{P(0.5), Label::Normal}}) == 0.5);
    CHECK(pseudo_loss(std::vector<PseudoPair>{{P(0.5), Label::Anomalous}}) == 0.5);
    const std::vector<PseudoPair> mixed{{P(0.2), Label::Normal}, {P(0.9), Label::Anomalous}};
    CHECK(pseudo_loss(mixed) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("objective values match the plain estimators")
{
    std::mt19937_64 rng(9);
    const auto p = random_preds(rng, 5), u = random_preds(rng, 7);
    std::vector<Prediction> rows(p);
    rows.insert(rows.end(), u.begin(), u.end());
    CHECK(upu_objective(5, 0.7)(rows).value == upu_risk(p, u, 0.7).value);
    CHECK(nnpu_objective(5, 0.7)(rows).value == nnpu_risk(p, u, 0.7).value);
    CHECK(balanced_pu_objective(5, 0.7, BalancedPuForm::ThreeTerm)(rows).value ==
          balanced_pu_risk(p, u, 0.7, BalancedPuForm::ThreeTerm).value);
    CHECK(pn_objective(5, true)(rows).value == pn_risk(p, u, true).value);
    CHECK(bfgpu_objective({2, 3}, {7})(rows).value ==
          bfgpu_risk({{p[0], p[1]}, {p[2], p[3], p[4]}}, {u}).value);
    CHECK(scaled(pn_objective(5, true), 3.0)(rows).value == doctest::Approx(3.0 * pn_risk(p, u, true).value));
    CHECK_THROWS_AS(bfgpu_objective({2, 3}, {6})(rows), ShapeError);
    CHECK_THROWS_AS(bfgpu_objective({}, {6}), InvalidInput);
}

TEST_CASE("objective derivatives match finite differences in g_neg")
{
    // Each loss is linear in g_neg once bag weights are fixed, so the
    // difference quotient is exact up to rounding.
    std::mt19937_64 rng(13);
    const std::size_t n_p = 4;
    auto rows = random_preds(rng, 9);
    std::vector<Label> labels;
    for (std::size_t i = 0; i < rows.size(); ++i) labels.push_back(i % 2 ? Label::Normal : Label::Anomalous);
    const std::vector<LossDefinition> defs{
        pn_objective(n_p, true), pn_objective(n_p, false, 0.6), upu_objective(n_p, 0.6),
        nnpu_objective(n_p, 0.6), balanced_pu_objective(n_p, 0.6, BalancedPuForm::ThreeTerm),
        pseudo_objective(labels)};
    for (const auto& def : defs) {
        const Objective base = def(rows);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto up = rows, down = rows;
            up[i] = P(rows[i].g_neg + 1e-6);
            down[i] = P(rows[i].g_neg - 1e-6);
            const double fd = (def(up).value - def(down).value) / 2e-6;
            CHECK(std::abs(fd - base.d_score[i]) < 1e-7 * std::max(1.0, std::abs(fd)));
        }
    }
}
