#include "bfgpu/core.hpp"

#include <doctest.h>

#include <cmath>

using namespace bfgpu;

namespace {

Bag make_bag(std::string id, Label y, std::size_t len, double value = 0.0)
{
    Bag b;
    b.id = std::move(id);
    b.macro_label = y;
    for (std::size_t i = 0; i < len; ++i) b.instances.push_back({{value + double(i), 1.0}, std::nullopt});
    return b;
}

}  // namespace

TEST_CASE("macro label from micro labels")
{
    using L = Label;
    const std::vector<L> all_normal{L::Normal, L::Normal, L::Normal};
    const std::vector<L> one_anomaly{L::Normal, L::Anomalous, L::Normal};
    const std::vector<L> all_anomalous{L::Anomalous, L::Anomalous};
    CHECK(macro_label_from_micro(all_normal) == L::Normal);
    CHECK(macro_label_from_micro(one_anomaly) == L::Anomalous);
    CHECK(macro_label_from_micro(all_anomalous) == L::Anomalous);
    CHECK_THROWS_AS(macro_label_from_micro(std::vector<L>{}), InvalidInput);
}

TEST_CASE("label integer conversion")
{
    CHECK(to_int(Label::Anomalous) == -1);
    CHECK(to_int(Label::Normal) == 1);
    CHECK(label_from_int(-1) == Label::Anomalous);
    CHECK(label_from_int(1) == Label::Normal);
    CHECK_THROWS_AS(label_from_int(0), InvalidInput);
}

TEST_CASE("class prior")
{
    CHECK(class_prior(ImbalanceSpec{5, 1.0}, PriorLevel::Micro) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK(class_prior(ImbalanceSpec{1, 1.0}, PriorLevel::Micro) == 0.5);
    CHECK(class_prior(ImbalanceSpec{5, 10.0}, PriorLevel::Dual) == doctest::Approx(65.0 / 66.0).epsilon(1e-15));
    CHECK(std::abs(class_prior(5.0, 10.0, PriorLevel::Dual) - 0.9848484848484849) < 1e-15);
    CHECK_THROWS_AS(class_prior(ImbalanceSpec{0, 1.0}, PriorLevel::Micro), InvalidConfig);
    CHECK_THROWS_AS(class_prior(ImbalanceSpec{1, 0.0}, PriorLevel::Dual), InvalidConfig);
    CHECK(prior_level_from_string("dual") == PriorLevel::Dual);
    CHECK(to_string(PriorLevel::Micro) == "micro");
    CHECK_THROWS_AS(prior_level_from_string("macro"), InvalidConfig);
}

TEST_CASE("class prior is increasing in both ratios")
{
    for (int sm = 1; sm < 20; ++sm) {
        CHECK(class_prior(sm + 1, 1.0, PriorLevel::Micro) > class_prior(sm, 1.0, PriorLevel::Micro));
        for (double sM : {0.5, 1.0, 3.0, 10.0}) {
            const double dual = class_prior(sm, sM, PriorLevel::Dual);
            CHECK(dual > class_prior(sm, sM, PriorLevel::Micro));
            CHECK(dual < 1.0);
            CHECK(class_prior(sm, sM * 2, PriorLevel::Dual) > dual);
        }
    }
}

TEST_CASE("split counts")
{
    SUBCASE("two positive bags, one negative")
    {
        Dataset d({make_bag("p0", Label::Normal, 3), make_bag("p1", Label::Normal, 3),
                   make_bag("n0", Label::Anomalous, 3)},
                  2);
        const MicroSplit s = split(d);
        CHECK(s.p_micro.size() == 6);
        CHECK(s.u_micro.size() == 3);
        REQUIRE(s.u_groups.size() == 1);
        CHECK(s.u_groups[0].size() == 3);
        CHECK(s.u_groups[0].bag == 2);
        CHECK(s.p_groups.size() == 2);
    }
    SUBCASE("length one bags")
    {
        Dataset d({make_bag("p0", Label::Normal, 1), make_bag("n0", Label::Anomalous, 1)}, 2);
        const MicroSplit s = split(d);
        CHECK(s.p_micro.size() == 1);
        CHECK(s.u_micro.size() == 1);
    }
    SUBCASE("one class only")
    {
        Dataset d({make_bag("p0", Label::Normal, 2), make_bag("p1", Label::Normal, 2)}, 2);
        CHECK_THROWS_AS(split(d), InsufficientData);
    }
}

TEST_CASE("split groups tile the pools in order")
{
    std::vector<Bag> bags;
    for (int i = 0; i < 7; ++i)
        bags.push_back(make_bag("b" + std::to_string(i), i % 3 == 0 ? Label::Anomalous : Label::Normal, 1 + i % 4));
    const Dataset d(bags, 2);
    const MicroSplit s = split(d);
    std::size_t expect = 0;
    for (const BagGroup& g : s.u_groups) {
        CHECK(g.begin == expect);
        for (std::size_t k = g.begin; k < g.end; ++k) CHECK(s.u_micro[k].bag == g.bag);
        expect = g.end;
    }
    CHECK(expect == s.u_micro.size());
    CHECK(s.p_micro.size() + s.u_micro.size() == d.instance_count());
}

TEST_CASE("dataset validation")
{
    CHECK_THROWS_AS(Dataset({make_bag("e", Label::Normal, 0)}, 2), SchemaError);

    Bag wide = make_bag("w", Label::Normal, 1);
    wide.instances[0].features.push_back(0.0);
    CHECK_THROWS_AS(Dataset({wide}, 2), SchemaError);

    Bag nan = make_bag("n", Label::Normal, 1);
    nan.instances[0].features[0] = std::nan("");
    CHECK_THROWS_AS(Dataset({nan}, 2), SchemaError);

    Bag wrong = make_bag("x", Label::Normal, 2);
    wrong.instances[0].micro_label = Label::Anomalous;
    wrong.instances[1].micro_label = Label::Normal;
    CHECK_THROWS_AS(Dataset({wrong}, 2), SchemaError);
}

TEST_CASE("dataset imbalance statistics")
{
    std::vector<Bag> bags{make_bag("n0", Label::Anomalous, 6), make_bag("n1", Label::Anomalous, 4)};
    for (int i = 0; i < 5; ++i) bags.push_back(make_bag("p" + std::to_string(i), Label::Normal, 6));
    const Dataset d(bags, 2);
    CHECK(d.count(Label::Anomalous) == 2);
    CHECK(d.count(Label::Normal) == 5);
    CHECK(d.mean_sigma_micro() == doctest::Approx(4.0));
    CHECK(d.sigma_macro() == doctest::Approx(2.5));
}

TEST_CASE("gather copies rows in reference order")
{
    const Dataset d({make_bag("a", Label::Normal, 2, 10.0), make_bag("b", Label::Anomalous, 3, 20.0)}, 2);
    const std::vector<InstanceRef> refs{{1, 2}, {0, 0}};
    const FeatureMatrix m = gather(d, refs);
    REQUIRE(m.rows() == 2);
    CHECK(m.row(0)[0] == 22.0);
    CHECK(m.row(1)[0] == 10.0);
    CHECK(gather(d.bags()[1]).rows() == 3);

    FeatureMatrix f(0, 2);
    CHECK_THROWS_AS(f.append_row(std::vector<double>{1.0}), ShapeError);
}
