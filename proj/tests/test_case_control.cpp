#include "densmap/case_control.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

using namespace densmap;

namespace {

Predictions preds_from(const std::vector<std::pair<std::string, double>>& items) {
    Predictions p;
    for (const auto& [id, v] : items) p.items.push_back({id, v, 0});
    return p;
}

// 100 control women with evenly spread scores 0.5, 1.5, ..., 99.5
std::map<std::string, double> grid_scores(std::vector<double>* controls) {
    std::map<std::string, double> all;
    for (int i = 0; i < 100; ++i) {
        const double s = i + 0.5;
        all["c" + std::to_string(i)] = s;
        controls->push_back(s);
    }
    return all;
}

}  // namespace

TEST_CASE("woman_score averages that woman's image predictions") {
    const auto p = preds_from({{"a_1", 10}, {"a_2", 30}, {"b_1", 50}});
    CHECK(woman_score(p, {"a_1", "a_2"}) == doctest::Approx(20.0));
    CHECK(woman_score(p, {"b_1"}) == doctest::Approx(50.0));
    CHECK(woman_score(p, {"a_2", "a_1"}) == doctest::Approx(20.0));  // order-free
    CHECK_THROWS(woman_score(p, {}));
    CHECK_THROWS(woman_score(p, {"missing"}));
}

TEST_CASE("percentile interpolates linearly") {
    std::vector<double> v{10, 20, 30, 40, 50};
    CHECK(percentile(v, 0.0) == doctest::Approx(10.0));
    CHECK(percentile(v, 1.0) == doctest::Approx(50.0));
    CHECK(percentile(v, 0.5) == doctest::Approx(30.0));
    CHECK(percentile(v, 0.25) == doctest::Approx(20.0));
    CHECK(percentile(v, 0.1) == doctest::Approx(14.0));  // 0.4 of the way 10->20
    CHECK_THROWS(percentile({}, 0.5));
}

TEST_CASE("quintile grid splits 100 controls into groups of 20") {
    std::vector<double> controls;
    const auto all = grid_scores(&controls);
    const auto assign = assign_quintiles(controls, all);
    std::array<int, 6> counts{};
    for (const auto& [w, q] : assign.quintile_of) {
        REQUIRE(q >= 1);
        REQUIRE(q <= 5);
        ++counts[static_cast<std::size_t>(q)];
    }
    for (int q = 1; q <= 5; ++q) CHECK(counts[static_cast<std::size_t>(q)] == 20);
    // boundaries are the 20/40/60/80 percentiles of the control scores
    CHECK(assign.boundaries[0] == doctest::Approx(percentile(controls, 0.2)));
    CHECK(assign.boundaries[3] == doctest::Approx(percentile(controls, 0.8)));
}

TEST_CASE("scores beyond the control range land in the outer quintiles") {
    std::vector<double> controls;
    auto all = grid_scores(&controls);
    all["case_hi"] = 250.0;
    all["case_lo"] = -40.0;
    const auto assign = assign_quintiles(controls, all);
    CHECK(assign.quintile_of.at("case_hi") == 5);
    CHECK(assign.quintile_of.at("case_lo") == 1);
}

TEST_CASE("ties on a boundary go to the lower quintile") {
    std::vector<double> controls;
    auto all = grid_scores(&controls);
    const double b1 = percentile(controls, 0.2);
    all["on_boundary"] = b1;
    const auto assign = assign_quintiles(controls, all);
    CHECK(assign.quintile_of.at("on_boundary") == 1);
}

TEST_CASE("degenerate controls are rejected") {
    std::map<std::string, double> all{{"a", 5}, {"b", 5}, {"c", 5}, {"d", 5}, {"e", 5}};
    CHECK_THROWS(assign_quintiles({5, 5, 5, 5, 5}, all));
    CHECK_THROWS(assign_quintiles({1, 2, 3}, all));  // fewer than 5 controls
}

TEST_CASE("quintile assignment is invariant under monotone transforms") {
    auto rng = std::mt19937_64{42};
    std::uniform_real_distribution<double> unif(0, 100);
    std::vector<double> controls;
    std::map<std::string, double> all;
    for (int i = 0; i < 200; ++i) {
        const double s = unif(rng);
        all["w" + std::to_string(i)] = s;
        if (i % 2 == 0) controls.push_back(s);
    }
    const auto base = assign_quintiles(controls, all);

    std::vector<double> tc = controls;
    std::map<std::string, double> ta;
    for (auto& v : tc) v = std::exp(v / 30.0);
    for (const auto& [w, s] : all) ta[w] = std::exp(s / 30.0);
    const auto transformed = assign_quintiles(tc, ta);
    CHECK(base.quintile_of == transformed.quintile_of);
}

TEST_CASE("odds ratio matches a worked 2x2 table") {
    // top quintile: 30 cases vs 50 controls; bottom: 10 cases vs 70 controls
    // (30/50) / (10/70) = 4.2
    QuintileAssignment assign;
    std::vector<CaseControlRow> roster;
    int idx = 0;
    auto add = [&](int q, bool is_case, int count) {
        for (int i = 0; i < count; ++i) {
            const std::string w = "w" + std::to_string(idx++);
            assign.quintile_of[w] = q;
            roster.push_back({w, is_case, 0});
        }
    };
    add(5, true, 30);
    add(5, false, 50);
    add(1, true, 10);
    add(1, false, 70);
    add(3, true, 15);  // middle quintiles are ignored
    add(3, false, 40);

    const auto res = odds_ratio_top_bottom(assign, roster);
    CHECK(res.or_point == doctest::Approx(4.2).epsilon(1e-12));
    CHECK(res.cases_top == 30);
    CHECK(res.controls_top == 50);
    CHECK(res.cases_bottom == 10);
    CHECK(res.controls_bottom == 70);
    CHECK_FALSE(res.continuity_corrected);
    CHECK(res.ci_low < 4.2);
    CHECK(res.ci_high > 4.2);

    // Woolf interval: exp(log OR +- z * sqrt(1/a + 1/b + 1/c + 1/d))
    const double se = std::sqrt(1.0 / 30 + 1.0 / 50 + 1.0 / 10 + 1.0 / 70);
    const double z = 1.959963984540054;
    CHECK(res.ci_low == doctest::Approx(4.2 * std::exp(-z * se)).epsilon(1e-9));
    CHECK(res.ci_high == doctest::Approx(4.2 * std::exp(z * se)).epsilon(1e-9));
}

TEST_CASE("swapping top and bottom quintiles inverts the odds ratio") {
    QuintileAssignment a, b;
    std::vector<CaseControlRow> roster;
    int idx = 0;
    auto add = [&](int q, bool is_case, int count) {
        for (int i = 0; i < count; ++i) {
            const std::string w = "s" + std::to_string(idx++);
            a.quintile_of[w] = q;
            b.quintile_of[w] = q == 5 ? 1 : (q == 1 ? 5 : q);
            roster.push_back({w, is_case, 0});
        }
    };
    add(5, true, 25);
    add(5, false, 30);
    add(1, true, 8);
    add(1, false, 60);
    const auto ra = odds_ratio_top_bottom(a, roster);
    const auto rb = odds_ratio_top_bottom(b, roster);
    CHECK(rb.or_point == doctest::Approx(1.0 / ra.or_point).epsilon(1e-12));
}

TEST_CASE("zero cells trigger the continuity correction") {
    QuintileAssignment assign;
    std::vector<CaseControlRow> roster;
    int idx = 0;
    auto add = [&](int q, bool is_case, int count) {
        for (int i = 0; i < count; ++i) {
            const std::string w = "z" + std::to_string(idx++);
            assign.quintile_of[w] = q;
            roster.push_back({w, is_case, 0});
        }
    };
    add(5, true, 20);
    add(5, false, 30);
    add(1, false, 50);  // no cases in the bottom quintile
    const auto res = odds_ratio_top_bottom(assign, roster);
    CHECK(res.continuity_corrected);
    // +0.5 to every cell: (20.5/30.5) / (0.5/50.5)
    CHECK(res.or_point == doctest::Approx((20.5 / 30.5) / (0.5 / 50.5)).epsilon(1e-12));
    CHECK(std::isfinite(res.ci_low));
    CHECK(std::isfinite(res.ci_high));
}

TEST_CASE("empty extreme quintiles are an error") {
    QuintileAssignment assign;
    std::vector<CaseControlRow> roster;
    assign.quintile_of["a"] = 3;
    assign.quintile_of["b"] = 3;
    roster.push_back({"a", true, 0});
    roster.push_back({"b", false, 0});
    CHECK_THROWS(odds_ratio_top_bottom(assign, roster));
}
