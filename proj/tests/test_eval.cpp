#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mcbe/eval.hpp"
#include "mcbe/training.hpp"

using namespace mcbe;

namespace {

constexpr double kTwoPi = 6.283185307179586;

// Identity-feature pendulum-style data with a perfect prior expert.
struct Fixture {
    MCBEModel model;
    ConceptDataset ds;
};

Fixture perfect_prior_fixture(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> th(-3.4, 3.4);
    std::uniform_real_distribution<double> ph(1.0, 2.4);

    Fixture f;
    f.ds.concept_names = {"theta", "phi"};
    for (int i = 0; i < n; ++i) {
        double t = th(rng), p = ph(rng);
        f.ds.X.push_back({t, p});
        f.ds.C.push_back({t, p});
        f.ds.y.push_back(8.0 * std::sin(t) + 10.0);
    }

    std::mt19937_64 mrng(seed + 1);
    f.model.concept_names = f.ds.concept_names;
    f.model.encoder.net = DenseNet::make({2, 2}, OutputTransform::Identity, mrng);
    f.model.encoder.net.W[0] = {1.0, 0.0, 0.0, 1.0};
    f.model.encoder.net.b[0] = {0.0, 0.0};
    f.model.selector.net = DenseNet::make({2, 1}, OutputTransform::Identity, mrng);
    auto gt = ground_truth_mechanisms("pendulum");
    f.model.experts.push_back(Expert::prior({gt[0]}, f.model.concept_names));
    return f;
}

ExprTree parse_named(const std::string& text, const std::vector<std::string>& names) {
    auto vocab = Vocabulary::named("complete");
    ExprTree t = parse_expression(text, vocab, names);
    bind_variables(t, names);
    return t;
}

}  // namespace

TEST_CASE("evaluate_model on a perfect prior model") {
    Fixture f = perfect_prior_fixture(300, 3);
    EvalReport rep = evaluate_model(f.model, f.ds);
    CHECK(rep.task_mae == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.task_mse == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.concept_mae == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(!rep.classification);
    REQUIRE(rep.expert_usage.size() == 1);
    CHECK(rep.expert_usage[0] == doctest::Approx(1.0));
    // 8.0*sin(theta) + 10.0
    CHECK(rep.complexity.node_count == 6);
    CHECK(rep.complexity.depth == 4);
    CHECK(rep.complexity.expression_complexity == 15);
    CHECK(rep.complexity.total_vars == 1);
    CHECK(rep.complexity.total_ops == 3);
    CHECK(rep.complexity.weighted_node_count == 7);
    CHECK(!rep.complexity_approximate);

    SUBCASE("json report carries the metrics") {
        auto j = report_to_json(rep);
        CHECK(j["task_mae"] == rep.task_mae);
        CHECK(j["complexity"]["node_count"] == 6);
        CHECK(j["complexity"]["approximate"] == false);
    }
}

TEST_CASE("linear and dense complexity reporting") {
    std::mt19937_64 rng(5);
    Fixture f = perfect_prior_fixture(10, 7);
    SUBCASE("full linear expert with k=2 counts 8 nodes") {
        Expert lin = Expert::linear(2, 1, rng);
        lin.W = {1.5, -2.0};
        lin.b = {0.25};
        f.model.experts[0] = lin;
        EvalReport rep = evaluate_model(f.model, f.ds);
        CHECK(rep.complexity.node_count == 8);
        CHECK(rep.complexity.depth == 3);
        CHECK(rep.complexity.total_vars == 2);
        CHECK(rep.complexity.total_ops == 3);
        CHECK(rep.complexity.weighted_node_count == 8);
    }
    SUBCASE("hardened-to-zero weights leave the count") {
        Expert lin = Expert::linear(2, 1, rng);
        lin.W = {1.5, 0.0};
        lin.frozen = {0, 1};
        lin.b = {0.25};
        f.model.experts[0] = lin;
        EvalReport rep = evaluate_model(f.model, f.ds);
        CHECK(rep.complexity.node_count == 5);  // 1.5*theta + 0.25
        ExprTree t = linear_expert_tree(lin, f.model.concept_names);
        CHECK(format_expression(t) == "1.5*theta + 0.25");
    }
    SUBCASE("dense experts are approximate") {
        f.model.experts[0] = Expert::dense({2, 3, 1}, rng);
        EvalReport rep = evaluate_model(f.model, f.ds);
        CHECK(rep.complexity_approximate);
        // hidden: 3 units of 4*2+2+1, output: 1 unit of 4*3+2
        CHECK(dense_unrolled_node_count(f.model.experts[0].net) == 3 * 11 + 14);
        CHECK(rep.complexity.node_count == 47);
    }
}

TEST_CASE("intervention curve") {
    Fixture f = perfect_prior_fixture(200, 11);
    // corrupt the encoder so un-intervened concepts are wrong
    f.model.encoder.net.W[0] = {0.6, 0.0, 0.0, 1.0};

    auto curve = intervention_curve(f.model, f.ds, {0.0, 0.5, 1.0}, 17);
    REQUIRE(curve.points.size() == 3);
    CHECK(curve.points[0].first == 0.0);
    CHECK(curve.points[2].first == 1.0);
    // p=1 replaces every concept: the prior expert becomes exact
    CHECK(curve.points[2].second == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(curve.points[2].second <= curve.points[0].second);
    CHECK(curve.points[1].second <= curve.points[0].second + 1e-12);

    SUBCASE("p=0 equals plain evaluation") {
        EvalReport rep = evaluate_model(f.model, f.ds);
        CHECK(curve.points[0].second == doctest::Approx(rep.task_mae).epsilon(1e-12));
    }
    SUBCASE("deterministic in the seed") {
        auto again = intervention_curve(f.model, f.ds, {0.0, 0.5, 1.0}, 17);
        CHECK(again.points == curve.points);
    }
    SUBCASE("p values must be strictly increasing") {
        CHECK_THROWS_AS(intervention_curve(f.model, f.ds, {0.5, 0.5}, 1), ConfigError);
        CHECK_THROWS_AS(intervention_curve(f.model, f.ds, {0.5, 0.2}, 1), ConfigError);
    }
}

TEST_CASE("pareto_front") {
    SUBCASE("reference example") {
        auto front = pareto_front({{3.0, 2.0}, {1.0, 5.0}, {2.0, 5.0}, {4.0, 2.0}});
        REQUIRE(front.size() == 2);
        CHECK(front[0] == ParetoPoint{1.0, 5.0});
        CHECK(front[1] == ParetoPoint{3.0, 2.0});
    }
    SUBCASE("duplicates of a front point are kept") {
        auto front = pareto_front({{1.0, 1.0}, {1.0, 1.0}});
        CHECK(front.size() == 2);
    }
    SUBCASE("non-finite input rejected") {
        CHECK_THROWS_AS(
            pareto_front({{1.0, std::numeric_limits<double>::quiet_NaN()}}),
            ConfigError);
    }
    SUBCASE("1000 random points match the quadratic oracle") {
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<ParetoPoint> pts;
        for (int i = 0; i < 1000; ++i)
            pts.push_back({std::floor(unit(rng) * 20.0), std::floor(unit(rng) * 20.0)});
        auto front = pareto_front(pts);
        auto dominates = [](const ParetoPoint& a, const ParetoPoint& b) {
            return a.complexity <= b.complexity && a.error <= b.error &&
                   (a.complexity < b.complexity || a.error < b.error);
        };
        int oracle = 0;
        for (const auto& p : pts) {
            bool dom = false;
            for (const auto& q : pts)
                if (dominates(q, p)) dom = true;
            if (!dom) ++oracle;
        }
        CHECK(static_cast<int>(front.size()) == oracle);
        for (const auto& p : front) {
            for (const auto& q : pts) CHECK(!dominates(q, p));
        }
        for (std::size_t i = 1; i < front.size(); ++i) {
            CHECK(front[i].complexity >= front[i - 1].complexity);
            CHECK(front[i].error <= front[i - 1].error);
        }
    }
}

TEST_CASE("knee_point") {
    CHECK(knee_point({{0.0, 10.0}, {1.0, 1.0}, {10.0, 0.0}}) == ParetoPoint{1.0, 1.0});
    CHECK(knee_point({{1.0, 10.0}, {3.0, 1.0}, {20.0, 0.9}}) == ParetoPoint{3.0, 1.0});
    SUBCASE("small fronts fall back to lowest error") {
        CHECK(knee_point({{2.0, 3.0}}) == ParetoPoint{2.0, 3.0});
        CHECK(knee_point({{1.0, 5.0}, {7.0, 2.0}}) == ParetoPoint{7.0, 2.0});
    }
    SUBCASE("collinear front keeps the first point") {
        CHECK(knee_point({{0.0, 4.0}, {1.0, 3.0}, {2.0, 2.0}, {3.0, 1.0}}) ==
              ParetoPoint{0.0, 4.0});
    }
    CHECK_THROWS_AS(knee_point({}), EmptyArchive);
}

TEST_CASE("ted_report") {
    std::vector<std::string> names = {"a", "b"};
    std::vector<ExprTree> gt = {parse_named("a - b", names), parse_named("a + b", names)};

    SUBCASE("crossed assignment reaches zero") {
        Fixture f = perfect_prior_fixture(5, 1);
        f.model.concept_names = names;
        f.model.experts.clear();
        f.model.experts.push_back(Expert::prior({parse_named("a + b", names)}, names));
        f.model.experts.push_back(Expert::prior({parse_named("a - b", names)}, names));
        auto rep = ted_report(f.model, gt);
        CHECK(rep.mean_ted == 0.0);
        CHECK(rep.assignment == std::vector<int>{1, 0});
        CHECK(rep.pair_ted == std::vector<int>{0, 0});
    }
    SUBCASE("fitted constants do not count as edits") {
        Fixture f = perfect_prior_fixture(5, 1);
        f.model.experts.clear();
        f.model.experts.push_back(Expert::prior(
            {parse_named("7.93*sin(theta) + 10.11", f.model.concept_names)},
            f.model.concept_names));
        auto rep = ted_report(f.model, ground_truth_mechanisms("pendulum"));
        CHECK(rep.mean_ted == 0.0);
    }
    SUBCASE("unmatched ground truth pads with whole-tree cost") {
        Fixture f = perfect_prior_fixture(5, 1);
        f.model.concept_names = names;
        f.model.experts.clear();
        f.model.experts.push_back(Expert::prior({parse_named("a - b", names)}, names));
        auto rep = ted_report(f.model, gt);
        // one exact match plus an unmatched 3-node ground-truth tree
        CHECK(rep.mean_ted == doctest::Approx(1.5));
        CHECK(rep.assignment.size() == 2);
        CHECK(rep.assignment[1] == -1);
    }
    SUBCASE("dense experts are rejected") {
        std::mt19937_64 rng(2);
        Fixture f = perfect_prior_fixture(5, 1);
        f.model.experts[0] = Expert::dense({2, 3, 1}, rng);
        CHECK_THROWS_AS(ted_report(f.model, gt), ConfigError);
    }
}

TEST_CASE("piecewise_fit_sup_error decays at the squared rate") {
    std::vector<double> xs, ys;
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        double x = (i + 0.5) / n;
        xs.push_back(x);
        ys.push_back(std::sin(kTwoPi * x));
    }
    double prev = piecewise_fit_sup_error(xs, ys, 2);
    for (int cells : {4, 8, 16, 32}) {
        double cur = piecewise_fit_sup_error(xs, ys, cells);
        CHECK(cur < prev);
        CHECK(prev / cur >= 3.5);  // doubling the pieces quarters the sup error
        prev = cur;
    }
    CHECK_THROWS_AS(piecewise_fit_sup_error(xs, ys, 0), ConfigError);
    CHECK_THROWS_AS(piecewise_fit_sup_error({}, {}, 2), InsufficientData);
}
