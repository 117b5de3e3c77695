#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "mcbe/datasets.hpp"

using namespace mcbe;

namespace {

constexpr double kPi = 3.141592653589793;

// Dense Gaussian elimination with partial pivoting, test-local oracle.
std::vector<double> solve(std::vector<std::vector<double>> A, std::vector<double> b) {
    int n = static_cast<int>(A.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        std::swap(A[col], A[piv]);
        std::swap(b[col], b[piv]);
        for (int r = col + 1; r < n; ++r) {
            double f = A[r][col] / A[col][col];
            for (int j = col; j < n; ++j) A[r][j] -= f * A[col][j];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int r = n - 1; r >= 0; --r) {
        double v = b[r];
        for (int j = r + 1; j < n; ++j) v -= A[r][j] * x[j];
        x[r] = v / A[r][r];
    }
    return x;
}

}  // namespace

TEST_CASE("family metadata") {
    CHECK(family_concept_names("pendulum") == std::vector<std::string>{"theta", "phi"});
    CHECK(family_concept_names("mawps_mech") ==
          std::vector<std::string>{"N00", "N01", "N02"});
    CHECK(ground_truth_mechanisms("pendulum").size() == 1);
    CHECK(ground_truth_mechanisms("mnist_arith").size() == 4);
    CHECK(ground_truth_mechanisms("mawps_mech").size() == 4);
    CHECK_THROWS_AS(family_concept_names("nope"), InvalidSpec);

    auto pend = ground_truth_mechanisms("pendulum");
    double c[2] = {kPi / 2.0, 1.0};
    CHECK(evaluate_indexed(pend[0], c, 2) == doctest::Approx(18.0));
    auto mawps = ground_truth_mechanisms("mawps_mech");
    double m[3] = {2.0, 7.0, 3.0};
    CHECK(evaluate_indexed(mawps[0], m, 3) == doctest::Approx(8.0));    // 2*(7-3)
    CHECK(evaluate_indexed(mawps[1], m, 3) == doctest::Approx(20.0));   // 2*(7+3)
    CHECK(evaluate_indexed(mawps[2], m, 3) == doctest::Approx(27.0));   // 3*(2+7)
    CHECK(evaluate_indexed(mawps[3], m, 3) == doctest::Approx(-15.0));  // 3*(2-7)
}

TEST_CASE("generate: concept ranges and exact targets") {
    SUBCASE("pendulum") {
        auto ds = generate({"pendulum", 2000, 7, 16, 0.1});
        CHECK(ds.size() == 2000);
        CHECK(ds.feature_dim() == 16);
        CHECK(ds.concept_dim() == 2);
        for (int i = 0; i < ds.size(); ++i) {
            CHECK(ds.C[i][0] >= -200.0 * kPi / 180.0);
            CHECK(ds.C[i][0] <= 200.0 * kPi / 180.0);
            CHECK(ds.C[i][1] >= 60.0 * kPi / 180.0);
            CHECK(ds.C[i][1] <= 140.0 * kPi / 180.0);
            CHECK(ds.y[i] ==
                  doctest::Approx(8.0 * std::sin(ds.C[i][0]) + 10.0).epsilon(1e-12));
            CHECK(ds.mech[i] == 0);
        }
    }
    SUBCASE("mnist_arith never divides by zero") {
        auto ds = generate({"mnist_arith", 5000, 11, 16, 0.0});
        auto mechs = ground_truth_mechanisms("mnist_arith");
        for (int i = 0; i < ds.size(); ++i) {
            if (ds.mech[i] == 1) CHECK(ds.C[i][1] >= 1.0);
            CHECK(ds.y[i] == evaluate_indexed(mechs[ds.mech[i]], ds.C[i].data(), 2));
        }
    }
    SUBCASE("mawps mechanisms roughly uniform") {
        auto ds = generate({"mawps_mech", 8000, 3, 16, 0.0});
        std::vector<int> counts(4, 0);
        for (int m : ds.mech) counts[m]++;
        // binomial(8000, 1/4): sd ~= 38.7, allow 4 sigma
        for (int m = 0; m < 4; ++m) CHECK(std::abs(counts[m] - 2000) < 155);
    }
    SUBCASE("piecewise_poly is raw x") {
        auto ds = generate({"piecewise_poly", 500, 1, 16, 0.0});
        CHECK(ds.feature_dim() == 1);
        for (int i = 0; i < ds.size(); ++i) {
            CHECK(ds.X[i][0] == ds.C[i][0]);
            CHECK(ds.y[i] == doctest::Approx(std::sin(2.0 * kPi * ds.X[i][0])));
        }
    }
    SUBCASE("spec validation") {
        CHECK_THROWS_AS(generate({"pendulum", 0, 1, 16, 0.0}), InvalidSpec);
        CHECK_THROWS_AS(generate({"pendulum", 10, 1, 16, -0.5}), InvalidSpec);
        CHECK_THROWS_AS(generate({"mawps_mech", 10, 1, 4, 0.0}), InvalidSpec);
    }
}

TEST_CASE("generate: noiseless features are linearly decodable") {
    // X = A [c; onehot] exactly when sigma_x = 0, so least squares on (X -> c)
    // recovers the concepts to machine precision.
    auto ds = generate({"pendulum", 400, 21, 16, 0.0});
    for (int j = 0; j < 2; ++j) {
        std::vector<double> target;
        for (int i = 0; i < ds.size(); ++i) target.push_back(ds.C[i][j]);
        // d=16 > e=2, so restrict to the first 2 columns plus a bias via
        // full-rank subselect: use all 16 columns, normal equations may be
        // singular; regularize lightly.
        int d = ds.feature_dim();
        std::vector<std::vector<double>> XtX(d, std::vector<double>(d, 0.0));
        std::vector<double> Xt(d, 0.0);
        for (int i = 0; i < ds.size(); ++i)
            for (int a = 0; a < d; ++a) {
                Xt[a] += ds.X[i][a] * target[i];
                for (int b = 0; b < d; ++b) XtX[a][b] += ds.X[i][a] * ds.X[i][b];
            }
        for (int a = 0; a < d; ++a) XtX[a][a] += 1e-9;
        auto beta = solve(XtX, Xt);
        double max_err = 0.0;
        for (int i = 0; i < ds.size(); ++i) {
            double pred = 0.0;
            for (int a = 0; a < d; ++a) pred += beta[a] * ds.X[i][a];
            max_err = std::max(max_err, std::abs(pred - target[i]));
        }
        CHECK(max_err < 1e-6);
    }
}

TEST_CASE("generate is deterministic in the seed") {
    GeneratorSpec spec{"mawps_mech", 300, 42, 16, 0.05};
    auto a = generate(spec);
    auto b = generate(spec);
    CHECK(a.X == b.X);
    CHECK(a.C == b.C);
    CHECK(a.y == b.y);
    CHECK(a.mech == b.mech);
    spec.seed = 43;
    auto c = generate(spec);
    CHECK(a.X != c.X);
}

TEST_CASE("csv round trip") {
    auto ds = generate({"mnist_arith", 120, 5, 8, 0.0});
    const std::string path = "/tmp/mcbe_test_ds.csv";
    save_csv(ds, path);

    CsvSchema schema;
    for (int j = 0; j < 8; ++j) schema.feature_cols.push_back("x" + std::to_string(j));
    schema.concept_cols = {"first", "second"};
    schema.target_col = "y";
    schema.mech_col = "mech";
    auto back = load_csv(path, schema);
    CHECK(back.X == ds.X);
    CHECK(back.C == ds.C);
    CHECK(back.y == ds.y);
    CHECK(back.mech == ds.mech);
    CHECK(back.concept_names == ds.concept_names);

    SUBCASE("byte-identical rewrite") {
        save_csv(back, "/tmp/mcbe_test_ds2.csv");
        std::ifstream f1(path), f2("/tmp/mcbe_test_ds2.csv");
        std::string s1((std::istreambuf_iterator<char>(f1)), {});
        std::string s2((std::istreambuf_iterator<char>(f2)), {});
        CHECK(s1 == s2);
    }
    SUBCASE("missing column names the column") {
        schema.target_col = "label";
        CHECK_THROWS_WITH_AS(load_csv(path, schema),
                             doctest::Contains("missing column 'label'"),
                             SchemaMismatch);
    }
    SUBCASE("non-numeric cell names column and row") {
        std::ofstream out("/tmp/mcbe_test_bad.csv");
        out << "x0,first,second,y\n1.0,2.0,3.0,4.0\n1.0,oops,3.0,4.0\n";
        out.close();
        CsvSchema s2{{"x0"}, {"first", "second"}, "y", ""};
        CHECK_THROWS_WITH_AS(load_csv("/tmp/mcbe_test_bad.csv", s2),
                             doctest::Contains("column 'first' at data row 1"),
                             SchemaMismatch);
    }
    SUBCASE("empty file") {
        std::ofstream("/tmp/mcbe_test_empty.csv");
        CHECK_THROWS_AS(load_csv("/tmp/mcbe_test_empty.csv", schema), EmptyFile);
        std::ofstream out("/tmp/mcbe_test_headeronly.csv");
        out << "x0,first,second,y\n";
        out.close();
        CsvSchema s3{{"x0"}, {"first", "second"}, "y", ""};
        CHECK_THROWS_AS(load_csv("/tmp/mcbe_test_headeronly.csv", s3), EmptyFile);
    }
    std::remove("/tmp/mcbe_test_ds.csv");
}

TEST_CASE("split") {
    auto ds = generate({"pendulum", 1000, 9, 16, 0.0});
    auto parts = split(ds, 0.7, 0.1, 0.2, 123);
    CHECK(parts.train.size() == 700);
    CHECK(parts.val.size() == 100);
    CHECK(parts.test.size() == 200);

    SUBCASE("deterministic") {
        auto again = split(ds, 0.7, 0.1, 0.2, 123);
        CHECK(again.train.X == parts.train.X);
        CHECK(again.test.y == parts.test.y);
        auto other = split(ds, 0.7, 0.1, 0.2, 124);
        CHECK(other.train.X != parts.train.X);
    }
    SUBCASE("disjoint exhaustive partition") {
        // features are continuous, so rows are identifiable by their first cell
        std::multiset<double> seen;
        for (const auto* part : {&parts.train, &parts.val, &parts.test})
            for (const auto& row : part->X) seen.insert(row[0]);
        std::multiset<double> all;
        for (const auto& row : ds.X) all.insert(row[0]);
        CHECK(seen == all);
    }
    SUBCASE("bad fractions") {
        CHECK_THROWS_AS(split(ds, 0.8, 0.1, 0.2, 1), BadFractions);
        CHECK_THROWS_AS(split(ds, 0.9, 0.1, 0.0, 1), BadFractions);
    }
}

TEST_CASE("take_rows preserves alignment") {
    auto ds = generate({"mawps_mech", 50, 2, 16, 0.0});
    auto sub = take_rows(ds, {4, 9, 9, 0});
    CHECK(sub.size() == 4);
    CHECK(sub.X[0] == ds.X[4]);
    CHECK(sub.y[1] == ds.y[9]);
    CHECK(sub.y[2] == ds.y[9]);
    CHECK(sub.mech[3] == ds.mech[0]);
    CHECK(sub.concept_names == ds.concept_names);
}
