#include "mcbe/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace mcbe {

namespace {

constexpr double kPi = 3.141592653589793;
constexpr double kTwoPi = 6.283185307179586;

ExprTree gt(const std::string& text, const std::vector<std::string>& names) {
    auto vocab = Vocabulary::named("complete");
    ExprTree t = parse_expression(text, vocab, names);
    bind_variables(t, names);
    return t;
}

}  // namespace

std::vector<std::string> family_concept_names(const std::string& family) {
    if (family == "pendulum") return {"theta", "phi"};
    if (family == "dsprites_exp") return {"x", "y", "u", "v"};
    if (family == "mnist_arith") return {"first", "second"};
    if (family == "mawps_mech") return {"N00", "N01", "N02"};
    if (family == "piecewise_poly") return {"x"};
    throw InvalidSpec("unknown dataset family: " + family);
}

std::vector<ExprTree> ground_truth_mechanisms(const std::string& family) {
    auto names = family_concept_names(family);
    if (family == "pendulum") return {gt("8.0*sin(theta) + 10.0", names)};
    if (family == "dsprites_exp")
        return {gt("exp(sin(" + format_number(kTwoPi) + "*x) + cos(" +
                       format_number(kTwoPi) + "*y))",
                   names)};
    if (family == "mnist_arith")
        return {gt("first*second", names), gt("first/second", names),
                gt("first + second", names), gt("first - second", names)};
    if (family == "mawps_mech")
        return {gt("N00*(N01 - N02)", names), gt("N00*(N01 + N02)", names),
                gt("N02*(N00 + N01)", names), gt("N02*(N00 - N01)", names)};
    if (family == "piecewise_poly")
        return {gt("sin(" + format_number(kTwoPi) + "*x)", names)};
    throw InvalidSpec("unknown dataset family: " + family);
}

ConceptDataset generate(const GeneratorSpec& spec) {
    if (spec.n <= 0) throw InvalidSpec("n must be positive");
    if (spec.feature_noise < 0.0) throw InvalidSpec("feature_noise must be >= 0");
    auto names = family_concept_names(spec.family);
    auto mechanisms = ground_truth_mechanisms(spec.family);
    int k = static_cast<int>(names.size());
    int n_mech = static_cast<int>(mechanisms.size());

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    ConceptDataset ds;
    ds.concept_names = names;

    if (spec.family == "piecewise_poly") {
        // 1-D data for the approximation-decay checks: X carries x directly.
        ds.X.reserve(spec.n);
        ds.C.reserve(spec.n);
        for (int i = 0; i < spec.n; ++i) {
            double x = unit(rng);
            ds.X.push_back({x});
            ds.C.push_back({x});
            ds.y.push_back(std::sin(kTwoPi * x));
            ds.mech.push_back(0);
        }
        return ds;
    }

    int d = spec.feature_dim;
    // Embedding width: concepts plus, for multi-mechanism families, a one-hot
    // of the mechanism id so that features determine the routing.
    int e = k + (n_mech > 1 ? n_mech : 0);
    if (d < e) throw InvalidSpec("feature_dim must be >= concept(+mechanism) width");
    std::vector<double> A(static_cast<std::size_t>(d) * e);
    for (auto& a : A) a = gauss(rng);

    ds.X.reserve(spec.n);
    ds.C.reserve(spec.n);
    for (int i = 0; i < spec.n; ++i) {
        int mech = n_mech > 1 ? static_cast<int>(rng() % n_mech) : 0;
        std::vector<double> c(k);
        if (spec.family == "pendulum") {
            c[0] = (unit(rng) * 400.0 - 200.0) * kPi / 180.0;
            c[1] = (unit(rng) * 80.0 + 60.0) * kPi / 180.0;
        } else if (spec.family == "dsprites_exp") {
            for (int j = 0; j < k; ++j) c[j] = unit(rng);
        } else if (spec.family == "mnist_arith") {
            c[0] = static_cast<double>(rng() % 10);
            c[1] = mech == 1 ? static_cast<double>(1 + rng() % 9)  // no division by zero
                             : static_cast<double>(rng() % 10);
        } else if (spec.family == "mawps_mech") {
            for (int j = 0; j < k; ++j) c[j] = unit(rng) * 10.0;
        }
        double y = evaluate_indexed(mechanisms[mech], c.data(), k);

        std::vector<double> emb(e, 0.0);
        for (int j = 0; j < k; ++j) emb[j] = c[j];
        if (n_mech > 1) emb[k + mech] = 1.0;
        std::vector<double> x(d);
        for (int r = 0; r < d; ++r) {
            double v = 0.0;
            const double* row = &A[static_cast<std::size_t>(r) * e];
            for (int j = 0; j < e; ++j) v += row[j] * emb[j];
            if (spec.feature_noise > 0.0) v += spec.feature_noise * gauss(rng);
            x[r] = v;
        }
        ds.X.push_back(std::move(x));
        ds.C.push_back(std::move(c));
        ds.y.push_back(y);
        ds.mech.push_back(mech);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// CSV io

void save_csv(const ConceptDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    int d = ds.feature_dim();
    for (int j = 0; j < d; ++j) out << "x" << j << ",";
    for (const auto& name : ds.concept_names) out << name << ",";
    out << "y";
    if (!ds.mech.empty()) out << ",mech";
    out << "\n";
    for (int i = 0; i < ds.size(); ++i) {
        for (int j = 0; j < d; ++j) out << format_number(ds.X[i][j]) << ",";
        for (std::size_t j = 0; j < ds.C[i].size(); ++j)
            out << format_number(ds.C[i][j]) << ",";
        out << format_number(ds.y[i]);
        if (!ds.mech.empty()) out << "," << ds.mech[i];
        out << "\n";
    }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

double parse_cell(const std::string& cell, const std::string& col, int row) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || p != cell.data() + cell.size())
        throw SchemaMismatch("non-numeric cell '" + cell + "' in column '" + col +
                             "' at data row " + std::to_string(row));
    return v;
}

}  // namespace

ConceptDataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw EmptyFile("empty file: " + path);
    std::vector<std::string> header = split_line(line);

    auto col_index = [&](const std::string& name) -> int {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw SchemaMismatch("missing column '" + name + "' in " + path);
        return static_cast<int>(it - header.begin());
    };

    std::vector<int> fidx, cidx;
    for (const auto& c : schema.feature_cols) fidx.push_back(col_index(c));
    for (const auto& c : schema.concept_cols) cidx.push_back(col_index(c));
    int yidx = col_index(schema.target_col);
    int midx = schema.mech_col.empty() ? -1 : col_index(schema.mech_col);

    ConceptDataset ds;
    ds.concept_names = schema.concept_cols;
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size())
            throw SchemaMismatch("row " + std::to_string(row) + " has " +
                                 std::to_string(cells.size()) + " cells, expected " +
                                 std::to_string(header.size()));
        std::vector<double> x, c;
        for (std::size_t j = 0; j < fidx.size(); ++j)
            x.push_back(parse_cell(cells[fidx[j]], schema.feature_cols[j], row));
        for (std::size_t j = 0; j < cidx.size(); ++j)
            c.push_back(parse_cell(cells[cidx[j]], schema.concept_cols[j], row));
        ds.X.push_back(std::move(x));
        ds.C.push_back(std::move(c));
        ds.y.push_back(parse_cell(cells[yidx], schema.target_col, row));
        if (midx >= 0)
            ds.mech.push_back(
                static_cast<int>(parse_cell(cells[midx], schema.mech_col, row)));
        ++row;
    }
    if (ds.size() == 0) throw EmptyFile("no data rows in " + path);
    return ds;
}

// ---------------------------------------------------------------------------
// Splitting

ConceptDataset take_rows(const ConceptDataset& ds, const std::vector<int>& rows) {
    ConceptDataset out;
    out.concept_names = ds.concept_names;
    out.binary_concepts = ds.binary_concepts;
    out.classification = ds.classification;
    for (int i : rows) {
        out.X.push_back(ds.X[i]);
        out.C.push_back(ds.C[i]);
        out.y.push_back(ds.y[i]);
        if (!ds.mech.empty()) out.mech.push_back(ds.mech[i]);
    }
    return out;
}

SplitDataset split(const ConceptDataset& ds, double f_train, double f_val, double f_test,
                   std::uint64_t seed) {
    if (f_train <= 0.0 || f_val <= 0.0 || f_test <= 0.0)
        throw BadFractions("split fractions must be positive");
    if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
        throw BadFractions("split fractions must sum to 1");
    int n = ds.size();
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    int n_train = static_cast<int>(std::floor(f_train * n + 1e-9));
    int n_val = static_cast<int>(std::floor(f_val * n + 1e-9));
    SplitDataset out;
    out.train = take_rows(ds, {idx.begin(), idx.begin() + n_train});
    out.val = take_rows(ds, {idx.begin() + n_train, idx.begin() + n_train + n_val});
    out.test = take_rows(ds, {idx.begin() + n_train + n_val, idx.end()});
    return out;
}

}  // namespace mcbe
