#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcbe/errors.hpp"
#include "mcbe/exprtree.hpp"

namespace mcbe {

struct ConceptDataset {
    std::vector<std::vector<double>> X;  // n x d features
    std::vector<std::vector<double>> C;  // n x k concepts
    std::vector<double> y;               // real target or class index
    std::vector<int> mech;               // latent mechanism ids; empty if unknown
    std::vector<std::string> concept_names;
    bool binary_concepts = false;
    bool classification = false;

    int size() const { return static_cast<int>(X.size()); }
    int feature_dim() const { return X.empty() ? 0 : static_cast<int>(X[0].size()); }
    int concept_dim() const { return static_cast<int>(concept_names.size()); }
};

struct GeneratorSpec {
    std::string family;  // pendulum | dsprites_exp | mnist_arith | mawps_mech | piecewise_poly
    int n = 1000;
    std::uint64_t seed = 0;
    int feature_dim = 16;      // d; ignored by piecewise_poly
    double feature_noise = 0.0;  // sigma_x
};

/// Ground-truth mechanism trees for a family, index-bound to its concept
/// names. One tree per mechanism id.
std::vector<ExprTree> ground_truth_mechanisms(const std::string& family);
std::vector<std::string> family_concept_names(const std::string& family);

ConceptDataset generate(const GeneratorSpec& spec);

void save_csv(const ConceptDataset& ds, const std::string& path);

struct CsvSchema {
    std::vector<std::string> feature_cols;
    std::vector<std::string> concept_cols;
    std::string target_col;
    std::string mech_col;  // optional, empty = absent
};

ConceptDataset load_csv(const std::string& path, const CsvSchema& schema);

struct SplitDataset {
    ConceptDataset train, val, test;
};

SplitDataset split(const ConceptDataset& ds, double f_train, double f_val, double f_test,
                   std::uint64_t seed);

ConceptDataset take_rows(const ConceptDataset& ds, const std::vector<int>& rows);

}  // namespace mcbe
