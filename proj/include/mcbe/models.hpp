#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcbe/exprtree.hpp"
#include "mcbe/nn.hpp"

namespace mcbe {

enum class ConceptKind : std::uint8_t { Binary, Continuous };
enum class TaskKind : std::uint8_t { Regression, Classification };
enum class ExpertKind : std::uint8_t { Linear, Dense, Symbolic, Prior };
enum class SelectMode : std::uint8_t { Soft, Gumbel, Argmax };

struct ConceptEncoder {
    DenseNet net;  // features -> k concepts; Sigmoid output for binary concepts
    ConceptKind kind = ConceptKind::Continuous;
    double binary_threshold = 0.5;
};

struct Selector {
    DenseNet net;  // features -> M logits
};

/// One expert of the mixture. Exactly the fields of the tagged variant are
/// meaningful; `kind` selects them.
struct Expert {
    ExpertKind kind = ExpertKind::Linear;

    // Linear: W row-major (outputs x k), frozen entries pinned at zero.
    std::vector<double> W;
    std::vector<double> b;
    std::vector<std::uint8_t> frozen;
    int in_width = 0;
    int out_width = 0;

    // Dense
    DenseNet net;

    // Symbolic / Prior: one tree per output dimension, variables index-bound.
    std::vector<ExprTree> trees;

    static Expert linear(int k, int outputs, std::mt19937_64& rng);
    static Expert dense(const std::vector<int>& sizes, std::mt19937_64& rng);
    static Expert symbolic(std::vector<ExprTree> trees,
                           const std::vector<std::string>& concept_names);
    static Expert prior(std::vector<ExprTree> trees,
                        const std::vector<std::string>& concept_names);

    int output_width(int k) const;
};

struct MCBEModel {
    ConceptEncoder encoder;
    Selector selector;
    std::vector<Expert> experts;
    TaskKind task_kind = TaskKind::Regression;
    std::vector<std::string> concept_names;
    std::uint64_t seed = 0;  // RNG lineage recorded at construction

    int n_concepts() const { return static_cast<int>(concept_names.size()); }
    int n_experts() const { return static_cast<int>(experts.size()); }
    int feature_width() const { return encoder.net.input_width(); }
    int output_width() const { return experts.front().output_width(n_concepts()); }
};

std::vector<double> encode_concepts(const MCBEModel& model, const std::vector<double>& x,
                                    bool hard);

/// Probability vector over experts. Gumbel mode draws standard Gumbel noise
/// from the given seed; argmax mode ignores temperature (ties to lowest index).
std::vector<double> select_weights(const MCBEModel& model, const std::vector<double>& x,
                                   double temperature, SelectMode mode,
                                   std::uint64_t seed = 0);

std::vector<double> expert_output(const Expert& expert, const std::vector<double>& c);

struct Prediction {
    std::vector<double> c_hat;
    std::vector<double> weights;
    std::vector<std::vector<double>> expert_outputs;
    std::vector<double> y;  // regression: size 1; classification: class distribution
    int label = -1;         // classification only
};

Prediction predict(const MCBEModel& model, const std::vector<double>& x, SelectMode mode,
                   double temperature = 1.0, std::uint64_t seed = 0,
                   bool hard_concepts = true);

nlohmann::ordered_json checkpoint_to_json(const MCBEModel& model);
MCBEModel checkpoint_from_json(const nlohmann::ordered_json& j);
void save_checkpoint(const MCBEModel& model, const std::string& path);
MCBEModel load_checkpoint(const std::string& path);

}  // namespace mcbe
