#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcbe/datasets.hpp"
#include "mcbe/models.hpp"

namespace mcbe {

struct EvalReport {
    // regression metrics (valid when !classification)
    double task_mae = 0.0;
    double task_mse = 0.0;
    // classification metrics
    double error_rate = 0.0;
    double accuracy = 0.0;
    bool classification = false;

    double concept_mae = 0.0;
    double concept_accuracy = 0.0;  // binary concepts only

    std::vector<double> expert_usage;  // argmax selection frequencies, sums to 1
    ComplexityProfile complexity;      // summed across all expert trees
    bool complexity_approximate = false;  // true when a Dense expert was unrolled
};

EvalReport evaluate_model(const MCBEModel& model, const ConceptDataset& ds);
nlohmann::ordered_json report_to_json(const EvalReport& report);

struct InterventionCurve {
    std::vector<std::pair<double, double>> points;  // (p_int, task metric)
    std::uint64_t seed = 0;
};

InterventionCurve intervention_curve(const MCBEModel& model, const ConceptDataset& ds,
                                     const std::vector<double>& p_list,
                                     std::uint64_t seed);

struct ParetoPoint {
    double complexity = 0.0;
    double error = 0.0;
    bool operator==(const ParetoPoint&) const = default;
};

/// Non-dominated subset, sorted by complexity.
std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points);

/// Maximum perpendicular distance to the chord between the front's extremes;
/// fronts of size <= 2 fall back to the lowest-error point, ties to lower
/// complexity.
ParetoPoint knee_point(const std::vector<ParetoPoint>& front);

struct TedReport {
    std::vector<int> assignment;  // expert index -> ground-truth index, -1 = unmatched
    std::vector<int> pair_ted;    // cost per assignment slot
    double mean_ted = 0.0;
};

/// Canonicalizes expert and ground-truth trees, then reports the
/// minimum-total-cost one-to-one assignment; unbalanced sides are padded with
/// an empty tree whose distance to any tree is that tree's node count.
TedReport ted_report(const MCBEModel& model, const std::vector<ExprTree>& ground_truth);

/// Linear expert rendered as its expression tree w1*c1 + ... + b, frozen-zero
/// terms omitted.
ExprTree linear_expert_tree(const Expert& expert, const std::vector<std::string>& names,
                            int output_row = 0);

/// Computation-graph node count of a Dense expert unrolled into per-unit
/// expressions — the approximate complexity used for Pareto reporting.
int dense_unrolled_node_count(const DenseNet& net);

/// Sup error of the best piecewise linear fit with `cells` pieces (free
/// knots, minimax line per piece); oracle for the approximation-decay checks.
double piecewise_fit_sup_error(const std::vector<double>& xs,
                               const std::vector<double>& ys, int cells);

}  // namespace mcbe
