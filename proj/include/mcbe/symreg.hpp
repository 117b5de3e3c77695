#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mcbe/exprtree.hpp"

namespace mcbe {

struct SRConfig {
    int n_populations = 8;
    int population_size = 40;
    int n_iterations = 30;
    int cycles_per_iteration = 50;  // steady-state updates between migrations
    Vocabulary vocab = Vocabulary::named("complete");
    int max_complexity = 25;  // node_count cap
    double parsimony = 1e-3;  // fitness penalty per node
    int tournament_size = 5;
    double mutation_rate = 0.5;
    double crossover_rate = 0.5;
    int constant_opt_steps = 100;
    int max_samples = 1024;  // evolution runs on a seeded subsample this large
    int workers = 1;
    std::uint64_t seed = 0;

    /// Full-scale search: 40 populations of 60, 100 iterations, 380 cycles.
    static SRConfig full_preset();
};

struct ParetoEntry {
    ExprTree tree;
    double loss = std::numeric_limits<double>::infinity();
    int complexity = 0;
};

/// Non-dominated (loss, complexity) candidates, sorted by complexity, at most
/// one entry per complexity value.
struct ParetoArchive {
    std::vector<ParetoEntry> entries;

    /// Keeps the archive non-dominated; returns true if the entry was kept.
    bool insert(ParetoEntry entry);
    bool empty() const { return entries.empty(); }
};

/// Mean squared error of `tree` on index-bound concept rows; +inf when any
/// sample evaluates non-finite or hits a domain guard.
double sr_loss(const ExprTree& tree, const std::vector<std::vector<double>>& C,
               const std::vector<double>& y);

ParetoArchive run_sr(const std::vector<std::vector<double>>& C,
                     const std::vector<double>& y,
                     const std::vector<std::string>& concept_names, const SRConfig& cfg);

/// Gradient descent with backtracking on the tree's trainable parameters;
/// structure unchanged, resulting loss never above the input loss.
ExprTree optimize_constants(const ExprTree& tree,
                            const std::vector<std::vector<double>>& C,
                            const std::vector<double>& y, int steps);

enum class SelectRule : std::uint8_t { Knee, MinLoss, Bound };

const ParetoEntry& select_expression(const ParetoArchive& archive, SelectRule rule,
                                     double complexity_bound = 0.0);

/// Score-based pick used by the distillation pipeline: among entries whose
/// loss is within 1.5x of the archive minimum, maximize the drop in log-loss
/// per unit of added complexity relative to the previous archive entry.
const ParetoEntry& select_by_best_score(const ParetoArchive& archive);

void save_archive_csv(const ParetoArchive& archive, const std::string& path);
ParetoArchive load_archive_csv(const std::string& path, const Vocabulary& vocab,
                               const std::vector<std::string>& concept_names);

}  // namespace mcbe
