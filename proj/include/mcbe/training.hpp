#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcbe/datasets.hpp"
#include "mcbe/models.hpp"
#include "mcbe/symreg.hpp"

namespace mcbe {

struct TrainConfig {
    double lambda_c = 1.0;
    double lambda_y = 0.1;
    double learning_rate = 0.01;
    int max_epochs = 600;
    int plateau_patience = 25;
    double plateau_factor = 0.5;
    int early_stop_patience = 50;
    double l1_coeff = 1e-5;
    double hard_threshold = 1e-6;
    double tau_start = 2.0;
    double tau_end = 0.05;
    double finetune_lr_multiplier = 5.0;
    int batch_size = 128;
    int hidden = 64;  // hidden width for encoder/selector/dense experts
    std::uint64_t seed = 0;
};

struct TrainHistory {
    struct Epoch {
        int epoch;
        double train_loss, val_loss, concept_loss, task_loss, temperature, lr;
    };
    std::vector<Epoch> epochs;
    std::string stop_reason;
};

void save_history_csv(const TrainHistory& history, const std::string& path);

/// Cosine decay from tau_start to tau_end over the stage.
double temperature_at(int epoch, int total_epochs, const TrainConfig& cfg);

struct TrainScope {
    bool encoder = true;
    bool selector = true;
    bool experts = true;
};

struct LossBreakdown {
    double total = 0.0;
    double concept_loss = 0.0;
    double task_loss = 0.0;
    double l1 = 0.0;
};

/// Zero-parameter copy of a model, used as a gradient accumulator whose
/// storage layout mirrors the model's.
MCBEModel zero_clone(const MCBEModel& model);

/// Disjoint-training objective over the given rows: lambda_c * concept loss
/// (encoder on X vs C) + lambda_y * task loss (selector + experts on
/// ground-truth concepts) + L1 on Linear/Dense expert weights. With `gumbel`
/// the selector weights are Gumbel-Softmax samples seeded per row; otherwise
/// plain softmax at `temperature`. If `grad_out` is non-null it receives the
/// accumulated exact gradients.
LossBreakdown total_loss(const MCBEModel& model, const ConceptDataset& data,
                         const std::vector<int>& rows, const TrainConfig& cfg,
                         double temperature, std::uint64_t seed, bool gumbel,
                         MCBEModel* grad_out = nullptr);

struct StageOpts {
    TrainScope scope;
    bool anneal_gumbel = true;   // Gumbel-Softmax sampling with cosine-annealed tau
    double lr_override = -1.0;   // <0 uses cfg.learning_rate
};

/// Mini-batch AdamW with ReduceLROnPlateau and early stopping; returns the
/// best-validation snapshot.
std::pair<MCBEModel, TrainHistory> train_stage(MCBEModel model,
                                               const ConceptDataset& train,
                                               const ConceptDataset& val,
                                               const TrainConfig& cfg,
                                               const StageOpts& opts);

/// |w| < threshold -> w := 0 and frozen. Idempotent.
MCBEModel harden_linear(MCBEModel model, double threshold);

/// Closed-form least-squares warm start: writes the exact linear map X -> C
/// into the encoder using paired +/- hidden units (lrelu(z) - lrelu(-z) is
/// linear in z). Requires a continuous-concept {d, h, k} encoder with
/// h >= 2k; returns the model unchanged otherwise.
MCBEModel warm_start_encoder(MCBEModel model, const ConceptDataset& ds);

MCBEModel make_lin_model(const ConceptDataset& ds, int M, const TrainConfig& cfg);
MCBEModel make_mlp_model(const ConceptDataset& ds, int M, const TrainConfig& cfg);
MCBEModel make_prior_model(const ConceptDataset& ds,
                           const std::vector<std::vector<std::string>>& expert_exprs,
                           const TrainConfig& cfg);

struct LinFitResult {
    MCBEModel model;
    TrainHistory stage1, stage2;
};
LinFitResult fit_lin_mcbe(const SplitDataset& data, int M, const TrainConfig& cfg);

std::vector<ConceptDataset> partition_by_expert(const MCBEModel& model,
                                                const ConceptDataset& ds);

struct SymFitResult {
    MCBEModel model;
    MCBEModel stage1_model;  // Dense-placeholder model kept for adaptation
    std::vector<ParetoArchive> archives;
    std::vector<int> fallback_experts;  // experts left as Dense placeholders
    TrainHistory stage1, stage3;
};
SymFitResult fit_sym_mcbe(const SplitDataset& data, int M, const TrainConfig& cfg,
                          const SRConfig& sr_cfg, const Vocabulary& vocab);

struct AdaptResult {
    MCBEModel model;
    std::vector<ParetoArchive> archives;
    std::vector<int> fallback_experts;
    TrainHistory finetune;
};
/// Re-runs distillation stages (ii)-(iii) under a new vocabulary. The encoder
/// and selector are reused untouched; only symbolic numeric parameters train.
AdaptResult adapt_vocabulary(const MCBEModel& stage1_model, const SplitDataset& data,
                             const Vocabulary& vocab, const TrainConfig& cfg,
                             const SRConfig& sr_cfg);

}  // namespace mcbe
