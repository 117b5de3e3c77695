#include "mcbe/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace mcbe {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct ParamRefs {
    std::vector<double*> params;
    std::vector<std::uint8_t> frozen;
    std::vector<std::uint8_t> decay;
};

void gather_net(DenseNet& net, ParamRefs& out) {
    for (int l = 0; l < net.n_layers(); ++l) {
        for (auto& w : net.W[l]) {
            out.params.push_back(&w);
            out.frozen.push_back(0);
            out.decay.push_back(1);
        }
        for (auto& b : net.b[l]) {
            out.params.push_back(&b);
            out.frozen.push_back(0);
            out.decay.push_back(0);
        }
    }
}

ParamRefs gather(MCBEModel& m, const TrainScope& scope) {
    ParamRefs out;
    if (scope.encoder) gather_net(m.encoder.net, out);
    if (scope.selector) gather_net(m.selector.net, out);
    if (scope.experts) {
        for (auto& e : m.experts) {
            switch (e.kind) {
                case ExpertKind::Linear:
                    for (std::size_t i = 0; i < e.W.size(); ++i) {
                        out.params.push_back(&e.W[i]);
                        out.frozen.push_back(e.frozen[i]);
                        out.decay.push_back(1);
                    }
                    for (auto& b : e.b) {
                        out.params.push_back(&b);
                        out.frozen.push_back(0);
                        out.decay.push_back(0);
                    }
                    break;
                case ExpertKind::Dense:
                    gather_net(e.net, out);
                    break;
                case ExpertKind::Symbolic:
                    // tree constants: no weight decay, they are physical values
                    for (auto& t : e.trees)
                        for (int id : trainable_parameter_ids(t)) {
                            out.params.push_back(&t.nodes[id].value);
                            out.frozen.push_back(0);
                            out.decay.push_back(0);
                        }
                    break;
                case ExpertKind::Prior:
                    break;
            }
        }
    }
    return out;
}

}  // namespace

MCBEModel zero_clone(const MCBEModel& model) {
    MCBEModel g = model;
    g.encoder.net = g.encoder.net.zeros_like();
    g.selector.net = g.selector.net.zeros_like();
    for (auto& e : g.experts) {
        switch (e.kind) {
            case ExpertKind::Linear:
                std::fill(e.W.begin(), e.W.end(), 0.0);
                std::fill(e.b.begin(), e.b.end(), 0.0);
                break;
            case ExpertKind::Dense:
                e.net = e.net.zeros_like();
                break;
            case ExpertKind::Symbolic:
            case ExpertKind::Prior:
                for (auto& t : e.trees)
                    for (auto& n : t.nodes)
                        if (n.kind == NodeKind::Param) n.value = 0.0;
                break;
        }
    }
    return g;
}

double temperature_at(int epoch, int total_epochs, const TrainConfig& cfg) {
    if (total_epochs <= 0) return cfg.tau_end;
    double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return cfg.tau_end +
           0.5 * (cfg.tau_start - cfg.tau_end) * (1.0 + std::cos(M_PI * frac));
}

// ---------------------------------------------------------------------------
// Objective

LossBreakdown total_loss(const MCBEModel& model, const ConceptDataset& data,
                         const std::vector<int>& rows, const TrainConfig& cfg,
                         double temperature, std::uint64_t seed, bool gumbel,
                         MCBEModel* grad_out) {
    if (rows.empty()) throw InsufficientData("total_loss: empty batch");
    int k = model.n_concepts();
    int M = model.n_experts();
    int width = model.output_width();
    double n = static_cast<double>(rows.size());
    bool binary = model.encoder.kind == ConceptKind::Binary;
    bool classify = model.task_kind == TaskKind::Classification;

    LossBreakdown out;
    std::uniform_real_distribution<double> unit(std::numeric_limits<double>::min(), 1.0);

    for (int r : rows) {
        const std::vector<double>& x = data.X[r];
        const std::vector<double>& c = data.C[r];

        // --- concept branch: encoder on x vs ground-truth concepts
        DenseNet::Cache ecache;
        std::vector<double> cpred = model.encoder.net.forward(x, ecache);
        std::vector<double> dlogits(k, 0.0);
        for (int j = 0; j < k; ++j) {
            if (binary) {
                double p = std::clamp(cpred[j], 1e-12, 1.0 - 1e-12);
                out.concept_loss +=
                    -(c[j] * std::log(p) + (1.0 - c[j]) * std::log(1.0 - p)) / (n * k);
                dlogits[j] = cfg.lambda_c * (cpred[j] - c[j]) / (n * k);
            } else {
                double d = cpred[j] - c[j];
                out.concept_loss += d * d / (n * k);
                dlogits[j] = cfg.lambda_c * 2.0 * d / (n * k);
            }
        }
        if (grad_out)
            model.encoder.net.backward(ecache, dlogits, grad_out->encoder.net);

        // --- task branch: disjoint training on ground-truth concepts
        DenseNet::Cache scache;
        std::vector<double> logits = model.selector.net.forward(x, scache);
        std::vector<double> z = logits;
        if (gumbel) {
            std::mt19937_64 rng(splitmix64(seed + static_cast<std::uint64_t>(r) * 2 + 1));
            for (auto& zj : z) zj += -std::log(-std::log(unit(rng)));
        }
        for (auto& zj : z) zj /= temperature;
        std::vector<double> w = softmax(z);

        std::vector<std::vector<double>> eout(M);
        std::vector<DenseNet::Cache> ecaches(M);
        std::vector<std::vector<std::vector<double>>> tree_grads(M);  // [m][tree][param]
        for (int m = 0; m < M; ++m) {
            const Expert& e = model.experts[m];
            if (e.kind == ExpertKind::Dense) {
                eout[m] = e.net.forward(c, ecaches[m]);
            } else if (e.kind == ExpertKind::Symbolic || e.kind == ExpertKind::Prior) {
                eout[m].resize(e.trees.size());
                tree_grads[m].resize(e.trees.size());
                for (std::size_t t = 0; t < e.trees.size(); ++t) {
                    std::vector<double> g;
                    double v = eval_param_gradients(e.trees[t], c.data(), k, g);
                    eout[m][t] = v;
                    tree_grads[m][t] = std::move(g);
                }
            } else {
                eout[m] = expert_output(e, c);
            }
        }

        std::vector<double> dw(M, 0.0);                       // dL/dweight_m (weighted)
        std::vector<std::vector<double>> dout(M);             // dL/d expert output
        for (int m = 0; m < M; ++m) dout[m].assign(width, 0.0);

        if (!classify) {
            double yhat = 0.0;
            for (int m = 0; m < M; ++m) yhat += w[m] * eout[m][0];
            double e = yhat - data.y[r];
            out.task_loss += e * e / n;
            for (int m = 0; m < M; ++m) {
                dout[m][0] = cfg.lambda_y * 2.0 * e * w[m] / n;
                dw[m] = cfg.lambda_y * 2.0 * e * eout[m][0] / n;
            }
        } else {
            int label = static_cast<int>(data.y[r]);
            std::vector<std::vector<double>> q(M);
            std::vector<double> p(width, 0.0);
            for (int m = 0; m < M; ++m) {
                q[m] = softmax(eout[m]);
                for (int j = 0; j < width; ++j) p[j] += w[m] * q[m][j];
            }
            double py = std::max(p[label], 1e-12);
            out.task_loss += -std::log(py) / n;
            for (int m = 0; m < M; ++m) {
                dw[m] = cfg.lambda_y * (-q[m][label] / py) / n;
                for (int j = 0; j < width; ++j) {
                    double djy = j == label ? 1.0 : 0.0;
                    dout[m][j] =
                        cfg.lambda_y * (-(w[m] / py) * q[m][label] * (djy - q[m][j])) / n;
                }
            }
        }

        if (!grad_out) continue;

        // selector gradient through the (Gumbel-)softmax
        double wbar = 0.0;
        for (int m = 0; m < M; ++m) wbar += dw[m] * w[m];
        std::vector<double> dsel(M);
        for (int m = 0; m < M; ++m) dsel[m] = w[m] * (dw[m] - wbar) / temperature;
        model.selector.net.backward(scache, dsel, grad_out->selector.net);

        // expert gradients
        for (int m = 0; m < M; ++m) {
            const Expert& e = model.experts[m];
            Expert& ge = grad_out->experts[m];
            switch (e.kind) {
                case ExpertKind::Linear:
                    for (int o = 0; o < width; ++o) {
                        ge.b[o] += dout[m][o];
                        for (int i = 0; i < k; ++i)
                            ge.W[static_cast<std::size_t>(o) * k + i] += dout[m][o] * c[i];
                    }
                    break;
                case ExpertKind::Dense:
                    e.net.backward(ecaches[m], dout[m], ge.net);
                    break;
                case ExpertKind::Symbolic: {
                    for (std::size_t t = 0; t < e.trees.size(); ++t) {
                        auto ids = trainable_parameter_ids(e.trees[t]);
                        for (std::size_t p = 0; p < ids.size(); ++p)
                            ge.trees[t].nodes[ids[p]].value +=
                                dout[m][t] * tree_grads[m][t][p];
                    }
                    break;
                }
                case ExpertKind::Prior:
                    break;
            }
        }
    }

    // --- L1 penalty on Linear and Dense expert weight matrices
    for (int m = 0; m < M; ++m) {
        const Expert& e = model.experts[m];
        if (e.kind == ExpertKind::Linear) {
            for (std::size_t i = 0; i < e.W.size(); ++i) {
                out.l1 += std::abs(e.W[i]);
                if (grad_out)
                    grad_out->experts[m].W[i] +=
                        cfg.l1_coeff * (e.W[i] > 0.0 ? 1.0 : e.W[i] < 0.0 ? -1.0 : 0.0);
            }
        } else if (e.kind == ExpertKind::Dense) {
            for (int l = 0; l < e.net.n_layers(); ++l) {
                for (std::size_t i = 0; i < e.net.W[l].size(); ++i) {
                    double wv = e.net.W[l][i];
                    out.l1 += std::abs(wv);
                    if (grad_out)
                        grad_out->experts[m].net.W[l][i] +=
                            cfg.l1_coeff * (wv > 0.0 ? 1.0 : wv < 0.0 ? -1.0 : 0.0);
                }
            }
        }
    }

    out.total = cfg.lambda_c * out.concept_loss + cfg.lambda_y * out.task_loss +
                cfg.l1_coeff * out.l1;
    if (!std::isfinite(out.total)) {
        std::ostringstream msg;
        msg << "non-finite loss (concept=" << out.concept_loss
            << ", task=" << out.task_loss << ", l1=" << out.l1 << ")";
        throw NumericalError(msg.str());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimization loop

void save_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "epoch,train_loss,val_loss,concept_loss,task_loss,temperature,lr\n";
    for (const auto& e : history.epochs)
        out << e.epoch << "," << format_number(e.train_loss) << ","
            << format_number(e.val_loss) << "," << format_number(e.concept_loss) << ","
            << format_number(e.task_loss) << "," << format_number(e.temperature) << ","
            << format_number(e.lr) << "\n";
    out << "# stop_reason," << history.stop_reason << "\n";
}

std::pair<MCBEModel, TrainHistory> train_stage(MCBEModel model,
                                               const ConceptDataset& train,
                                               const ConceptDataset& val,
                                               const TrainConfig& cfg,
                                               const StageOpts& opts) {
    TrainHistory history;
    ParamRefs refs = gather(model, opts.scope);
    if (refs.params.empty()) {
        history.stop_reason = "no trainable parameters";
        return {std::move(model), history};
    }
    MCBEModel gmodel = zero_clone(model);
    ParamRefs grefs = gather(gmodel, opts.scope);

    AdamW opt(opts.lr_override > 0.0 ? opts.lr_override : cfg.learning_rate);
    std::mt19937_64 shuffle_rng(splitmix64(cfg.seed ^ 0xC0FFEE1234ULL));

    std::vector<int> train_idx(train.size());
    std::iota(train_idx.begin(), train_idx.end(), 0);
    std::vector<int> val_idx(val.size());
    std::iota(val_idx.begin(), val_idx.end(), 0);

    // the starting point is a candidate too: a warm-started model that every
    // update worsens should survive as the returned snapshot
    MCBEModel best = model;
    double best_val =
        val.size() > 0
            ? total_loss(model, val, val_idx, cfg, cfg.tau_end, 0, false).total
            : std::numeric_limits<double>::infinity();
    double initial_val = std::numeric_limits<double>::quiet_NaN();
    int since_improve = 0, since_plateau = 0;
    std::vector<double> flat_grads(grefs.params.size());

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double tau = temperature_at(epoch, cfg.max_epochs, cfg);
        std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
        std::uint64_t epoch_seed =
            splitmix64(cfg.seed ^ (static_cast<std::uint64_t>(epoch) * 0x10001ULL + 7));

        double train_loss = 0.0, concept_loss = 0.0, task_loss = 0.0;
        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end =
                std::min(train_idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<int> batch(train_idx.begin() + start, train_idx.begin() + end);
            for (double* g : grefs.params) *g = 0.0;
            LossBreakdown lb = total_loss(model, train, batch, cfg, tau, epoch_seed,
                                          opts.anneal_gumbel, &gmodel);
            for (std::size_t i = 0; i < grefs.params.size(); ++i)
                flat_grads[i] = *grefs.params[i];
            opt.step(refs.params, flat_grads, &refs.frozen, &refs.decay);
            double share = static_cast<double>(batch.size()) / train_idx.size();
            train_loss += lb.total * share;
            concept_loss += lb.concept_loss * share;
            task_loss += lb.task_loss * share;
        }

        LossBreakdown vb = total_loss(model, val, val_idx, cfg, tau, 0, false, nullptr);
        history.epochs.push_back(
            {epoch, train_loss, vb.total, concept_loss, task_loss, tau, opt.lr});

        if (std::isnan(initial_val)) initial_val = vb.total;
        // relative growth alone is meaningless near zero loss: a fine-tune
        // stage starting at 1e-3 spikes transiently without diverging, so the
        // baseline is floored at unit scale
        if (vb.total > 10.0 * std::max(initial_val, 1.0) && initial_val > 1e-12)
            throw DivergenceError("validation loss exceeded 10x its initial value");

        if (vb.total < best_val - 1e-12) {
            best_val = vb.total;
            best = model;
            since_improve = 0;
            since_plateau = 0;
        } else {
            ++since_improve;
            ++since_plateau;
        }
        if (since_plateau >= cfg.plateau_patience) {
            opt.lr *= cfg.plateau_factor;
            since_plateau = 0;
        }
        if (since_improve >= cfg.early_stop_patience) {
            history.stop_reason = "early_stop";
            break;
        }
    }
    if (history.stop_reason.empty()) history.stop_reason = "max_epochs";
    return {std::move(best), std::move(history)};
}

MCBEModel harden_linear(MCBEModel model, double threshold) {
    for (auto& e : model.experts) {
        if (e.kind != ExpertKind::Linear) continue;
        for (std::size_t i = 0; i < e.W.size(); ++i) {
            if (std::abs(e.W[i]) < threshold) {
                e.W[i] = 0.0;
                e.frozen[i] = 1;
            }
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// Model construction

namespace {

int dataset_output_width(const ConceptDataset& ds) {
    if (!ds.classification) return 1;
    int n_classes = 0;
    for (double y : ds.y) n_classes = std::max(n_classes, static_cast<int>(y) + 1);
    return std::max(n_classes, 2);
}

MCBEModel make_base(const ConceptDataset& ds, int M, const TrainConfig& cfg,
                    std::mt19937_64& rng) {
    if (M < 1) throw ConfigError("expert count must be >= 1");
    MCBEModel m;
    m.seed = cfg.seed;
    m.concept_names = ds.concept_names;
    m.task_kind = ds.classification ? TaskKind::Classification : TaskKind::Regression;
    m.encoder.kind = ds.binary_concepts ? ConceptKind::Binary : ConceptKind::Continuous;
    m.encoder.net = DenseNet::make(
        {ds.feature_dim(), cfg.hidden, ds.concept_dim()},
        ds.binary_concepts ? OutputTransform::Sigmoid : OutputTransform::Identity, rng);
    m.selector.net =
        DenseNet::make({ds.feature_dim(), cfg.hidden, M}, OutputTransform::Identity, rng);
    return m;
}

}  // namespace

MCBEModel warm_start_encoder(MCBEModel model, const ConceptDataset& ds) {
    DenseNet& net = model.encoder.net;
    if (model.encoder.kind != ConceptKind::Continuous || net.sizes.size() != 3) return model;
    const int d = net.sizes[0], h = net.sizes[1], k = net.sizes[2];
    if (ds.feature_dim() != d || ds.concept_dim() != k || h < 2 * k || ds.size() == 0)
        return model;

    // ridge-regularized normal equations for [W | b] on X -> C
    const int e = d + 1;
    std::vector<std::vector<double>> A(e, std::vector<double>(e, 0.0));
    std::vector<std::vector<double>> B(e, std::vector<double>(k, 0.0));
    for (int i = 0; i < ds.size(); ++i) {
        for (int a = 0; a < e; ++a) {
            double xa = a < d ? ds.X[i][a] : 1.0;
            for (int b2 = 0; b2 < e; ++b2)
                A[a][b2] += xa * (b2 < d ? ds.X[i][b2] : 1.0);
            for (int j = 0; j < k; ++j) B[a][j] += xa * ds.C[i][j];
        }
    }
    for (int a = 0; a < e; ++a) A[a][a] += 1e-10;
    for (int col = 0; col < e; ++col) {
        int pivot = col;
        for (int r = col + 1; r < e; ++r)
            if (std::abs(A[r][col]) > std::abs(A[pivot][col])) pivot = r;
        std::swap(A[col], A[pivot]);
        std::swap(B[col], B[pivot]);
        if (A[col][col] == 0.0) return model;
        for (int r = 0; r < e; ++r) {
            if (r == col) continue;
            double f = A[r][col] / A[col][col];
            for (int c2 = col; c2 < e; ++c2) A[r][c2] -= f * A[col][c2];
            for (int j = 0; j < k; ++j) B[r][j] -= f * B[col][j];
        }
    }
    // B now holds the solution after diagonal scaling: row a = coefficients of
    // feature a (a = d is the bias row) across the k concepts.
    for (int a = 0; a < e; ++a)
        for (int j = 0; j < k; ++j) B[a][j] /= A[a][a];

    std::fill(net.W[0].begin(), net.W[0].end(), 0.0);
    std::fill(net.b[0].begin(), net.b[0].end(), 0.0);
    std::fill(net.W[1].begin(), net.W[1].end(), 0.0);
    std::fill(net.b[1].begin(), net.b[1].end(), 0.0);
    const double undo = 1.0 / (1.0 + net.leaky_slope);
    for (int j = 0; j < k; ++j) {
        for (int a = 0; a < d; ++a) {
            net.W[0][j * d + a] = B[a][j];
            net.W[0][(k + j) * d + a] = -B[a][j];
        }
        net.b[0][j] = B[d][j];
        net.b[0][k + j] = -B[d][j];
        net.W[1][j * h + j] = undo;
        net.W[1][j * h + k + j] = -undo;
    }
    return model;
}

MCBEModel make_lin_model(const ConceptDataset& ds, int M, const TrainConfig& cfg) {
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x11AA22BB33CC44DDULL));
    MCBEModel m = make_base(ds, M, cfg, rng);
    int out = dataset_output_width(ds);
    for (int i = 0; i < M; ++i)
        m.experts.push_back(Expert::linear(ds.concept_dim(), out, rng));
    return m;
}

MCBEModel make_mlp_model(const ConceptDataset& ds, int M, const TrainConfig& cfg) {
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x11AA22BB33CC44DDULL));
    MCBEModel m = make_base(ds, M, cfg, rng);
    int out = dataset_output_width(ds);
    for (int i = 0; i < M; ++i)
        m.experts.push_back(Expert::dense({ds.concept_dim(), cfg.hidden, out}, rng));
    return m;
}

MCBEModel make_prior_model(const ConceptDataset& ds,
                           const std::vector<std::vector<std::string>>& expert_exprs,
                           const TrainConfig& cfg) {
    if (expert_exprs.empty()) throw ConfigError("prior model needs expressions");
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x11AA22BB33CC44DDULL));
    MCBEModel m = make_base(ds, static_cast<int>(expert_exprs.size()), cfg, rng);
    auto vocab = Vocabulary::named("complete");
    for (const auto& exprs : expert_exprs) {
        std::vector<ExprTree> trees;
        for (const auto& s : exprs)
            trees.push_back(parse_expression(s, vocab, ds.concept_names));
        m.experts.push_back(Expert::prior(std::move(trees), ds.concept_names));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Pipelines

LinFitResult fit_lin_mcbe(const SplitDataset& data, int M, const TrainConfig& cfg) {
    MCBEModel model = make_lin_model(data.train, M, cfg);
    StageOpts opts;
    auto [m1, h1] = train_stage(std::move(model), data.train, data.val, cfg, opts);
    MCBEModel hardened = harden_linear(std::move(m1), cfg.hard_threshold);
    auto [m2, h2] = train_stage(std::move(hardened), data.train, data.val, cfg, opts);
    return {std::move(m2), std::move(h1), std::move(h2)};
}

std::vector<ConceptDataset> partition_by_expert(const MCBEModel& model,
                                                const ConceptDataset& ds) {
    std::vector<std::vector<int>> rows(model.n_experts());
    for (int i = 0; i < ds.size(); ++i) {
        std::vector<double> w = select_weights(model, ds.X[i], 1.0, SelectMode::Argmax);
        int m = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
        rows[m].push_back(i);
    }
    std::vector<ConceptDataset> parts;
    parts.reserve(rows.size());
    for (const auto& r : rows) parts.push_back(take_rows(ds, r));
    return parts;
}

namespace {

// Shared by fit_sym_mcbe stage (ii) and adapt_vocabulary: replaces each
// expert with distilled symbolic trees where its partition supports SR.
void distill_experts(MCBEModel& model, const std::vector<ConceptDataset>& parts,
                     const SRConfig& sr_base, const Vocabulary& vocab, int out_width,
                     std::vector<ParetoArchive>& archives,
                     std::vector<int>& fallback_experts) {
    const int min_partition = 10;
    archives.assign(model.n_experts(), {});
    fallback_experts.clear();
    for (int m = 0; m < model.n_experts(); ++m) {
        if (parts[m].size() < min_partition) {
            fallback_experts.push_back(m);
            continue;
        }
        SRConfig sr = sr_base;
        sr.vocab = vocab;
        std::vector<ExprTree> trees;
        bool ok = true;
        for (int j = 0; j < out_width; ++j) {
            sr.seed = sr_base.seed + 1000ULL * static_cast<std::uint64_t>(m) + j;
            std::vector<double> targets;
            if (out_width == 1) {
                targets = parts[m].y;
            } else {
                targets.reserve(parts[m].y.size());
                for (double y : parts[m].y)
                    targets.push_back(static_cast<int>(y) == j ? 1.0 : 0.0);
            }
            try {
                ParetoArchive archive =
                    run_sr(parts[m].C, targets, model.concept_names, sr);
                ExprTree tree = select_by_best_score(archive).tree;
                if (j == 0) archives[m] = std::move(archive);
                trees.push_back(std::move(tree));
            } catch (const Error&) {
                ok = false;
                break;
            }
        }
        if (!ok) {
            fallback_experts.push_back(m);
            continue;
        }
        model.experts[m] = Expert::symbolic(std::move(trees), model.concept_names);
    }
}

}  // namespace

SymFitResult fit_sym_mcbe(const SplitDataset& data, int M, const TrainConfig& cfg,
                          const SRConfig& sr_cfg, const Vocabulary& vocab) {
    SymFitResult res;
    // stage (i): placeholder experts
    MCBEModel model = make_mlp_model(data.train, M, cfg);
    StageOpts opts;
    std::tie(model, res.stage1) = train_stage(std::move(model), data.train, data.val, cfg, opts);
    res.stage1_model = model;

    // stage (ii): partition and distill
    std::vector<ConceptDataset> parts = partition_by_expert(model, data.train);
    distill_experts(model, parts, sr_cfg, vocab, dataset_output_width(data.train),
                    res.archives, res.fallback_experts);

    // stage (iii): fine-tune constants and upstream networks
    StageOpts ft;
    ft.lr_override = cfg.learning_rate * cfg.finetune_lr_multiplier;
    std::tie(res.model, res.stage3) =
        train_stage(std::move(model), data.train, data.val, cfg, ft);
    return res;
}

AdaptResult adapt_vocabulary(const MCBEModel& stage1_model, const SplitDataset& data,
                             const Vocabulary& vocab, const TrainConfig& cfg,
                             const SRConfig& sr_cfg) {
    AdaptResult res;
    MCBEModel model = stage1_model;
    std::vector<ConceptDataset> parts = partition_by_expert(model, data.train);
    distill_experts(model, parts, sr_cfg, vocab, dataset_output_width(data.train),
                    res.archives, res.fallback_experts);

    // Only expert parameters train: adaptation keeps encoder and selector
    // byte-identical.
    StageOpts ft;
    ft.scope = {false, false, true};
    ft.lr_override = cfg.learning_rate * cfg.finetune_lr_multiplier;
    std::tie(res.model, res.finetune) =
        train_stage(std::move(model), data.train, data.val, cfg, ft);
    return res;
}

}  // namespace mcbe
