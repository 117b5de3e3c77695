#include "mcbe/symreg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace mcbe {

SRConfig SRConfig::full_preset() {
    SRConfig cfg;
    cfg.n_populations = 40;
    cfg.population_size = 60;
    cfg.n_iterations = 100;
    cfg.cycles_per_iteration = 380;
    return cfg;
}

// ---------------------------------------------------------------------------
// Pareto archive

bool ParetoArchive::insert(ParetoEntry entry) {
    if (!std::isfinite(entry.loss)) return false;
    for (const auto& e : entries) {
        bool e_not_worse = e.loss <= entry.loss && e.complexity <= entry.complexity;
        bool e_strictly_better = e.loss < entry.loss || e.complexity < entry.complexity;
        if (e_not_worse && e_strictly_better) return false;
        if (e.complexity == entry.complexity && e.loss <= entry.loss) return false;
    }
    entries.erase(std::remove_if(entries.begin(), entries.end(),
                                 [&](const ParetoEntry& e) {
                                     return entry.loss <= e.loss &&
                                            entry.complexity <= e.complexity;
                                 }),
                  entries.end());
    entries.push_back(std::move(entry));
    std::sort(entries.begin(), entries.end(),
              [](const ParetoEntry& a, const ParetoEntry& b) {
                  return a.complexity < b.complexity;
              });
    return true;
}

// ---------------------------------------------------------------------------
// Loss and constant optimization

double sr_loss(const ExprTree& tree, const std::vector<std::vector<double>>& C,
               const std::vector<double>& y) {
    double sum = 0.0;
    int k = C.empty() ? 0 : static_cast<int>(C[0].size());
    for (std::size_t i = 0; i < C.size(); ++i) {
        double v = evaluate_indexed(tree, C[i].data(), k, /*strict=*/false);
        double d = v - y[i];
        sum += d * d;
        if (!std::isfinite(sum)) return std::numeric_limits<double>::infinity();
    }
    double mse = sum / static_cast<double>(C.size());
    return std::isfinite(mse) ? mse : std::numeric_limits<double>::infinity();
}

ExprTree optimize_constants(const ExprTree& tree,
                            const std::vector<std::vector<double>>& C,
                            const std::vector<double>& y, int steps) {
    auto ids = trainable_parameter_ids(tree);
    if (ids.empty() || C.empty()) return tree;
    int k = static_cast<int>(C[0].size());

    ExprTree cur = tree;
    double cur_loss = sr_loss(cur, C, y);
    if (!std::isfinite(cur_loss)) return tree;
    double lr = 0.1;

    for (int step = 0; step < steps; ++step) {
        // gradient of the MSE w.r.t. the trainable parameters
        std::vector<double> grad(ids.size(), 0.0);
        bool ok = true;
        for (std::size_t i = 0; i < C.size(); ++i) {
            std::vector<double> g;
            double v = eval_param_gradients(cur, C[i].data(), k, g);
            if (!std::isfinite(v)) {
                ok = false;
                break;
            }
            double r = 2.0 * (v - y[i]) / static_cast<double>(C.size());
            for (std::size_t p = 0; p < ids.size(); ++p) {
                grad[p] += r * g[p];
                if (!std::isfinite(grad[p])) ok = false;
            }
            if (!ok) break;
        }
        if (!ok) break;

        bool accepted = false;
        for (int tries = 0; tries < 30; ++tries) {
            ExprTree trial = cur;
            for (std::size_t p = 0; p < ids.size(); ++p)
                trial.nodes[ids[p]].value -= lr * grad[p];
            double trial_loss = sr_loss(trial, C, y);
            if (std::isfinite(trial_loss) && trial_loss < cur_loss) {
                cur = std::move(trial);
                cur_loss = trial_loss;
                lr *= 1.5;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if (!accepted) break;
    }
    return cur;
}

// ---------------------------------------------------------------------------
// Genetic programming internals

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

ExprTree copy_subtree(const ExprTree& t, int idx) {
    const Node& n = t.nodes[idx];
    if (n.n_children == 0) {
        ExprTree leaf;
        leaf.nodes.push_back(n);
        leaf.root = 0;
        return leaf;
    }
    if (n.n_children == 1) return ExprTree::unary(n.op, copy_subtree(t, n.child[0]));
    return ExprTree::binary(n.op, copy_subtree(t, n.child[0]),
                            copy_subtree(t, n.child[1]));
}

ExprTree replace_subtree(const ExprTree& t, int idx, int target, const ExprTree& repl) {
    if (idx == target) return repl;
    const Node& n = t.nodes[idx];
    if (n.n_children == 0) {
        ExprTree leaf;
        leaf.nodes.push_back(n);
        leaf.root = 0;
        return leaf;
    }
    if (n.n_children == 1)
        return ExprTree::unary(n.op, replace_subtree(t, n.child[0], target, repl));
    return ExprTree::binary(n.op, replace_subtree(t, n.child[0], target, repl),
                            replace_subtree(t, n.child[1], target, repl));
}

struct GpContext {
    const SRConfig* cfg;
    const std::vector<std::string>* names;
    std::vector<OpCode> unary_ops, binary_ops;
};

ExprTree random_leaf(const GpContext& ctx, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (!ctx.names->empty() && unit(rng) < 0.6) {
        int i = static_cast<int>(rng() % ctx.names->size());
        return ExprTree::variable((*ctx.names)[i], i);
    }
    std::uniform_real_distribution<double> val(-2.0, 2.0);
    return ExprTree::parameter(val(rng));
}

ExprTree grow(const GpContext& ctx, std::mt19937_64& rng, int depth) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    bool leaf = depth <= 1 || unit(rng) < 0.35 ||
                (ctx.unary_ops.empty() && ctx.binary_ops.empty());
    if (leaf) return random_leaf(ctx, rng);
    std::size_t total = ctx.unary_ops.size() + ctx.binary_ops.size();
    std::size_t pick = rng() % total;
    if (pick < ctx.binary_ops.size()) {
        OpCode op = ctx.binary_ops[pick];
        return ExprTree::binary(op, grow(ctx, rng, depth - 1), grow(ctx, rng, depth - 1));
    }
    OpCode op = ctx.unary_ops[pick - ctx.binary_ops.size()];
    return ExprTree::unary(op, grow(ctx, rng, depth - 1));
}

ExprTree mutate(const GpContext& ctx, std::mt19937_64& rng, const ExprTree& t) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double r = unit(rng);
    if (r < 0.25) {
        // operator swap at equal arity
        std::vector<int> op_nodes;
        for (int i = 0; i < t.size(); ++i)
            if (t.nodes[i].kind == NodeKind::Op) op_nodes.push_back(i);
        if (!op_nodes.empty()) {
            int idx = op_nodes[rng() % op_nodes.size()];
            const auto& pool = t.nodes[idx].n_children == 1 ? ctx.unary_ops
                                                            : ctx.binary_ops;
            if (!pool.empty()) {
                ExprTree out = t;
                out.nodes[idx].op = pool[rng() % pool.size()];
                return out;
            }
        }
    } else if (r < 0.5) {
        std::vector<int> params;
        for (int i = 0; i < t.size(); ++i)
            if (t.nodes[i].kind == NodeKind::Param) params.push_back(i);
        if (!params.empty()) {
            ExprTree out = t;
            int idx = params[rng() % params.size()];
            out.nodes[idx].value += 0.5 * gauss(rng);
            return out;
        }
    }
    if (r < 0.65 && t.nodes[t.root].n_children > 0) {
        // hoist: promote a random proper subtree, counteracting bloat
        int target = static_cast<int>(rng() % t.size());
        if (target != t.root) return copy_subtree(t, target);
    }
    if (r < 0.8 && !ctx.binary_ops.empty()) {
        // insert: wrap a random subtree in a new binary op with a fresh leaf
        int target = static_cast<int>(rng() % t.size());
        OpCode op = ctx.binary_ops[rng() % ctx.binary_ops.size()];
        ExprTree leaf = ExprTree::parameter(gauss(rng));
        if (unit(rng) < 0.7 && !ctx.names->empty()) {
            int vi = static_cast<int>(rng() % ctx.names->size());
            leaf = ExprTree::variable((*ctx.names)[vi], vi);
        }
        ExprTree wrapped = rng() % 2 == 0
                               ? ExprTree::binary(op, copy_subtree(t, target), std::move(leaf))
                               : ExprTree::binary(op, std::move(leaf), copy_subtree(t, target));
        return replace_subtree(t, t.root, target, std::move(wrapped));
    }
    int target = static_cast<int>(rng() % t.size());
    return replace_subtree(t, t.root, target, grow(ctx, rng, 3));
}

// Deterministic seed trees: each variable, each unary op applied to each
// variable, and (vocabulary permitting) the affine basis c1*u(v) + c2.
std::vector<ExprTree> primitive_seeds(const GpContext& ctx) {
    std::vector<ExprTree> out;
    for (std::size_t i = 0; i < ctx.names->size(); ++i)
        out.push_back(ExprTree::variable((*ctx.names)[i], static_cast<int>(i)));
    bool affine = ctx.cfg->vocab.contains(OpCode::Add) &&
                  ctx.cfg->vocab.contains(OpCode::Mul);
    auto push_with_affine = [&](ExprTree base) {
        out.push_back(base);
        if (affine)
            out.push_back(ExprTree::binary(
                OpCode::Add,
                ExprTree::binary(OpCode::Mul, ExprTree::parameter(1.0), std::move(base)),
                ExprTree::parameter(0.0)));
    };
    for (OpCode op : ctx.unary_ops)
        for (std::size_t i = 0; i < ctx.names->size(); ++i)
            push_with_affine(ExprTree::unary(
                op, ExprTree::variable((*ctx.names)[i], static_cast<int>(i))));
    auto var = [&](std::size_t i) {
        return ExprTree::variable((*ctx.names)[i], static_cast<int>(i));
    };
    for (OpCode op : ctx.binary_ops) {
        bool commutative = op == OpCode::Add || op == OpCode::Mul;
        for (std::size_t i = 0; i < ctx.names->size(); ++i)
            for (std::size_t j = 0; j < ctx.names->size(); ++j) {
                if (i == j || (commutative && j < i)) continue;
                push_with_affine(ExprTree::binary(op, var(i), var(j)));
            }
    }
    return out;
}

// Exhaustive parameterless structures at low complexity. With a handful of
// variables every tree of <= 5 nodes can be scored outright, which pins the
// minimal form of simple mechanisms that evolution tends to express in larger
// equivalent shapes.
std::vector<ExprTree> small_var_trees(const GpContext& ctx, int max_nodes) {
    if (ctx.names->size() > 6) return {};
    std::vector<std::vector<ExprTree>> by_size(std::max(max_nodes, 0) + 1);
    if (max_nodes >= 1)
        for (std::size_t i = 0; i < ctx.names->size(); ++i)
            by_size[1].push_back(ExprTree::variable((*ctx.names)[i], static_cast<int>(i)));
    std::size_t total = by_size[1].size();
    for (int n = 2; n <= max_nodes && total < 200000; ++n) {
        for (OpCode op : ctx.unary_ops)
            for (const auto& c : by_size[n - 1]) by_size[n].push_back(ExprTree::unary(op, c));
        for (int nl = 1; nl <= n - 2; ++nl)
            for (OpCode op : ctx.binary_ops)
                for (const auto& l : by_size[nl])
                    for (const auto& r : by_size[n - 1 - nl])
                        by_size[n].push_back(ExprTree::binary(op, l, r));
        total += by_size[n].size();
    }
    std::vector<ExprTree> all;
    for (auto& bucket : by_size)
        for (auto& t : bucket) all.push_back(std::move(t));
    return all;
}

ExprTree crossover(std::mt19937_64& rng, const ExprTree& a, const ExprTree& b) {
    int ta = static_cast<int>(rng() % a.size());
    int tb = static_cast<int>(rng() % b.size());
    return replace_subtree(a, a.root, ta, copy_subtree(b, tb));
}

struct Indiv {
    ExprTree tree;
    double mse = std::numeric_limits<double>::infinity();
    double fitness = std::numeric_limits<double>::infinity();
};

void score(Indiv& ind, const GpContext& ctx, const std::vector<std::vector<double>>& C,
           const std::vector<double>& y) {
    int nodes = ind.tree.size();
    if (nodes > ctx.cfg->max_complexity) {
        ind.mse = ind.fitness = std::numeric_limits<double>::infinity();
        return;
    }
    ind.mse = sr_loss(ind.tree, C, y);
    ind.fitness = ind.mse + ctx.cfg->parsimony * nodes;
}

struct Population {
    std::vector<Indiv> members;
    std::mt19937_64 rng;
    ParetoArchive archive;
    int best = 0;

    void refresh_best() {
        best = 0;
        for (std::size_t i = 1; i < members.size(); ++i)
            if (members[i].fitness < members[best].fitness) best = static_cast<int>(i);
    }

    int tournament(int size, bool worst) {
        int pick = static_cast<int>(rng() % members.size());
        for (int i = 1; i < size; ++i) {
            int cand = static_cast<int>(rng() % members.size());
            bool better = members[cand].fitness < members[pick].fitness;
            if (worst ? !better : better) pick = cand;
        }
        return pick;
    }
};

void evolve_iteration(Population& pop, const GpContext& ctx,
                      const std::vector<std::vector<double>>& C,
                      const std::vector<double>& y) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const SRConfig& cfg = *ctx.cfg;
    for (int cycle = 0; cycle < cfg.cycles_per_iteration; ++cycle) {
        int pa = pop.tournament(cfg.tournament_size, false);
        Indiv child;
        if (unit(pop.rng) < cfg.crossover_rate) {
            int pb = pop.tournament(cfg.tournament_size, false);
            child.tree = crossover(pop.rng, pop.members[pa].tree, pop.members[pb].tree);
        } else if (unit(pop.rng) < cfg.mutation_rate) {
            child.tree = mutate(ctx, pop.rng, pop.members[pa].tree);
        } else {
            child.tree = grow(ctx, pop.rng, 4);
        }
        score(child, ctx, C, y);
        // occasional constant polish so that a good structure with bad
        // constants can compete on even terms
        if (std::isfinite(child.mse) && unit(pop.rng) < 0.2) {
            child.tree = optimize_constants(child.tree, C, y,
                                            std::max(1, cfg.constant_opt_steps / 5));
            score(child, ctx, C, y);
        }
        int loser = pop.tournament(cfg.tournament_size, true);
        if (loser == pop.best) loser = (loser + 1) % static_cast<int>(pop.members.size());
        bool replacing_best = false;
        if (child.fitness < pop.members[pop.best].fitness) replacing_best = true;
        pop.members[loser] = std::move(child);
        if (replacing_best) pop.best = loser;
    }
    pop.refresh_best();
    // polish the iteration's champion
    Indiv& champ = pop.members[pop.best];
    if (std::isfinite(champ.fitness)) {
        champ.tree = optimize_constants(champ.tree, C, y, cfg.constant_opt_steps);
        score(champ, ctx, C, y);
    }
    for (const auto& m : pop.members)
        if (std::isfinite(m.mse)) {
            // canonical form folds constant subtrees, so equivalent candidates
            // compete at their true complexity
            ExprTree canon = canonicalize(m.tree);
            int complexity = canon.size();
            pop.archive.insert({std::move(canon), m.mse, complexity});
        }
}

}  // namespace

ParetoArchive run_sr(const std::vector<std::vector<double>>& C,
                     const std::vector<double>& y,
                     const std::vector<std::string>& concept_names, const SRConfig& cfg) {
    if (C.size() < 2 || C.size() != y.size())
        throw InsufficientData("run_sr needs at least 2 aligned samples");
    for (double t : y)
        if (!std::isfinite(t)) throw InsufficientData("run_sr: non-finite target");
    if (cfg.vocab.ops.empty())
        throw VocabularyTooSmall("empty operator vocabulary");

    GpContext ctx;
    ctx.cfg = &cfg;
    ctx.names = &concept_names;
    for (OpCode op : cfg.vocab.ops)
        (op_info(op).arity == 1 ? ctx.unary_ops : ctx.binary_ops).push_back(op);

    // seeded subsample for the evolutionary loop
    std::vector<std::vector<double>> Cs;
    std::vector<double> ys;
    if (static_cast<int>(C.size()) > cfg.max_samples) {
        std::vector<int> idx(C.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 sub_rng(splitmix64(cfg.seed ^ 0xABCDEF1234567890ULL));
        std::shuffle(idx.begin(), idx.end(), sub_rng);
        idx.resize(cfg.max_samples);
        for (int i : idx) {
            Cs.push_back(C[i]);
            ys.push_back(y[i]);
        }
    } else {
        Cs = C;
        ys = y;
    }

    std::vector<ExprTree> seeds = primitive_seeds(ctx);
    // fit the seeds' constants up front: an affine-wrapped primitive with
    // tuned constants must enter the gene pool (and archive) at full strength
    // or it loses every tournament before evolution can polish it
    for (ExprTree& s : seeds)
        s = optimize_constants(s, Cs, ys, cfg.constant_opt_steps);
    std::vector<Population> pops(cfg.n_populations);
    for (int p = 0; p < cfg.n_populations; ++p) {
        pops[p].rng.seed(splitmix64(cfg.seed + static_cast<std::uint64_t>(p) + 1));
        pops[p].members.resize(cfg.population_size);
        std::size_t n_seed = std::min(seeds.size(), pops[p].members.size() * 3 / 4);
        // offset per population so every seed lands somewhere even when the
        // seed list exceeds one population's quota
        std::size_t offset = seeds.empty() ? 0 : (p * n_seed) % seeds.size();
        for (std::size_t i = 0; i < pops[p].members.size(); ++i) {
            auto& m = pops[p].members[i];
            m.tree = i < n_seed ? seeds[(offset + i) % seeds.size()]
                                : grow(ctx, pops[p].rng, 4);
            score(m, ctx, Cs, ys);
        }
        pops[p].refresh_best();
    }

    std::mt19937_64 migration_rng(splitmix64(cfg.seed ^ 0x5151515151515151ULL));
    for (int iter = 0; iter < cfg.n_iterations; ++iter) {
        if (cfg.workers > 1 && cfg.n_populations > 1) {
            std::vector<std::thread> threads;
            std::size_t n_threads =
                std::min<std::size_t>(cfg.workers, pops.size());
            for (std::size_t w = 0; w < n_threads; ++w) {
                threads.emplace_back([&, w]() {
                    for (std::size_t p = w; p < pops.size(); p += n_threads)
                        evolve_iteration(pops[p], ctx, Cs, ys);
                });
            }
            for (auto& t : threads) t.join();
        } else {
            for (auto& pop : pops) evolve_iteration(pop, ctx, Cs, ys);
        }
        // elite migration: each population's champion replaces the worst
        // member of one (deterministically drawn) other population
        if (cfg.n_populations > 1) {
            for (int p = 0; p < cfg.n_populations; ++p) {
                int target = static_cast<int>(migration_rng() % cfg.n_populations);
                if (target == p) target = (target + 1) % cfg.n_populations;
                Indiv elite = pops[p].members[pops[p].best];
                int worst = 0;
                auto& tm = pops[target].members;
                for (std::size_t i = 1; i < tm.size(); ++i)
                    if (tm[i].fitness > tm[worst].fitness) worst = static_cast<int>(i);
                if (worst != pops[target].best) {
                    tm[worst] = std::move(elite);
                    pops[target].refresh_best();
                }
            }
        }
    }

    ParetoArchive merged;
    for (const auto& pop : pops)
        for (const auto& e : pop.archive.entries) merged.insert(e);

    for (ExprTree& t : small_var_trees(ctx, std::min(5, cfg.max_complexity))) {
        double loss = sr_loss(t, Cs, ys);
        if (!std::isfinite(loss)) continue;
        int complexity = t.size();
        merged.insert({canonicalize(t), loss, complexity});
    }

    // refit constants on the full sample set and rebuild the archive with
    // full-data losses
    ParetoArchive final_archive;
    for (const auto& e : merged.entries) {
        ExprTree t = canonicalize(optimize_constants(e.tree, C, y, cfg.constant_opt_steps));
        double loss = sr_loss(t, C, y);
        int complexity = t.size();
        if (std::isfinite(loss)) final_archive.insert({std::move(t), loss, complexity});
    }
    if (final_archive.empty())
        throw InsufficientData("symbolic regression produced no finite candidate");
    return final_archive;
}

// ---------------------------------------------------------------------------
// Selection rules

const ParetoEntry& select_expression(const ParetoArchive& archive, SelectRule rule,
                                     double complexity_bound) {
    if (archive.empty()) throw EmptyArchive("empty Pareto archive");
    const auto& es = archive.entries;
    auto min_loss = [&](auto begin, auto end) -> const ParetoEntry& {
        const ParetoEntry* best = &*begin;
        for (auto it = begin; it != end; ++it)
            if (it->loss < best->loss ||
                (it->loss == best->loss && it->complexity < best->complexity))
                best = &*it;
        return *best;
    };
    switch (rule) {
        case SelectRule::MinLoss:
            return min_loss(es.begin(), es.end());
        case SelectRule::Bound: {
            const ParetoEntry* best = nullptr;
            for (const auto& e : es) {
                if (e.complexity > complexity_bound) continue;
                if (!best || e.loss < best->loss) best = &e;
            }
            if (!best) throw NoEntryUnderBound("no archive entry within complexity bound");
            return *best;
        }
        case SelectRule::Knee: {
            if (es.size() <= 2) return min_loss(es.begin(), es.end());
            double x1 = es.front().complexity, y1 = es.front().loss;
            double x2 = es.back().complexity, y2 = es.back().loss;
            const ParetoEntry* best = &es.front();
            double best_d = -1.0;
            for (const auto& e : es) {
                double cross = (x2 - x1) * (e.loss - y1) - (y2 - y1) * (e.complexity - x1);
                double d = std::abs(cross);
                if (d > best_d) {
                    best_d = d;
                    best = &e;
                }
            }
            return *best;
        }
    }
    throw ConfigError("unknown selection rule");
}

const ParetoEntry& select_by_best_score(const ParetoArchive& archive) {
    if (archive.empty()) throw EmptyArchive("empty Pareto archive");
    const auto& es = archive.entries;
    double min_loss = es.front().loss;
    for (const auto& e : es) min_loss = std::min(min_loss, e.loss);
    const double delta = 1e-12;
    const ParetoEntry* best = nullptr;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < es.size(); ++i) {
        if (es[i].loss > 1.5 * min_loss + delta) continue;
        double score = 0.0;
        if (i > 0) {
            double dc = es[i].complexity - es[i - 1].complexity;
            score = (std::log(es[i - 1].loss + delta) - std::log(es[i].loss + delta)) / dc;
        }
        if (score > best_score) {
            best_score = score;
            best = &es[i];
        }
    }
    return best ? *best : select_expression(archive, SelectRule::MinLoss);
}

// ---------------------------------------------------------------------------
// Archive io

void save_archive_csv(const ParetoArchive& archive, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "complexity,loss,expression\n";
    for (const auto& e : archive.entries)
        out << e.complexity << "," << format_number(e.loss) << ","
            << format_expression(e.tree) << "\n";
}

ParetoArchive load_archive_csv(const std::string& path, const Vocabulary& vocab,
                               const std::vector<std::string>& concept_names) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw EmptyFile("empty archive file: " + path);
    ParetoArchive archive;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t p1 = line.find(',');
        std::size_t p2 = line.find(',', p1 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos)
            throw SchemaMismatch("malformed archive row: " + line);
        ParetoEntry e;
        e.complexity = std::stoi(line.substr(0, p1));
        e.loss = std::stod(line.substr(p1 + 1, p2 - p1 - 1));
        e.tree = parse_expression(line.substr(p2 + 1), vocab, concept_names);
        bind_variables(e.tree, concept_names);
        archive.insert(std::move(e));
    }
    return archive;
}

}  // namespace mcbe
