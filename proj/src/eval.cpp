#include "mcbe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mcbe {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

ExprTree linear_expert_tree(const Expert& expert, const std::vector<std::string>& names,
                            int output_row) {
    if (expert.kind != ExpertKind::Linear)
        throw ConfigError("linear_expert_tree: expert is not linear");
    int k = expert.in_width;
    const double* row = &expert.W[static_cast<std::size_t>(output_row) * k];
    ExprTree acc;
    for (int i = 0; i < k; ++i) {
        if (row[i] == 0.0) continue;  // hardened terms leave the expression
        ExprTree term = ExprTree::binary(OpCode::Mul, ExprTree::parameter(row[i]),
                                         ExprTree::variable(names[i], i));
        acc = acc.empty() ? std::move(term)
                          : ExprTree::binary(OpCode::Add, std::move(acc), std::move(term));
    }
    ExprTree bias = ExprTree::parameter(expert.b[output_row]);
    return acc.empty() ? std::move(bias)
                       : ExprTree::binary(OpCode::Add, std::move(acc), std::move(bias));
}

namespace {

// Linear experts are reported as a flat sum: one n-ary addition chaining the
// nonzero product terms and the bias, so w1*c1 + w2*c2 + b counts 8 nodes.
ComplexityProfile linear_expert_profile(const Expert& e, int output_row) {
    int k = e.in_width;
    const double* row = &e.W[static_cast<std::size_t>(output_row) * k];
    int terms = 0;
    for (int i = 0; i < k; ++i)
        if (row[i] != 0.0) ++terms;
    ComplexityProfile p;
    if (terms == 0) {
        p.node_count = p.depth = p.expression_complexity = p.weighted_node_count = 1;
        return p;
    }
    p.node_count = 3 * terms + 2;
    p.depth = 3;
    p.expression_complexity = p.node_count + 5 * terms + 1;
    p.total_vars = terms;
    p.total_ops = terms + 1;
    p.weighted_node_count = p.node_count;
    return p;
}

}  // namespace

int dense_unrolled_node_count(const DenseNet& net) {
    // Each unit's expression: in products (operator + parameter + input leaf),
    // `in` additions chaining them with the bias parameter, plus one
    // activation node on hidden layers.
    int total = 0;
    for (int l = 0; l < net.n_layers(); ++l) {
        int in = net.sizes[l];
        int out = net.sizes[l + 1];
        bool hidden = l != net.n_layers() - 1;
        int per_unit = 4 * in + 2 + (hidden ? 1 : 0);
        total += per_unit * out;
    }
    return total;
}

EvalReport evaluate_model(const MCBEModel& model, const ConceptDataset& ds) {
    if (ds.concept_dim() != model.n_concepts())
        throw DimensionMismatch("evaluate_model: concept schema mismatch");
    EvalReport rep;
    rep.classification = model.task_kind == TaskKind::Classification;
    rep.expert_usage.assign(model.n_experts(), 0.0);

    int n = ds.size();
    int errors = 0;
    double mae = 0.0, mse = 0.0, cmae = 0.0;
    int concept_hits = 0;
    for (int i = 0; i < n; ++i) {
        Prediction p = predict(model, ds.X[i], SelectMode::Argmax);
        int chosen = static_cast<int>(
            std::max_element(p.weights.begin(), p.weights.end()) - p.weights.begin());
        rep.expert_usage[chosen] += 1.0 / n;
        if (rep.classification) {
            if (p.label != static_cast<int>(ds.y[i])) ++errors;
        } else {
            double d = p.y[0] - ds.y[i];
            mae += std::abs(d) / n;
            mse += d * d / n;
        }
        for (int j = 0; j < model.n_concepts(); ++j) {
            double d = p.c_hat[j] - ds.C[i][j];
            cmae += std::abs(d) / (static_cast<double>(n) * model.n_concepts());
            if (p.c_hat[j] == ds.C[i][j]) ++concept_hits;
        }
    }
    rep.task_mae = mae;
    rep.task_mse = mse;
    rep.error_rate = static_cast<double>(errors) / n;
    rep.accuracy = 1.0 - rep.error_rate;
    rep.concept_mae = cmae;
    rep.concept_accuracy =
        static_cast<double>(concept_hits) / (static_cast<double>(n) * model.n_concepts());

    for (const auto& e : model.experts) {
        switch (e.kind) {
            case ExpertKind::Linear:
                for (int o = 0; o < e.out_width; ++o)
                    rep.complexity += linear_expert_profile(e, o);
                break;
            case ExpertKind::Symbolic:
            case ExpertKind::Prior:
                for (const auto& t : e.trees) rep.complexity += complexity_profile(t);
                break;
            case ExpertKind::Dense:
                rep.complexity.node_count += dense_unrolled_node_count(e.net);
                rep.complexity_approximate = true;
                break;
        }
    }
    return rep;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    if (r.classification) {
        j["error_rate"] = r.error_rate;
        j["accuracy"] = r.accuracy;
    } else {
        j["task_mae"] = r.task_mae;
        j["task_mse"] = r.task_mse;
    }
    j["concept_mae"] = r.concept_mae;
    j["concept_accuracy"] = r.concept_accuracy;
    j["expert_usage"] = r.expert_usage;
    nlohmann::ordered_json c;
    c["node_count"] = r.complexity.node_count;
    c["depth"] = r.complexity.depth;
    c["expression_complexity"] = r.complexity.expression_complexity;
    c["total_vars"] = r.complexity.total_vars;
    c["total_ops"] = r.complexity.total_ops;
    c["weighted_node_count"] = r.complexity.weighted_node_count;
    c["approximate"] = r.complexity_approximate;
    j["complexity"] = c;
    return j;
}

InterventionCurve intervention_curve(const MCBEModel& model, const ConceptDataset& ds,
                                     const std::vector<double>& p_list,
                                     std::uint64_t seed) {
    for (std::size_t i = 1; i < p_list.size(); ++i)
        if (p_list[i] <= p_list[i - 1])
            throw ConfigError("intervention p values must be strictly increasing");
    InterventionCurve curve;
    curve.seed = seed;
    int n = ds.size();
    for (std::size_t pi = 0; pi < p_list.size(); ++pi) {
        double p = p_list[pi];
        std::mt19937_64 rng(splitmix64(seed ^ (0x1000ULL + pi)));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double mae = 0.0;
        int errors = 0;
        for (int i = 0; i < n; ++i) {
            std::vector<double> c = encode_concepts(model, ds.X[i], true);
            for (int j = 0; j < model.n_concepts(); ++j)
                if (p >= 1.0 || unit(rng) < p) c[j] = ds.C[i][j];
            std::vector<double> w =
                select_weights(model, ds.X[i], 1.0, SelectMode::Argmax);
            int chosen = static_cast<int>(
                std::max_element(w.begin(), w.end()) - w.begin());
            std::vector<double> out = expert_output(model.experts[chosen], c);
            if (model.task_kind == TaskKind::Regression) {
                mae += std::abs(out[0] - ds.y[i]) / n;
            } else {
                std::vector<double> q = softmax(out);
                int label = static_cast<int>(
                    std::max_element(q.begin(), q.end()) - q.begin());
                if (label != static_cast<int>(ds.y[i])) ++errors;
            }
        }
        double metric = model.task_kind == TaskKind::Regression
                            ? mae
                            : static_cast<double>(errors) / n;
        curve.points.push_back({p, metric});
    }
    return curve;
}

std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points) {
    for (const auto& p : points)
        if (!std::isfinite(p.complexity) || !std::isfinite(p.error))
            throw ConfigError("pareto_front: non-finite point");
    std::sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
        return a.complexity < b.complexity ||
               (a.complexity == b.complexity && a.error < b.error);
    });
    std::vector<ParetoPoint> front;
    double best_error = std::numeric_limits<double>::infinity();
    double best_error_complexity = std::numeric_limits<double>::infinity();
    for (const auto& p : points) {
        bool dominated =
            best_error < p.error ||
            (best_error == p.error && best_error_complexity < p.complexity);
        if (!dominated) front.push_back(p);
        if (p.error < best_error) {
            best_error = p.error;
            best_error_complexity = p.complexity;
        }
    }
    return front;
}

ParetoPoint knee_point(const std::vector<ParetoPoint>& front) {
    if (front.empty()) throw EmptyArchive("knee_point: empty front");
    auto lowest_error = [&]() {
        ParetoPoint best = front.front();
        for (const auto& p : front)
            if (p.error < best.error ||
                (p.error == best.error && p.complexity < best.complexity))
                best = p;
        return best;
    };
    if (front.size() <= 2) return lowest_error();
    double x1 = front.front().complexity, y1 = front.front().error;
    double x2 = front.back().complexity, y2 = front.back().error;
    ParetoPoint best = front.front();
    double best_d = -1.0;
    for (const auto& p : front) {
        double cross = (x2 - x1) * (p.error - y1) - (y2 - y1) * (p.complexity - x1);
        double d = std::abs(cross);
        if (d > best_d) {
            best_d = d;
            best = p;
        }
    }
    return best;
}

TedReport ted_report(const MCBEModel& model, const std::vector<ExprTree>& ground_truth) {
    if (ground_truth.empty()) throw ConfigError("ted_report: no ground-truth trees");
    std::vector<ExprTree> expert_trees;
    for (const auto& e : model.experts) {
        switch (e.kind) {
            case ExpertKind::Symbolic:
            case ExpertKind::Prior:
                expert_trees.push_back(canonicalize(e.trees.front()));
                break;
            case ExpertKind::Linear:
                expert_trees.push_back(
                    canonicalize(linear_expert_tree(e, model.concept_names)));
                break;
            case ExpertKind::Dense:
                throw ConfigError("ted_report: Dense expert has no expression tree");
        }
    }
    std::vector<ExprTree> gt;
    for (const auto& t : ground_truth) gt.push_back(canonicalize(t));

    int ne = static_cast<int>(expert_trees.size());
    int ng = static_cast<int>(gt.size());
    int n = std::max(ne, ng);
    // cost matrix padded with empty trees: inserting/deleting a whole tree
    // costs its node count
    std::vector<std::vector<int>> cost(n, std::vector<int>(n, 0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i < ne && j < ng) cost[i][j] = tree_edit_distance(expert_trees[i], gt[j]);
            else if (i < ne) cost[i][j] = expert_trees[i].size();
            else if (j < ng) cost[i][j] = gt[j].size();
        }

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best_perm = perm;
    long best_total = std::numeric_limits<long>::max();
    do {
        long total = 0;
        for (int i = 0; i < n; ++i) total += cost[i][perm[i]];
        if (total < best_total) {
            best_total = total;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    TedReport rep;
    for (int i = 0; i < n; ++i) {
        rep.assignment.push_back(i < ne && best_perm[i] < ng ? best_perm[i] : -1);
        rep.pair_ted.push_back(cost[i][best_perm[i]]);
    }
    rep.mean_ted = static_cast<double>(best_total) / n;
    return rep;
}

namespace {

// Minimax line error over the x-sorted sample range [i..j]. For a fixed slope
// the optimal intercept centers the residuals, so the error is half the
// residual spread — convex in the slope, hence an exact ternary search.
double minimax_line_error(const std::vector<double>& xs, const std::vector<double>& ys,
                          int i, int j, double slope_bound) {
    auto half_spread = [&](double b) {
        double hi = -std::numeric_limits<double>::infinity();
        double lo = std::numeric_limits<double>::infinity();
        for (int t = i; t <= j; ++t) {
            double r = ys[t] - b * xs[t];
            hi = std::max(hi, r);
            lo = std::min(lo, r);
        }
        return (hi - lo) / 2.0;
    };
    double lo_b = -slope_bound, hi_b = slope_bound;
    for (int it = 0; it < 80; ++it) {
        double m1 = lo_b + (hi_b - lo_b) / 3.0;
        double m2 = hi_b - (hi_b - lo_b) / 3.0;
        if (half_spread(m1) <= half_spread(m2)) hi_b = m2;
        else lo_b = m1;
    }
    return half_spread((lo_b + hi_b) / 2.0);
}

// Greedy cover: minimal number of contiguous segments each fit by a minimax
// line within eps. Greedy is optimal because segment feasibility is monotone
// under shrinking.
int segments_needed(const std::vector<double>& xs, const std::vector<double>& ys,
                    double eps, int cap, double slope_bound) {
    int n = static_cast<int>(xs.size());
    int i = 0, segs = 0;
    while (i < n) {
        int hi = i, step = 1;
        while (hi < n - 1 &&
               minimax_line_error(xs, ys, i, std::min(n - 1, hi + step), slope_bound) <= eps) {
            hi = std::min(n - 1, hi + step);
            step *= 2;
        }
        int hi2 = std::min(n - 1, hi + step);
        while (hi < hi2) {
            int mid = (hi + hi2 + 1) / 2;
            if (minimax_line_error(xs, ys, i, mid, slope_bound) <= eps) hi = mid;
            else hi2 = mid - 1;
        }
        i = hi + 1;
        ++segs;
        if (segs > cap) return segs;
    }
    return segs;
}

}  // namespace

double piecewise_fit_sup_error(const std::vector<double>& xs,
                               const std::vector<double>& ys, int cells) {
    if (cells < 1) throw ConfigError("piecewise_fit_sup_error: cells must be >= 1");
    if (xs.size() != ys.size() || xs.empty())
        throw InsufficientData("piecewise_fit_sup_error: bad sample arrays");

    std::vector<int> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return xs[a] < xs[b]; });
    std::vector<double> sx, sy;
    sx.reserve(xs.size());
    sy.reserve(xs.size());
    for (int i : order) {
        sx.push_back(xs[i]);
        sy.push_back(ys[i]);
    }

    auto [ymin, ymax] = std::minmax_element(sy.begin(), sy.end());
    double span_x = sx.back() - sx.front();
    double slope_bound = span_x > 0.0 ? 4.0 * (*ymax - *ymin) / span_x + 1.0 : 1.0;

    // sup error of the best free-knot partition into `cells` pieces: binary
    // search on the error, checking feasibility with the greedy cover
    double lo = 0.0;
    double hi = minimax_line_error(sx, sy, 0, static_cast<int>(sx.size()) - 1, slope_bound);
    for (int it = 0; it < 50 && hi - lo > 1e-15; ++it) {
        double mid = (lo + hi) / 2.0;
        if (segments_needed(sx, sy, mid, cells, slope_bound) <= cells) hi = mid;
        else lo = mid;
    }
    return hi;
}

}  // namespace mcbe
