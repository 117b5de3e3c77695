#include "mcbe/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mcbe {

// ---------------------------------------------------------------------------
// Expert construction

Expert Expert::linear(int k, int outputs, std::mt19937_64& rng) {
    Expert e;
    e.kind = ExpertKind::Linear;
    e.in_width = k;
    e.out_width = outputs;
    double scale = 1.0 / std::sqrt(static_cast<double>(k));
    std::uniform_real_distribution<double> dist(-scale, scale);
    e.W.resize(static_cast<std::size_t>(outputs) * k);
    for (auto& w : e.W) w = dist(rng);
    e.b.assign(outputs, 0.0);
    e.frozen.assign(e.W.size(), 0);
    return e;
}

Expert Expert::dense(const std::vector<int>& sizes, std::mt19937_64& rng) {
    Expert e;
    e.kind = ExpertKind::Dense;
    e.net = DenseNet::make(sizes, OutputTransform::Identity, rng);
    e.in_width = e.net.input_width();
    e.out_width = e.net.output_width();
    return e;
}

static Expert tree_expert(ExpertKind kind, std::vector<ExprTree> trees,
                          const std::vector<std::string>& concept_names) {
    Expert e;
    e.kind = kind;
    e.in_width = static_cast<int>(concept_names.size());
    e.out_width = static_cast<int>(trees.size());
    e.trees = std::move(trees);
    for (auto& t : e.trees) {
        bind_variables(t, concept_names);
        if (kind == ExpertKind::Prior)
            for (auto& n : t.nodes)
                if (n.kind == NodeKind::Param) n.trainable = false;
    }
    return e;
}

Expert Expert::symbolic(std::vector<ExprTree> trees,
                        const std::vector<std::string>& concept_names) {
    return tree_expert(ExpertKind::Symbolic, std::move(trees), concept_names);
}

Expert Expert::prior(std::vector<ExprTree> trees,
                     const std::vector<std::string>& concept_names) {
    return tree_expert(ExpertKind::Prior, std::move(trees), concept_names);
}

int Expert::output_width(int k) const {
    (void)k;
    return out_width;
}

// ---------------------------------------------------------------------------
// Forward operations

std::vector<double> encode_concepts(const MCBEModel& model, const std::vector<double>& x,
                                    bool hard) {
    if (static_cast<int>(x.size()) != model.feature_width())
        throw DimensionMismatch("encode_concepts: feature width mismatch");
    std::vector<double> c = model.encoder.net.forward(x);
    if (model.encoder.kind == ConceptKind::Binary && hard) {
        // Exact ties at the threshold snap down to 0.
        for (auto& v : c) v = v > model.encoder.binary_threshold ? 1.0 : 0.0;
    }
    return c;
}

std::vector<double> select_weights(const MCBEModel& model, const std::vector<double>& x,
                                   double temperature, SelectMode mode,
                                   std::uint64_t seed) {
    std::vector<double> logits = model.selector.net.forward(x);
    switch (mode) {
        case SelectMode::Argmax: {
            std::vector<double> w(logits.size(), 0.0);
            std::size_t best = 0;
            for (std::size_t i = 1; i < logits.size(); ++i)
                if (logits[i] > logits[best]) best = i;
            w[best] = 1.0;
            return w;
        }
        case SelectMode::Soft: {
            if (temperature <= 0.0) throw ConfigError("temperature must be positive");
            for (auto& l : logits) l /= temperature;
            return softmax(logits);
        }
        case SelectMode::Gumbel: {
            if (temperature <= 0.0) throw ConfigError("temperature must be positive");
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> unit(
                std::numeric_limits<double>::min(), 1.0);
            for (auto& l : logits) {
                double g = -std::log(-std::log(unit(rng)));
                l = (l + g) / temperature;
            }
            return softmax(logits);
        }
    }
    return {};
}

std::vector<double> expert_output(const Expert& expert, const std::vector<double>& c) {
    if (static_cast<int>(c.size()) != expert.in_width)
        throw DimensionMismatch("expert_output: concept width mismatch");
    switch (expert.kind) {
        case ExpertKind::Linear: {
            std::vector<double> out(expert.out_width);
            for (int o = 0; o < expert.out_width; ++o) {
                double z = expert.b[o];
                const double* row = &expert.W[static_cast<std::size_t>(o) * expert.in_width];
                for (int i = 0; i < expert.in_width; ++i) z += row[i] * c[i];
                out[o] = z;
            }
            return out;
        }
        case ExpertKind::Dense:
            return expert.net.forward(c);
        case ExpertKind::Symbolic:
        case ExpertKind::Prior: {
            std::vector<double> out;
            out.reserve(expert.trees.size());
            for (const auto& t : expert.trees)
                out.push_back(evaluate_indexed(t, c.data(), static_cast<int>(c.size())));
            return out;
        }
    }
    return {};
}

Prediction predict(const MCBEModel& model, const std::vector<double>& x, SelectMode mode,
                   double temperature, std::uint64_t seed, bool hard_concepts) {
    Prediction p;
    p.c_hat = encode_concepts(model, x, hard_concepts);
    p.weights = select_weights(model, x, temperature, mode, seed);
    p.expert_outputs.reserve(model.experts.size());
    for (const auto& e : model.experts) p.expert_outputs.push_back(expert_output(e, p.c_hat));

    std::size_t width = p.expert_outputs.front().size();
    p.y.assign(width, 0.0);
    if (model.task_kind == TaskKind::Regression) {
        for (std::size_t m = 0; m < p.expert_outputs.size(); ++m)
            for (std::size_t j = 0; j < width; ++j)
                p.y[j] += p.weights[m] * p.expert_outputs[m][j];
    } else {
        // Mixture over per-expert class distributions.
        for (std::size_t m = 0; m < p.expert_outputs.size(); ++m) {
            if (p.weights[m] == 0.0) continue;
            std::vector<double> q = softmax(p.expert_outputs[m]);
            for (std::size_t j = 0; j < width; ++j) p.y[j] += p.weights[m] * q[j];
        }
        p.label = static_cast<int>(
            std::max_element(p.y.begin(), p.y.end()) - p.y.begin());
    }
    return p;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization

namespace {

using nlohmann::ordered_json;

ordered_json net_to_json(const DenseNet& net) {
    ordered_json j;
    j["sizes"] = net.sizes;
    j["output"] = net.output == OutputTransform::Identity  ? "identity"
                  : net.output == OutputTransform::Sigmoid ? "sigmoid"
                                                           : "softmax";
    j["leaky_slope"] = net.leaky_slope;
    ordered_json layers = ordered_json::array();
    for (int l = 0; l < net.n_layers(); ++l) {
        ordered_json layer;
        layer["W"] = net.W[l];
        layer["b"] = net.b[l];
        layers.push_back(layer);
    }
    j["layers"] = layers;
    return j;
}

DenseNet net_from_json(const ordered_json& j) {
    DenseNet net;
    net.sizes = j.at("sizes").get<std::vector<int>>();
    std::string out = j.at("output").get<std::string>();
    net.output = out == "identity"  ? OutputTransform::Identity
                 : out == "sigmoid" ? OutputTransform::Sigmoid
                                    : OutputTransform::Softmax;
    net.leaky_slope = j.at("leaky_slope").get<double>();
    for (const auto& layer : j.at("layers")) {
        net.W.push_back(layer.at("W").get<std::vector<double>>());
        net.b.push_back(layer.at("b").get<std::vector<double>>());
    }
    if (net.W.size() + 1 != net.sizes.size())
        throw SchemaMismatch("checkpoint: layer count does not match sizes");
    return net;
}

ordered_json expert_to_json(const Expert& e) {
    ordered_json j;
    switch (e.kind) {
        case ExpertKind::Linear:
            j["kind"] = "linear";
            j["in_width"] = e.in_width;
            j["out_width"] = e.out_width;
            j["W"] = e.W;
            j["b"] = e.b;
            j["frozen"] = e.frozen;
            break;
        case ExpertKind::Dense:
            j["kind"] = "dense";
            j["net"] = net_to_json(e.net);
            break;
        case ExpertKind::Symbolic:
        case ExpertKind::Prior: {
            j["kind"] = e.kind == ExpertKind::Symbolic ? "symbolic" : "prior";
            ordered_json exprs = ordered_json::array();
            for (const auto& t : e.trees) exprs.push_back(format_expression(t));
            j["expressions"] = exprs;
            break;
        }
    }
    return j;
}

Expert expert_from_json(const ordered_json& j, const std::vector<std::string>& names) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "linear") {
        Expert e;
        e.kind = ExpertKind::Linear;
        e.in_width = j.at("in_width").get<int>();
        e.out_width = j.at("out_width").get<int>();
        e.W = j.at("W").get<std::vector<double>>();
        e.b = j.at("b").get<std::vector<double>>();
        e.frozen = j.at("frozen").get<std::vector<std::uint8_t>>();
        if (e.W.size() != static_cast<std::size_t>(e.in_width) * e.out_width ||
            e.frozen.size() != e.W.size() ||
            e.b.size() != static_cast<std::size_t>(e.out_width))
            throw SchemaMismatch("checkpoint: linear expert shape mismatch");
        return e;
    }
    if (kind == "dense") {
        Expert e;
        e.kind = ExpertKind::Dense;
        e.net = net_from_json(j.at("net"));
        e.in_width = e.net.input_width();
        e.out_width = e.net.output_width();
        return e;
    }
    if (kind == "symbolic" || kind == "prior") {
        auto vocab = Vocabulary::named("complete");
        std::vector<ExprTree> trees;
        for (const auto& s : j.at("expressions"))
            trees.push_back(parse_expression(s.get<std::string>(), vocab, names));
        return kind == "symbolic" ? Expert::symbolic(std::move(trees), names)
                                  : Expert::prior(std::move(trees), names);
    }
    throw SchemaMismatch("checkpoint: unknown expert kind '" + kind + "'");
}

}  // namespace

nlohmann::ordered_json checkpoint_to_json(const MCBEModel& model) {
    ordered_json j;
    j["format"] = "mcbe-checkpoint-v1";
    j["task_kind"] = model.task_kind == TaskKind::Regression ? "regression"
                                                             : "classification";
    j["concept_kind"] =
        model.encoder.kind == ConceptKind::Binary ? "binary" : "continuous";
    j["concept_names"] = model.concept_names;
    j["binary_threshold"] = model.encoder.binary_threshold;
    j["seed"] = model.seed;
    j["encoder"] = net_to_json(model.encoder.net);
    j["selector"] = net_to_json(model.selector.net);
    ordered_json experts = ordered_json::array();
    for (const auto& e : model.experts) experts.push_back(expert_to_json(e));
    j["experts"] = experts;
    return j;
}

MCBEModel checkpoint_from_json(const nlohmann::ordered_json& j) {
    MCBEModel m;
    m.task_kind = j.at("task_kind").get<std::string>() == "classification"
                      ? TaskKind::Classification
                      : TaskKind::Regression;
    m.concept_names = j.at("concept_names").get<std::vector<std::string>>();
    m.encoder.kind = j.at("concept_kind").get<std::string>() == "binary"
                         ? ConceptKind::Binary
                         : ConceptKind::Continuous;
    m.encoder.binary_threshold = j.at("binary_threshold").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.encoder.net = net_from_json(j.at("encoder"));
    m.selector.net = net_from_json(j.at("selector"));
    for (const auto& e : j.at("experts"))
        m.experts.push_back(expert_from_json(e, m.concept_names));
    if (m.experts.empty()) throw SchemaMismatch("checkpoint: no experts");
    if (m.selector.net.output_width() != m.n_experts())
        throw SchemaMismatch("checkpoint: selector width != expert count");
    return m;
}

void save_checkpoint(const MCBEModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << checkpoint_to_json(model).dump(2) << "\n";
}

MCBEModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read checkpoint: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaMismatch(std::string("checkpoint parse error: ") + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace mcbe
