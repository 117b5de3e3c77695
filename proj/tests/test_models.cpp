#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mcbe/models.hpp"

using namespace mcbe;

namespace {

MCBEModel toy_model(int d, int k, int M, std::uint64_t seed,
                    std::vector<std::string> names) {
    std::mt19937_64 rng(seed);
    MCBEModel m;
    m.concept_names = std::move(names);
    m.encoder.net = DenseNet::make({d, 4, k}, OutputTransform::Identity, rng);
    m.selector.net = DenseNet::make({d, 4, M}, OutputTransform::Identity, rng);
    for (int i = 0; i < M; ++i) m.experts.push_back(Expert::linear(k, 1, rng));
    return m;
}

// Selector producing fixed logits regardless of input: zero weights, bias =
// logits.
void pin_selector(MCBEModel& m, const std::vector<double>& logits) {
    for (auto& w : m.selector.net.W.back()) w = 0.0;
    for (auto& layer : m.selector.net.W) std::fill(layer.begin(), layer.end(), 0.0);
    for (auto& layer : m.selector.net.b) std::fill(layer.begin(), layer.end(), 0.0);
    m.selector.net.b.back() = logits;
}

}  // namespace

TEST_CASE("DenseNet forward shapes and transforms") {
    std::mt19937_64 rng(1);
    auto net = DenseNet::make({3, 5, 2}, OutputTransform::Identity, rng);
    std::vector<double> out = net.forward({0.1, -0.2, 0.3});
    CHECK(out.size() == 2);
    CHECK_THROWS_AS(net.forward({0.1}), DimensionMismatch);

    auto sig = DenseNet::make({2, 2}, OutputTransform::Sigmoid, rng);
    for (auto& w : sig.W[0]) w = 0.0;
    std::vector<double> so = sig.forward({5.0, -5.0});
    CHECK(so[0] == doctest::Approx(0.5));

    auto soft = DenseNet::make({2, 3}, OutputTransform::Softmax, rng);
    std::vector<double> p = soft.forward({0.4, 0.6});
    double sum = p[0] + p[1] + p[2];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("DenseNet backward matches finite differences") {
    std::mt19937_64 rng(7);
    auto net = DenseNet::make({3, 5, 4, 2}, OutputTransform::Identity, rng);
    std::vector<double> x = {0.3, -0.7, 1.1};
    // loss = sum of outputs, dL/dlogits = 1
    DenseNet::Cache cache;
    net.forward(x, cache);
    DenseNet grad = net.zeros_like();
    std::vector<double> dx;
    net.backward(cache, {1.0, 1.0}, grad, &dx);

    const double h = 1e-6;
    auto loss = [&](const DenseNet& n) {
        auto out = n.forward(x);
        return out[0] + out[1];
    };
    for (int l = 0; l < net.n_layers(); ++l) {
        for (std::size_t i = 0; i < net.W[l].size(); i += 3) {
            DenseNet lo = net, hi = net;
            lo.W[l][i] -= h;
            hi.W[l][i] += h;
            double fd = (loss(hi) - loss(lo)) / (2 * h);
            CHECK(grad.W[l][i] == doctest::Approx(fd).epsilon(1e-4));
        }
        for (std::size_t i = 0; i < net.b[l].size(); ++i) {
            DenseNet lo = net, hi = net;
            lo.b[l][i] -= h;
            hi.b[l][i] += h;
            double fd = (loss(hi) - loss(lo)) / (2 * h);
            CHECK(grad.b[l][i] == doctest::Approx(fd).epsilon(1e-4));
        }
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto lo = x, hi = x;
        lo[i] -= h;
        hi[i] += h;
        auto o1 = net.forward(lo);
        auto o2 = net.forward(hi);
        double fd = (o2[0] + o2[1] - o1[0] - o1[1]) / (2 * h);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("AdamW minimizes a quadratic and honors the frozen mask") {
    std::vector<double> theta = {5.0, -3.0};
    std::vector<double*> params = {&theta[0], &theta[1]};
    AdamW opt(0.05);
    opt.weight_decay = 0.0;
    std::vector<std::uint8_t> frozen = {0, 1};
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> g = {2.0 * (theta[0] - 1.0), 2.0 * (theta[1] + 2.0)};
        opt.step(params, g, &frozen);
    }
    CHECK(theta[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(theta[1] == -3.0);  // frozen stays bit-identical
}

TEST_CASE("encode_concepts") {
    std::mt19937_64 rng(3);
    MCBEModel m = toy_model(2, 2, 1, 3, {"a", "b"});
    SUBCASE("binary ties at 0.5 snap to 0") {
        m.encoder.net = DenseNet::make({2, 2}, OutputTransform::Sigmoid, rng);
        std::fill(m.encoder.net.W[0].begin(), m.encoder.net.W[0].end(), 0.0);
        m.encoder.kind = ConceptKind::Binary;
        auto c = encode_concepts(m, {0.7, -0.3}, true);
        CHECK(c == std::vector<double>{0.0, 0.0});
        auto soft = encode_concepts(m, {0.7, -0.3}, false);
        CHECK(soft[0] == doctest::Approx(0.5));
    }
    SUBCASE("identity continuous encoder") {
        m.encoder.net = DenseNet::make({2, 2}, OutputTransform::Identity, rng);
        m.encoder.net.W[0] = {1.0, 0.0, 0.0, 1.0};
        m.encoder.net.b[0] = {0.0, 0.0};
        auto c = encode_concepts(m, {0.25, -1.5}, false);
        CHECK(c == std::vector<double>{0.25, -1.5});
    }
    CHECK_THROWS_AS(encode_concepts(m, {1.0, 2.0, 3.0}, false), DimensionMismatch);
}

TEST_CASE("select_weights") {
    MCBEModel m = toy_model(1, 1, 2, 11, {"a"});
    SUBCASE("soft symmetry") {
        pin_selector(m, {0.0, 0.0});
        auto w = select_weights(m, {0.5}, 1.0, SelectMode::Soft);
        CHECK(w[0] == doctest::Approx(0.5));
        CHECK(w[1] == doctest::Approx(0.5));
    }
    SUBCASE("argmax one-hot, scale invariant, ties to lowest index") {
        pin_selector(m, {10.0, 0.0});
        CHECK(select_weights(m, {0.5}, 1.0, SelectMode::Argmax) ==
              std::vector<double>{1.0, 0.0});
        pin_selector(m, {0.001, 0.0005});
        auto w1 = select_weights(m, {0.5}, 1.0, SelectMode::Argmax);
        pin_selector(m, {1000.0, 500.0});
        auto w2 = select_weights(m, {0.5}, 1.0, SelectMode::Argmax);
        CHECK(w1 == w2);
        pin_selector(m, {3.0, 3.0});
        CHECK(select_weights(m, {0.5}, 1.0, SelectMode::Argmax) ==
              std::vector<double>{1.0, 0.0});
    }
    SUBCASE("probability vector and tau -> 0 sharpening") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> dist(-2.0, 2.0);
        for (int i = 0; i < 50; ++i) {
            pin_selector(m, {dist(rng), dist(rng)});
            auto w = select_weights(m, {0.5}, 0.7, SelectMode::Soft);
            CHECK(w[0] >= 0.0);
            CHECK(w[1] >= 0.0);
            CHECK(w[0] + w[1] == doctest::Approx(1.0).epsilon(1e-9));
        }
        pin_selector(m, {1.0, 0.0});
        auto w = select_weights(m, {0.5}, 1e-3, SelectMode::Soft);
        CHECK(w[0] > 0.999);
    }
    SUBCASE("gumbel empirical frequency matches the softmax") {
        pin_selector(m, {1.0, 0.0});
        int hits = 0;
        const int draws = 100000;
        for (int s = 0; s < draws; ++s) {
            auto w = select_weights(m, {0.5}, 0.05, SelectMode::Gumbel, s);
            if (w[0] > w[1]) ++hits;
        }
        double freq = static_cast<double>(hits) / draws;
        double expected = 1.0 / (1.0 + std::exp(-1.0));  // softmax_0(1,0)
        CHECK(std::abs(freq - expected) < 0.01);
    }
    SUBCASE("temperature must be positive") {
        CHECK_THROWS_AS(select_weights(m, {0.5}, 0.0, SelectMode::Soft), ConfigError);
    }
}

TEST_CASE("expert_output") {
    std::mt19937_64 rng(2);
    SUBCASE("linear") {
        Expert e = Expert::linear(2, 1, rng);
        e.W = {1.0, -1.0};
        e.b = {0.0};
        CHECK(expert_output(e, {3.0, 1.0}) == std::vector<double>{2.0});
        e.frozen = {0, 1};
        e.W[1] = 0.0;  // frozen entries are zero and contribute nothing
        CHECK(expert_output(e, {3.0, 1.0}) == std::vector<double>{3.0});
    }
    SUBCASE("prior pendulum tree") {
        auto vocab = Vocabulary::named("complete");
        std::vector<std::string> names = {"theta", "phi"};
        auto tree = parse_expression("8.0*sin(theta) + 10.0", vocab, names);
        Expert e = Expert::prior({tree}, names);
        auto out = expert_output(e, {M_PI / 2.0, 0.0});
        CHECK(out[0] == doctest::Approx(18.0));
    }
    SUBCASE("symbolic product") {
        auto vocab = Vocabulary::named("complete");
        std::vector<std::string> names = {"first", "second"};
        auto tree = parse_expression("first*second", vocab, names);
        Expert e = Expert::symbolic({tree}, names);
        CHECK(expert_output(e, {3.0, 4.0})[0] == doctest::Approx(12.0));
    }
    SUBCASE("dimension mismatch") {
        Expert e = Expert::linear(2, 1, rng);
        CHECK_THROWS_AS(expert_output(e, {1.0}), DimensionMismatch);
    }
}

TEST_CASE("predict") {
    SUBCASE("mixture of two constant experts") {
        std::vector<std::string> names = {"a"};
        auto vocab = Vocabulary::named("complete");
        MCBEModel m = toy_model(1, 1, 2, 17, names);
        m.experts.clear();
        m.experts.push_back(Expert::prior({parse_expression("0.0", vocab, names)}, names));
        m.experts.push_back(Expert::prior({parse_expression("10.0", vocab, names)}, names));
        pin_selector(m, {0.0, 0.0});
        Prediction p = predict(m, {0.3}, SelectMode::Soft, 1.0);
        CHECK(p.y[0] == doctest::Approx(5.0));
        pin_selector(m, {0.0, 3.0});
        Prediction pa = predict(m, {0.3}, SelectMode::Argmax);
        CHECK(pa.y[0] == pa.expert_outputs[1][0]);  // argmax selects expert 1 exactly
    }
    SUBCASE("M=1 is bit-identical to the single expert on encoded concepts") {
        MCBEModel m = toy_model(3, 2, 1, 23, {"a", "b"});
        std::vector<double> x = {0.4, -0.9, 1.3};
        Prediction p = predict(m, x, SelectMode::Argmax);
        std::vector<double> direct =
            expert_output(m.experts[0], encode_concepts(m, x, true));
        CHECK(p.y == direct);
        CHECK(p.weights == std::vector<double>{1.0});
    }
}

TEST_CASE("checkpoint round trip") {
    std::mt19937_64 rng(99);
    MCBEModel m = toy_model(3, 2, 3, 31, {"a", "b"});
    auto vocab = Vocabulary::named("complete");
    m.experts[1] = Expert::dense({2, 4, 1}, rng);
    m.experts[2] =
        Expert::symbolic({parse_expression("1.5*a + sin(b)", vocab, m.concept_names)},
                         m.concept_names);
    m.seed = 123456789;

    auto j = checkpoint_to_json(m);
    MCBEModel back = checkpoint_from_json(j);
    CHECK(checkpoint_to_json(back) == j);

    std::vector<double> x = {0.2, -0.4, 0.8};
    Prediction p1 = predict(m, x, SelectMode::Argmax);
    Prediction p2 = predict(back, x, SelectMode::Argmax);
    CHECK(p1.y == p2.y);
    CHECK(p1.c_hat == p2.c_hat);
    CHECK(back.seed == m.seed);

    SUBCASE("file round trip") {
        save_checkpoint(m, "/tmp/mcbe_test_ckpt.json");
        MCBEModel loaded = load_checkpoint("/tmp/mcbe_test_ckpt.json");
        CHECK(checkpoint_to_json(loaded) == j);
        CHECK_THROWS_AS(load_checkpoint("/tmp/does_not_exist_mcbe.json"), DataError);
    }
    SUBCASE("prior parameters reload as non-trainable") {
        MCBEModel pm = toy_model(2, 2, 1, 5, {"a", "b"});
        pm.experts[0] =
            Expert::prior({parse_expression("2.0*a", vocab, pm.concept_names)},
                          pm.concept_names);
        MCBEModel rt = checkpoint_from_json(checkpoint_to_json(pm));
        for (const auto& node : rt.experts[0].trees[0].nodes)
            if (node.kind == NodeKind::Param) CHECK(!node.trainable);
    }
}
