#include "mcbe/nn.hpp"

#include <algorithm>
#include <cmath>

namespace mcbe {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (auto& o : out) o /= sum;
    return out;
}

DenseNet DenseNet::make(const std::vector<int>& sizes, OutputTransform output,
                        std::mt19937_64& rng) {
    if (sizes.size() < 2) throw DimensionMismatch("DenseNet needs at least two layer sizes");
    for (int s : sizes)
        if (s <= 0) throw DimensionMismatch("DenseNet layer sizes must be positive");
    DenseNet net;
    net.sizes = sizes;
    net.output = output;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        int fan_in = sizes[l];
        int fan_out = sizes[l + 1];
        double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-scale, scale);
        std::vector<double> w(static_cast<std::size_t>(fan_out) * fan_in);
        for (auto& x : w) x = dist(rng);
        net.W.push_back(std::move(w));
        net.b.push_back(std::vector<double>(fan_out, 0.0));
    }
    return net;
}

DenseNet DenseNet::zeros_like() const {
    DenseNet g = *this;
    for (auto& w : g.W) std::fill(w.begin(), w.end(), 0.0);
    for (auto& bb : g.b) std::fill(bb.begin(), bb.end(), 0.0);
    return g;
}

std::vector<double> DenseNet::forward(const std::vector<double>& x) const {
    Cache cache;
    return forward(x, cache);
}

std::vector<double> DenseNet::forward(const std::vector<double>& x, Cache& cache) const {
    if (static_cast<int>(x.size()) != input_width())
        throw DimensionMismatch("DenseNet input width mismatch");
    cache.act.clear();
    cache.act.push_back(x);
    std::vector<double> cur = x;
    for (int l = 0; l < n_layers(); ++l) {
        int in = sizes[l], out = sizes[l + 1];
        std::vector<double> next(out);
        for (int o = 0; o < out; ++o) {
            double z = b[l][o];
            const double* wrow = &W[l][static_cast<std::size_t>(o) * in];
            for (int i = 0; i < in; ++i) z += wrow[i] * cur[i];
            next[o] = z;
        }
        bool last = (l == n_layers() - 1);
        if (!last) {
            for (auto& z : next)
                if (z < 0.0) z *= leaky_slope;
        } else {
            cache.logits = next;
        }
        cache.act.push_back(next);
        cur = next;
    }
    switch (output) {
        case OutputTransform::Identity: return cur;
        case OutputTransform::Sigmoid: {
            for (auto& z : cur) z = sigmoid(z);
            return cur;
        }
        case OutputTransform::Softmax: return softmax(cur);
    }
    return cur;
}

void DenseNet::backward(const Cache& cache, const std::vector<double>& dlogits,
                        DenseNet& grad, std::vector<double>* dx) const {
    if (static_cast<int>(dlogits.size()) != output_width())
        throw DimensionMismatch("DenseNet backward width mismatch");
    std::vector<double> delta = dlogits;  // dL/d(pre-activation of layer l)
    for (int l = n_layers() - 1; l >= 0; --l) {
        int in = sizes[l], out = sizes[l + 1];
        // cache.act[l] is the input of layer l (post-activation of l-1)
        const std::vector<double>& a = cache.act[l];
        for (int o = 0; o < out; ++o) {
            grad.b[l][o] += delta[o];
            double* grow = &grad.W[l][static_cast<std::size_t>(o) * in];
            for (int i = 0; i < in; ++i) grow[i] += delta[o] * a[i];
        }
        if (l == 0 && !dx) break;
        std::vector<double> prev(in, 0.0);
        for (int o = 0; o < out; ++o) {
            const double* wrow = &W[l][static_cast<std::size_t>(o) * in];
            for (int i = 0; i < in; ++i) prev[i] += wrow[i] * delta[o];
        }
        if (l > 0) {
            // chain through the leaky rectifier of layer l-1; act[l] holds its output
            for (int i = 0; i < in; ++i)
                if (cache.act[l][i] < 0.0) prev[i] *= leaky_slope;
        }
        delta = std::move(prev);
    }
    if (dx) *dx = delta;
}

void AdamW::step(const std::vector<double*>& params, const std::vector<double>& grads,
                 const std::vector<std::uint8_t>* frozen,
                 const std::vector<std::uint8_t>* decay) {
    if (params.size() != grads.size())
        throw DimensionMismatch("AdamW parameter/gradient count mismatch");
    if (m.size() != params.size()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
        t = 0;
    }
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (frozen && (*frozen)[i]) continue;
        double g = grads[i];
        if (!std::isfinite(g)) throw NumericalError("non-finite gradient in AdamW step");
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        double wd = (!decay || (*decay)[i]) ? weight_decay : 0.0;
        *params[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * *params[i]);
    }
}

}  // namespace mcbe
