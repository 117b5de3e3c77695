#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mcbe/errors.hpp"

namespace mcbe {

enum class OutputTransform : std::uint8_t { Identity, Sigmoid, Softmax };

std::vector<double> softmax(const std::vector<double>& logits);
double sigmoid(double z);

/// Fully connected network with leaky-rectifier hidden activations. Weights
/// are stored row-major per layer: W[l] has shape (sizes[l+1], sizes[l]).
struct DenseNet {
    std::vector<int> sizes;
    std::vector<std::vector<double>> W;
    std::vector<std::vector<double>> b;
    OutputTransform output = OutputTransform::Identity;
    double leaky_slope = 0.01;

    int input_width() const { return sizes.front(); }
    int output_width() const { return sizes.back(); }
    int n_layers() const { return static_cast<int>(W.size()); }

    /// Symmetric uniform init scaled by 1/sqrt(fan-in).
    static DenseNet make(const std::vector<int>& sizes, OutputTransform output,
                         std::mt19937_64& rng);

    /// Same shape, all parameters zero — used as a gradient accumulator.
    DenseNet zeros_like() const;

    std::vector<double> forward(const std::vector<double>& x) const;

    struct Cache {
        std::vector<std::vector<double>> act;  // act[0]=x, act[l+1]=post-activation
        std::vector<double> logits;            // final pre-transform output
    };
    std::vector<double> forward(const std::vector<double>& x, Cache& cache) const;

    /// Accumulates parameter gradients into `grad` given dL/d(logits) for the
    /// cached forward pass; optionally returns dL/dx.
    void backward(const Cache& cache, const std::vector<double>& dlogits, DenseNet& grad,
                  std::vector<double>* dx = nullptr) const;
};

/// Flat AdamW with decoupled weight decay over a pointer-gathered parameter
/// set; `frozen[i]` pins parameter i at its current value (used by hardened
/// linear experts, where that value is exactly 0).
struct AdamW {
    double lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;

    std::vector<double> m, v;
    long t = 0;

    explicit AdamW(double learning_rate) : lr(learning_rate) {}

    /// `decay[i]` selects which parameters receive weight decay (weight
    /// matrices only by convention); null applies decay to all.
    void step(const std::vector<double*>& params, const std::vector<double>& grads,
              const std::vector<std::uint8_t>* frozen = nullptr,
              const std::vector<std::uint8_t>* decay = nullptr);
};

}  // namespace mcbe
