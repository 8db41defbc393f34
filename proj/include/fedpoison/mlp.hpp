#pragma once

#include <cstdint>
#include <vector>

#include "fedpoison/data.hpp"
#include "fedpoison/param_vector.hpp"

namespace fedpoison {

enum class Loss { CrossEntropy, SquaredError };

struct ModelSpec {
    std::vector<int> layer_widths{196, 64, 10};  // input, hidden..., classes
    Loss loss = Loss::CrossEntropy;
    std::uint64_t init_seed = 0;
};

struct TrainConfig {
    double client_lr = 0.1;
    int local_epochs = 1;
    int batch_size = 32;
    double server_lr = 1.0;
    int rounds = 100;
};

// Fully connected ReLU network over a flat ParamVector. Layer l stores its
// weight matrix (out x in, column-major) followed by its bias.
class Mlp {
public:
    explicit Mlp(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    std::size_t num_params() const { return num_params_; }
    int input_dim() const { return spec_.layer_widths.front(); }
    int num_classes() const { return spec_.layer_widths.back(); }

    // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    ParamVector init_params(std::uint64_t seed) const;

    // Mean loss over rows of X (n x input_dim, row-major). Fills grad if non-null.
    double loss_and_grad(const ParamVector& w, const double* X, const int* y, std::size_t n,
                         ParamVector* grad) const;
    double loss(const ParamVector& w, const Dataset& ds) const;
    // Output-layer scores for each row (n x classes, row-major).
    std::vector<double> logits(const ParamVector& w, const double* X, std::size_t n) const;
    std::vector<int> predict(const ParamVector& w, const double* X, std::size_t n) const;
    std::vector<int> predict(const ParamVector& w, const Dataset& ds) const;

    struct Layer {
        std::vector<double> weight;  // out x in, column-major
        std::vector<double> bias;
        int in = 0, out = 0;
    };
    std::vector<Layer> unflatten(const ParamVector& w) const;
    ParamVector flatten(const std::vector<Layer>& layers) const;

private:
    ModelSpec spec_;
    std::size_t num_params_ = 0;
    std::vector<std::size_t> offsets_;
};

// Runs local SGD from w and returns the mean gradient along the trajectory,
// (w - w_after) / (client_lr * steps). Zero epochs give the zero vector.
ParamVector local_train(const Mlp& model, const ParamVector& w, const Dataset& shard, const TrainConfig& cfg,
                        std::uint64_t seed);

struct Accuracy {
    double ma = 0.0;
    double ba = 0.0;
};

// BA counts triggered test examples whose true label differs from the target.
Accuracy evaluate(const Mlp& model, const ParamVector& w, const Dataset& test, const TriggerSpec* trig);

}  // namespace fedpoison
