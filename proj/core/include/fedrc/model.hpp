#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedrc/rng.hpp"

namespace fedrc {

enum class Architecture { linear, mlp };

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& name);

// Architecture of every cluster model. With shared_trunk the hidden layers
// form one block common to all clusters and only the output head is
// per-cluster.
struct ModelSpec {
    Architecture architecture = Architecture::linear;
    std::vector<std::size_t> hidden;  // mlp only
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    bool shared_trunk = false;

    void validate() const;
    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Flat parameters of one cluster model.
//
// Layout: trunk block first, then the head.
//   trunk: for each hidden layer l: W_l (rows = width_l, cols = width_{l-1}, row-major), b_l
//   head:  W_out (num_classes x last_width, row-major), b_out
// A linear model has an empty trunk. Hidden units use tanh.
using ParamVector = std::vector<double>;

// Softmax classifier: f(x, y, theta) = -ln softmax(m(x, theta))[y].
// Stateless; all methods are safe to call concurrently.
class Model {
public:
    explicit Model(ModelSpec spec);

    const ModelSpec& spec() const noexcept { return spec_; }
    std::size_t num_params() const noexcept { return trunk_size_ + head_size_; }
    std::size_t trunk_size() const noexcept { return trunk_size_; }
    std::size_t head_size() const noexcept { return head_size_; }
    std::size_t num_classes() const noexcept { return spec_.num_classes; }
    std::size_t input_dim() const noexcept { return spec_.input_dim; }

    double loss(std::span<const double> x, int y, std::span<const double> params) const;

    // grad += weight * d loss / d params. Returns the loss.
    double accumulate_gradient(std::span<const double> x, int y, std::span<const double> params,
                               double weight, std::span<double> grad) const;

    ParamVector loss_gradient(std::span<const double> x, int y,
                              std::span<const double> params) const;

    std::vector<double> class_probabilities(std::span<const double> x,
                                            std::span<const double> params) const;
    void class_probabilities(std::span<const double> x, std::span<const double> params,
                             std::span<double> out) const;

    // Uniform in [-s, s] with s = 1/sqrt(fan_in) for weights and biases.
    ParamVector initialize(Rng& rng) const;

private:
    struct Layer {
        std::size_t in = 0;
        std::size_t out = 0;
        std::size_t offset = 0;  // start of W; b follows W
    };

    void check(std::span<const double> x, int y, std::span<const double> params) const;
    void check(std::span<const double> x, std::span<const double> params) const;
    // Fills activations (per hidden layer) and logits.
    void forward(std::span<const double> x, std::span<const double> params,
                 std::vector<std::vector<double>>& acts, std::vector<double>& logits) const;

    ModelSpec spec_;
    std::vector<Layer> layers_;  // hidden layers then output
    std::size_t trunk_size_ = 0;
    std::size_t head_size_ = 0;
};

// Sums the trunk slice of every listed gradient and writes the sum back into
// each of them, so a shared trunk receives the total chain-rule contribution of
// all clusters and stays identical after the update.
void tie_trunk_gradients(const Model& model, std::span<ParamVector* const> grads);

bool all_finite(std::span<const double> values);

}  // namespace fedrc
