#include "fedrc/model.hpp"

#include <algorithm>
#include <cmath>

#include "fedrc/error.hpp"

namespace fedrc {

std::string to_string(Architecture a) { return a == Architecture::linear ? "linear" : "mlp"; }

Architecture parse_architecture(const std::string& name) {
    if (name == "linear") return Architecture::linear;
    if (name == "mlp") return Architecture::mlp;
    throw ConfigError("unknown architecture '" + name + "' (expected linear or mlp)");
}

void ModelSpec::validate() const {
    if (input_dim == 0) throw ConfigError("model input_dim must be positive");
    if (num_classes < 2) throw ConfigError("model num_classes must be at least 2");
    if (architecture == Architecture::mlp) {
        if (hidden.empty()) throw ConfigError("mlp model needs at least one hidden layer");
        for (auto h : hidden) {
            if (h == 0) throw ConfigError("mlp hidden widths must be positive");
        }
    } else if (!hidden.empty()) {
        throw ConfigError("linear model takes no hidden layers");
    }
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    std::size_t offset = 0;
    std::size_t width = spec_.input_dim;
    if (spec_.architecture == Architecture::mlp) {
        for (auto h : spec_.hidden) {
            layers_.push_back({width, h, offset});
            offset += h * width + h;
            width = h;
        }
    }
    trunk_size_ = offset;
    layers_.push_back({width, spec_.num_classes, offset});
    head_size_ = spec_.num_classes * width + spec_.num_classes;
}

void Model::check(std::span<const double> x, std::span<const double> params) const {
    if (x.size() != spec_.input_dim) {
        throw ConfigError("feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                          std::to_string(spec_.input_dim));
    }
    if (params.size() != num_params()) {
        throw ConfigError("parameter vector has " + std::to_string(params.size()) +
                          " entries, model expects " + std::to_string(num_params()));
    }
    if (!all_finite(params)) throw NumericError("model parameters contain NaN or Inf");
}

void Model::check(std::span<const double> x, int y, std::span<const double> params) const {
    check(x, params);
    if (y < 0 || static_cast<std::size_t>(y) >= spec_.num_classes) {
        throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(spec_.num_classes) + ")");
    }
}

void Model::forward(std::span<const double> x, std::span<const double> params,
                    std::vector<std::vector<double>>& acts, std::vector<double>& logits) const {
    acts.resize(layers_.size() - 1);
    std::span<const double> input = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        const double* w = params.data() + layer.offset;
        const double* b = w + layer.out * layer.in;
        std::vector<double>& out = (l + 1 == layers_.size()) ? logits : acts[l];
        out.resize(layer.out);
        for (std::size_t r = 0; r < layer.out; ++r) {
            double z = b[r];
            const double* row = w + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) z += row[c] * input[c];
            out[r] = (l + 1 == layers_.size()) ? z : std::tanh(z);
        }
        input = out;
    }
}

namespace {

// Softmax with max subtraction; returns log-sum-exp of the logits.
double softmax_inplace(std::span<double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (auto& e : v) {
        e = std::exp(e - m);
        s += e;
    }
    for (auto& e : v) e /= s;
    return m + std::log(s);
}

double log_sum_exp(std::span<const double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double e : v) s += std::exp(e - m);
    return m + std::log(s);
}

}  // namespace

double Model::loss(std::span<const double> x, int y, std::span<const double> params) const {
    check(x, y, params);
    std::vector<std::vector<double>> acts;
    std::vector<double> logits;
    forward(x, params, acts, logits);
    const double value = log_sum_exp(logits) - logits[static_cast<std::size_t>(y)];
    if (!std::isfinite(value)) throw NumericError("loss is not finite");
    return std::max(value, 0.0);
}

double Model::accumulate_gradient(std::span<const double> x, int y, std::span<const double> params,
                                  double weight, std::span<double> grad) const {
    check(x, y, params);
    if (grad.size() != num_params()) throw ConfigError("gradient buffer has wrong length");
    std::vector<std::vector<double>> acts;
    std::vector<double> logits;
    forward(x, params, acts, logits);
    const double logit_y = logits[static_cast<std::size_t>(y)];
    const double value = softmax_inplace(logits) - logit_y;
    if (!std::isfinite(value)) throw NumericError("loss is not finite");

    // delta = dloss/dz for the current layer, starting at the output.
    std::vector<double> delta = std::move(logits);
    delta[static_cast<std::size_t>(y)] -= 1.0;
    std::vector<double> next;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const Layer& layer = layers_[l];
        std::span<const double> input = (l == 0) ? x : std::span<const double>(acts[l - 1]);
        const double* w = params.data() + layer.offset;
        double* gw = grad.data() + layer.offset;
        double* gb = gw + layer.out * layer.in;
        for (std::size_t r = 0; r < layer.out; ++r) {
            const double d = weight * delta[r];
            gb[r] += d;
            double* grow = gw + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) grow[c] += d * input[c];
        }
        if (l == 0) break;
        next.assign(layer.in, 0.0);
        for (std::size_t r = 0; r < layer.out; ++r) {
            const double* row = w + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) next[c] += row[c] * delta[r];
        }
        const auto& a = acts[l - 1];
        for (std::size_t c = 0; c < layer.in; ++c) next[c] *= 1.0 - a[c] * a[c];
        delta.swap(next);
    }
    return std::max(value, 0.0);
}

ParamVector Model::loss_gradient(std::span<const double> x, int y,
                                 std::span<const double> params) const {
    ParamVector grad(num_params(), 0.0);
    accumulate_gradient(x, y, params, 1.0, grad);
    return grad;
}

void Model::class_probabilities(std::span<const double> x, std::span<const double> params,
                                std::span<double> out) const {
    check(x, params);
    if (out.size() != spec_.num_classes) throw ConfigError("probability buffer has wrong length");
    std::vector<std::vector<double>> acts;
    std::vector<double> logits;
    forward(x, params, acts, logits);
    softmax_inplace(logits);
    std::copy(logits.begin(), logits.end(), out.begin());
}

std::vector<double> Model::class_probabilities(std::span<const double> x,
                                               std::span<const double> params) const {
    std::vector<double> out(spec_.num_classes);
    class_probabilities(x, params, out);
    return out;
}

ParamVector Model::initialize(Rng& rng) const {
    ParamVector params(num_params());
    for (const Layer& layer : layers_) {
        const double s = 1.0 / std::sqrt(static_cast<double>(layer.in));
        std::uniform_real_distribution<double> dist(-s, s);
        const std::size_t n = layer.out * layer.in + layer.out;
        for (std::size_t i = 0; i < n; ++i) params[layer.offset + i] = dist(rng);
    }
    return params;
}

void tie_trunk_gradients(const Model& model, std::span<ParamVector* const> grads) {
    const std::size_t n = model.trunk_size();
    if (n == 0 || grads.size() < 2) return;
    std::vector<double> total(n, 0.0);
    for (const ParamVector* g : grads) {
        for (std::size_t p = 0; p < n; ++p) total[p] += (*g)[p];
    }
    for (ParamVector* g : grads) std::copy(total.begin(), total.end(), g->begin());
}

}  // namespace fedrc
