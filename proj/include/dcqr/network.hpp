#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dcqr/random.hpp"

namespace dcqr {

enum class Activation { Relu, Sigmoid, HardSigmoid, Tanh, Selu };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

inline constexpr double kSeluLambda = 1.05070098;
inline constexpr double kSeluAlpha = 1.67326324;

double activation_eval(Activation kind, double u);
// Subgradient 0 at the relu and hard_sigmoid kinks.
double activation_deriv(Activation kind, double u);

struct NetworkConfig {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden_layers;  // empty: linear predictor
    Activation activation = Activation::Relu;
    double dropout_rate = 0.0;

    void validate() const;
    std::size_t parameter_count() const;
};

// weights is fan_in x fan_out, so a batch forward is X * W + 1 b'.
struct DenseLayer {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

// Hidden layers in order, output layer last. Gradients and optimizer
// accumulators share this shape.
using ParamSet = std::vector<DenseLayer>;

struct MlpModel {
    NetworkConfig config;
    ParamSet layers;

    const DenseLayer& output_layer() const { return layers.back(); }
    std::size_t hidden_count() const { return layers.size() - 1; }
};

enum class ForwardMode { Train, Infer, McDropout };

struct ForwardCache {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;    // hidden pre-activations
    std::vector<Eigen::MatrixXd> post;   // hidden outputs after activation and dropout
    std::vector<Eigen::MatrixXd> masks;  // empty when dropout is off; entries 0 or 1/(1-rate)
};

struct ForwardResult {
    Eigen::VectorXd log_preds;
    ForwardCache cache;
};

MlpModel init_network(const NetworkConfig& cfg, std::uint64_t seed);

// Dropout masks are drawn from rng in Train and McDropout modes only.
ForwardResult forward(const MlpModel& model, const Eigen::MatrixXd& batch, ForwardMode mode, Rng& rng);

// Infer-mode forward without a cache.
Eigen::VectorXd predict_log(const MlpModel& model, const Eigen::MatrixXd& batch);

// Gradient of the scalar batch loss given its derivative w.r.t. each prediction.
ParamSet backward(const MlpModel& model, const ForwardCache& cache, const Eigen::VectorXd& dloss_dpred);

ParamSet zeros_like(const ParamSet& params);

// Text model file. Kind is "deep" or "linear"; tau/xi and the feature names
// are carried along so predict/evaluate can line up input columns.
struct ModelFile {
    std::string kind = "deep";
    double tau = 0.5;
    double xi = 0.0;
    bool use_huber = true;
    std::vector<std::string> feature_names;
    MlpModel model;
};

void save_model(std::ostream& os, const ModelFile& file);
ModelFile load_model(std::istream& is);
void save_model(const std::string& path, const ModelFile& file);
ModelFile load_model(const std::string& path);

}  // namespace dcqr
