#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "dcqr/loss.hpp"
#include "dcqr/network.hpp"
#include "dcqr/survival.hpp"

namespace dcqr {

enum class OptimizerKind { Sgd, Adam, Adadelta, Adamax };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind k);

// Learning rate used when none is given: sgd 1e-2, adam/adamax 1e-3,
// adadelta 1 (a pure multiplier on its own step).
double default_learning_rate(OptimizerKind k);

struct OptimizerParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double rho = 0.95;                // adadelta decay
    double adadelta_epsilon = 1e-6;
};

struct OptimizerState {
    ParamSet first;   // adam/adamax: first moment; adadelta: E[g^2]
    ParamSet second;  // adam: second moment; adamax: infinity norm; adadelta: E[dx^2]
    std::uint64_t step = 0;
};

OptimizerState init_optimizer_state(const ParamSet& params);

// Updates params and state in place. Throws Numeric if any gradient entry
// is non-finite, naming the offending block.
void optimizer_step(OptimizerKind kind, const OptimizerParams& hp, OptimizerState& state, ParamSet& params,
                    const ParamSet& grads, double lr);

struct TrainConfig {
    LossConfig loss;
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::optional<double> learning_rate;  // default_learning_rate() when unset
    std::size_t epochs = 500;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    OptimizerParams optimizer_params;

    double lr() const { return learning_rate.value_or(default_learning_rate(optimizer)); }
    void validate(std::size_t n) const;
};

struct TrainLog {
    std::vector<double> epoch_loss;  // mean weighted loss per observation
    double final_loss() const { return epoch_loss.empty() ? 0.0 : epoch_loss.back(); }
};

void write_train_log_csv(std::ostream& os, const TrainLog& log);

struct TrainResult {
    MlpModel model;
    TrainLog log;
};

// Mini-batch training on the IPCW-weighted loss. Weights come from the
// censoring KM of the whole training set.
TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& cfg);

// Same loop with caller-supplied observation weights.
TrainResult train_weighted(MlpModel model, const Dataset& data, std::span<const double> weights,
                           const TrainConfig& cfg);

}  // namespace dcqr
