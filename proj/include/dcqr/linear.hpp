#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcqr/loss.hpp"
#include "dcqr/network.hpp"
#include "dcqr/survival.hpp"
#include "dcqr/training.hpp"

namespace dcqr {

// Censored linear quantile regression on the log-time scale:
// log Q(tau | x) = b0 + b'x.
struct LinearModel {
    std::vector<double> coefficients;  // intercept first, length p + 1
};

struct LinearFitConfig {
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::optional<double> learning_rate = 0.01;
    std::size_t epochs = 3000;
    std::uint64_t seed = 0;
};

// The training-loop settings fit_linear_cqr uses: full batch, one step per epoch.
TrainConfig linear_train_config(const LossConfig& loss, const LinearFitConfig& opt, std::size_t n);

// Minimizes sum_i w_i rho(log Y_i - b'(1, x_i)) with IPCW weights, by
// full-batch descent on a network with no hidden layers.
LinearModel fit_linear_cqr(const Dataset& data, const LossConfig& loss, const LinearFitConfig& opt);

double predict_linear_log(const LinearModel& model, std::span<const double> x);
double predict_linear(const LinearModel& model, std::span<const double> x);

MlpModel to_network(const LinearModel& model);
LinearModel from_network(const MlpModel& model);

void write_coefficients_csv(std::ostream& os, const LinearModel& model, const std::vector<std::string>& feature_names);

}  // namespace dcqr
