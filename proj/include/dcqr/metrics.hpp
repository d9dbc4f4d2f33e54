#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>

#include "dcqr/survival.hpp"

namespace dcqr {

struct CIndex {
    double value = 0.0;
    std::size_t n_comparable = 0;
};

// Harrell's C for quantile predictions: (i, j) is comparable when
// Y_i < Y_j and event_i = 1, concordant when pred_i < pred_j, and prediction
// ties count one half. Predictions may be on any strictly increasing scale.
// Throws UndefinedMetric when no pair is comparable.
CIndex c_index(const Dataset& data, std::span<const double> preds);

// Mean squared log residual over event rows only.
double mmse(const Dataset& data, std::span<const double> log_preds);

struct QuantileLoss {
    double value = 0.0;
    bool no_events = false;  // all weights vanished; value is 0
};

// (1/n) sum_i w_i rho_tau(log min(Y_i, cap_u) - log_pred_i), plain check
// function, weights from the evaluation set's own censoring KM.
QuantileLoss quantile_loss(const Dataset& data, std::span<const double> log_preds, double tau, double cap_u);

// 95th percentile (linear interpolation) of the observed times.
double default_cap_u(const Dataset& data);

struct MetricsReport {
    std::optional<double> c_index;  // nullopt when undefined
    std::optional<double> mmse;
    double quantile_loss = 0.0;
    std::size_t n_comparable_pairs = 0;
    std::size_t n_events = 0;
    double tau = 0.5;
    double cap_u = 0.0;
};

MetricsReport evaluate_predictions(const Dataset& data, std::span<const double> log_preds, double tau,
                                   std::optional<double> cap_u = std::nullopt);

void write_metrics_csv(std::ostream& os, const MetricsReport& report);
void print_metrics_table(std::ostream& os, const MetricsReport& report);

}  // namespace dcqr
