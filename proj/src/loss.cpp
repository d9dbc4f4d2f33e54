#include "dcqr/loss.hpp"

#include <cmath>
#include <string>

#include "dcqr/error.hpp"

namespace dcqr {

void LossConfig::validate() const {
    require(tau > 0.0 && tau < 1.0, ErrorKind::InvalidConfig, "tau must lie in (0, 1)");
    require(xi >= 0.0 && std::isfinite(xi), ErrorKind::InvalidConfig, "xi must be >= 0");
    require(!(use_huber && xi == 0.0), ErrorKind::InvalidConfig, "huber smoothing requires xi > 0");
}

double check(double u, double tau) { return u * (tau - (u <= 0.0 ? 1.0 : 0.0)); }

double check_grad(double u, double tau) { return u > 0.0 ? tau : tau - 1.0; }

namespace {

void require_xi(double xi) {
    require(xi > 0.0, ErrorKind::InvalidConfig, "huber_check: xi must be > 0");
}

double huber(double u, double xi) {
    const double a = std::abs(u);
    return a <= xi ? 0.5 * u * u / xi : a - 0.5 * xi;
}

double huber_deriv(double u, double xi) {
    if (std::abs(u) <= xi) return u / xi;
    return u > 0.0 ? 1.0 : -1.0;
}

}  // namespace

double huber_check(double u, double tau, double xi) {
    require_xi(xi);
    return (u >= 0.0 ? tau : 1.0 - tau) * huber(u, xi);
}

double huber_check_grad(double u, double tau, double xi) {
    require_xi(xi);
    return (u >= 0.0 ? tau : 1.0 - tau) * huber_deriv(u, xi);
}

double residual_loss(double u, const LossConfig& cfg) {
    return cfg.use_huber ? huber_check(u, cfg.tau, cfg.xi) : check(u, cfg.tau);
}

double residual_loss_grad(double u, const LossConfig& cfg) {
    return cfg.use_huber ? huber_check_grad(u, cfg.tau, cfg.xi) : check_grad(u, cfg.tau);
}

double weighted_loss(std::span<const double> log_times, std::span<const double> log_preds,
                     std::span<const double> weights, const LossConfig& cfg) {
    if (log_times.size() != log_preds.size() || log_times.size() != weights.size())
        fail(ErrorKind::InvalidInput, "weighted_loss: length mismatch (" +
                                          std::to_string(log_times.size()) + ", " +
                                          std::to_string(log_preds.size()) + ", " +
                                          std::to_string(weights.size()) + ")");
    double total = 0.0;
    for (std::size_t i = 0; i < log_times.size(); ++i) {
        if (!std::isfinite(log_times[i]))
            fail(ErrorKind::InvalidInput, "weighted_loss: observed time must be positive");
        if (weights[i] == 0.0) continue;
        total += weights[i] * residual_loss(log_times[i] - log_preds[i], cfg);
    }
    return total;
}

}  // namespace dcqr
